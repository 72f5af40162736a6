#include "mtpp/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "mtpp/error.hpp"
#include "mtpp/parallel.hpp"
#include "mtpp/rng.hpp"
#include "mtpp/sim.hpp"

namespace mtpp {

namespace {

constexpr double kEtaClip = 700.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::Index off(const DesignSpec& spec, int mark) { return static_cast<Eigen::Index>(spec.mark_offset(mark)); }
Eigen::Index width(const DesignSpec& spec, int mark) { return static_cast<Eigen::Index>(spec.mark_width(mark)); }

void check_beta(const CompositeModel& m, const Eigen::VectorXd& beta) {
    if (static_cast<std::size_t>(beta.size()) != m.p()) {
        throw Error(ErrorCode::InvalidArgument,
                    "coefficient vector has " + std::to_string(beta.size()) + " entries, model has " +
                        std::to_string(m.p()));
    }
    if (!beta.allFinite()) throw Error(ErrorCode::InvalidArgument, "coefficient vector is not finite");
}

}  // namespace

Eigen::VectorXd CompositeModel::eta(int mark, const Eigen::VectorXd& beta) const {
    Eigen::VectorXd e = z[mark - 1] * beta.segment(off(spec, mark), width(spec, mark));
    bool clipped = false;
    for (Eigen::Index j = 0; j < e.size(); ++j) {
        if (e[j] > kEtaClip || e[j] < -kEtaClip) {
            e[j] = std::clamp(e[j], -kEtaClip, kEtaClip);
            clipped = true;
        }
    }
    if (clipped) warn("ClippedPredictor: linear predictor of mark " + std::to_string(mark) + " clipped at ±700");
    return e;
}

CompositeModel make_model(const CountMatrix& counts, const RegionDesign& design, const DesignSpec& spec) {
    if (design.mark_count() != spec.mark_count() || counts.rows() != spec.mark_count()) {
        throw Error(ErrorCode::InvalidArgument, "counts, design and spec disagree on the number of marks");
    }
    if (static_cast<std::size_t>(counts.cols()) != design.regions()) {
        throw Error(ErrorCode::InvalidArgument, "counts and design disagree on the number of regions");
    }
    for (std::size_t j = 0; j < design.regions(); ++j) {
        if (design.population[static_cast<Eigen::Index>(j)] > 0.0) continue;
        for (Eigen::Index i = 0; i < counts.rows(); ++i) {
            if (counts(i, static_cast<Eigen::Index>(j)) > 0) {
                throw Error(ErrorCode::InconsistentData, "region " + std::to_string(design.region_ids[j]) +
                                                             " has zero population but holds points of mark " +
                                                             std::to_string(i + 1));
            }
        }
    }
    CompositeModel m;
    m.spec = spec;
    m.z = design.z;
    m.population = design.population;
    m.area = design.area;
    m.counts = counts.cast<double>();
    m.region_ids = design.region_ids;
    return m;
}

CompositeModel make_model(const MarkedPointPattern& pattern, const RegionSet& regions, const DesignSpec& spec,
                          const DesignOptions& options) {
    if (pattern.mark_count() != spec.mark_count()) {
        throw Error(ErrorCode::InvalidArgument, "pattern has " + std::to_string(pattern.mark_count()) +
                                                    " marks, design has " + std::to_string(spec.mark_count()));
    }
    return make_model(aggregate_counts(pattern, regions), build_design(regions, spec, options), spec);
}

double loglik(const CompositeModel& m, const Eigen::VectorXd& beta) {
    check_beta(m, beta);
    double total = 0.0;
    for (int i = 1; i <= m.marks(); ++i) {
        const Eigen::VectorXd e = m.eta(i, beta);
        total += m.counts.row(i - 1).dot(e) - m.population.dot(e.array().exp().matrix());
    }
    return total;
}

double poisson_regression_loglik(const CompositeModel& m, const Eigen::VectorXd& beta) {
    check_beta(m, beta);
    double total = 0.0;
    for (int i = 1; i <= m.marks(); ++i) {
        const Eigen::VectorXd e = m.eta(i, beta);
        for (std::size_t j = 0; j < m.regions(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            const double n = m.counts(i - 1, jj);
            const double mu = m.population[jj] * std::exp(e[jj]);
            if (n > 0.0) total += n * (std::log(m.population[jj]) + e[jj]);
            total -= mu;
        }
    }
    return total;
}

ScoreSensitivity score_and_sensitivity(const CompositeModel& m, const Eigen::VectorXd& beta) {
    check_beta(m, beta);
    const auto p = static_cast<Eigen::Index>(m.p());
    ScoreSensitivity out{Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Zero(p, p)};
    for (int i = 1; i <= m.marks(); ++i) {
        const Eigen::VectorXd w = m.population.array() * m.eta(i, beta).array().exp();
        const auto& Z = m.z[i - 1];
        const Eigen::Index o = off(m.spec, i);
        const Eigen::Index b = width(m.spec, i);
        out.gradient.segment(o, b) = Z.transpose() * (m.counts.row(i - 1).transpose() - w);
        out.sensitivity.block(o, o, b, b) = Z.transpose() * w.asDiagonal() * Z;
    }
    return out;
}

Eigen::VectorXd mean_count(const CompositeModel& m, const Eigen::VectorXd& beta) {
    check_beta(m, beta);
    Eigen::VectorXd out(m.marks());
    for (int i = 1; i <= m.marks(); ++i) out[i - 1] = m.population.dot(m.eta(i, beta).array().exp().matrix());
    return out;
}

// ---------------------------------------------------------------------------
// Unpenalized fit

namespace {

std::vector<Eigen::Index> support_indices(const CompositeModel& m, const std::vector<bool>& support) {
    if (!support.empty() && support.size() != m.p()) {
        throw Error(ErrorCode::InvalidArgument, "support mask has the wrong length");
    }
    std::vector<Eigen::Index> idx;
    for (std::size_t l = 0; l < m.p(); ++l)
        if (support.empty() || support[l]) idx.push_back(static_cast<Eigen::Index>(l));
    return idx;
}

void check_rank(const CompositeModel& m, const std::vector<Eigen::Index>& idx) {
    for (int i = 1; i <= m.marks(); ++i) {
        std::vector<Eigen::Index> cols;
        for (auto l : idx)
            if (m.spec.mark_of(static_cast<std::size_t>(l)) == i) cols.push_back(l - off(m.spec, i));
        if (cols.empty()) continue;
        std::vector<Eigen::Index> rows;
        for (std::size_t j = 0; j < m.regions(); ++j)
            if (m.population[static_cast<Eigen::Index>(j)] > 0.0) rows.push_back(static_cast<Eigen::Index>(j));
        Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t a = 0; a < rows.size(); ++a)
            for (std::size_t b = 0; b < cols.size(); ++b) X(a, b) = m.z[i - 1](rows[a], cols[b]);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        qr.setThreshold(1e-10);
        if (qr.rank() < static_cast<Eigen::Index>(cols.size())) {
            throw Error(ErrorCode::RankDeficientDesign,
                        "design of mark " + std::to_string(i) + " has rank " + std::to_string(qr.rank()) + " < " +
                            std::to_string(cols.size()) + " on populated regions");
        }
    }
}

}  // namespace

Eigen::VectorXd fit_unpenalized(const CompositeModel& m, const UnpenalizedOptions& options) {
    const auto idx = support_indices(m, options.support);
    check_rank(m, idx);
    const auto p = static_cast<Eigen::Index>(m.p());
    const double scale = 1.0 + m.total_count();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (int i = 1; i <= m.marks(); ++i) {
        const Eigen::Index o = off(m.spec, i);
        const bool free = options.support.empty() || options.support[static_cast<std::size_t>(o)];
        if (!free) continue;
        const double n = m.counts.row(i - 1).sum();
        const double nu = m.population.sum();
        if (!(n > 0.0) || !(nu > 0.0)) {
            throw Error(ErrorCode::DegenerateFit, "mark " + std::to_string(i) + " has no points to fit");
        }
        beta[o] = std::log(n / nu);
    }
    const auto k = static_cast<Eigen::Index>(idx.size());
    double ll = loglik(m, beta);
    for (int iter = 0; iter < options.max_iter; ++iter) {
        const auto ss = score_and_sensitivity(m, beta);
        Eigen::VectorXd g(k);
        Eigen::MatrixXd H(k, k);
        for (Eigen::Index a = 0; a < k; ++a) {
            g[a] = ss.gradient[idx[a]];
            for (Eigen::Index b = 0; b < k; ++b) H(a, b) = ss.sensitivity(idx[a], idx[b]);
        }
        if (k == 0 || g.lpNorm<Eigen::Infinity>() / scale < options.tol) return beta;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw Error(ErrorCode::RankDeficientDesign, "sensitivity matrix is not positive definite");
        }
        const Eigen::VectorXd d = ldlt.solve(g);
        double t = 1.0;
        for (;;) {
            Eigen::VectorXd trial = beta;
            for (Eigen::Index a = 0; a < k; ++a) trial[idx[a]] += t * d[a];
            const double trial_ll = loglik(m, trial);
            if (trial_ll >= ll - 1e-12 * (1.0 + std::abs(ll)) || t < 1e-10) {
                beta = trial;
                ll = trial_ll;
                break;
            }
            t *= 0.5;
        }
    }
    const auto ss = score_and_sensitivity(m, beta);
    double worst = 0.0;
    for (auto l : idx) worst = std::max(worst, std::abs(ss.gradient[l]));
    if (worst / scale < options.tol) return beta;
    throw Error(ErrorCode::NonConvergence, "Newton iterations did not converge in " +
                                               std::to_string(options.max_iter) + " steps (gradient " +
                                               std::to_string(worst / scale) + ")");
}

// ---------------------------------------------------------------------------
// Penalty

PenaltyWeights PenaltyWeights::scaled(double new_lambda) const {
    if (!(new_lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
    PenaltyWeights out = *this;
    const double f = lambda > 0.0 ? new_lambda / lambda : 0.0;
    auto rescale = [&](Eigen::VectorXd& v) {
        for (Eigen::Index l = 0; l < v.size(); ++l)
            if (std::isfinite(v[l])) v[l] *= f;
    };
    if (lambda > 0.0) {
        rescale(out.coefficient);
        rescale(out.group);
    }
    out.lambda = new_lambda;
    return out;
}

PenaltyWeights make_weights(const Eigen::VectorXd& beta_no, const DesignSpec& spec, double lambda, double alpha) {
    if (static_cast<std::size_t>(beta_no.size()) != spec.size()) {
        throw Error(ErrorCode::InvalidArgument, "preliminary estimate has the wrong length");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0, 1]");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
    PenaltyWeights w;
    w.lambda = lambda;
    w.alpha = alpha;
    w.coefficient = Eigen::VectorXd::Zero(beta_no.size());
    w.group = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.groups().size()));
    for (std::size_t l = 0; l < spec.size(); ++l) {
        if (!spec.penalized(l)) continue;
        const double a = std::abs(beta_no[static_cast<Eigen::Index>(l)]);
        w.coefficient[static_cast<Eigen::Index>(l)] = alpha * lambda == 0.0 ? 0.0 : (a > 0.0 ? alpha * lambda / a : kInf);
    }
    for (std::size_t g = 0; g < spec.groups().size(); ++g) {
        double nrm = 0.0;
        for (auto l : spec.groups()[g].indices) nrm += beta_no[static_cast<Eigen::Index>(l)] * beta_no[static_cast<Eigen::Index>(l)];
        nrm = std::sqrt(nrm);
        const double c = (1.0 - alpha) * lambda;
        w.group[static_cast<Eigen::Index>(g)] = c == 0.0 ? 0.0 : (nrm > 0.0 ? c / nrm : kInf);
        if (nrm == 0.0 && lambda > 0.0) {
            for (auto l : spec.groups()[g].indices) w.coefficient[static_cast<Eigen::Index>(l)] = kInf;
        }
    }
    return w;
}

namespace {

double soft(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

bool pinned(const PenaltyWeights& w, const DesignSpec& spec, std::size_t l) {
    if (std::isinf(w.coefficient[static_cast<Eigen::Index>(l)])) return true;
    const auto g = spec.group_of(l);
    return g && std::isinf(w.group[static_cast<Eigen::Index>(*g)]);
}

void check_weights(const PenaltyWeights& w, const DesignSpec& spec) {
    if (static_cast<std::size_t>(w.coefficient.size()) != spec.size() ||
        static_cast<std::size_t>(w.group.size()) != spec.groups().size()) {
        throw Error(ErrorCode::InvalidArgument, "penalty weights do not match the design");
    }
    for (Eigen::Index l = 0; l < w.coefficient.size(); ++l)
        if (!(w.coefficient[l] >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative penalty weight");
    for (Eigen::Index g = 0; g < w.group.size(); ++g)
        if (!(w.group[g] >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative group weight");
}

/// Optimality violation of min f + penalty given s = -∇f (absolute).
double kkt_violation(const Eigen::VectorXd& s, const PenaltyWeights& w, const DesignSpec& spec,
                     const Eigen::VectorXd& beta) {
    double worst = 0.0;
    const std::size_t p = spec.size();
    for (std::size_t l = 0; l < p; ++l) {
        const auto L = static_cast<Eigen::Index>(l);
        if (pinned(w, spec, l) || spec.group_of(l)) continue;
        const double lam = w.coefficient[L];
        if (beta[L] != 0.0)
            worst = std::max(worst, std::abs(s[L] - lam * (beta[L] > 0 ? 1.0 : -1.0)));
        else
            worst = std::max(worst, std::max(0.0, std::abs(s[L]) - lam));
    }
    for (std::size_t g = 0; g < spec.groups().size(); ++g) {
        const double lg = w.group[static_cast<Eigen::Index>(g)];
        if (std::isinf(lg)) continue;
        const auto& ids = spec.groups()[g].indices;
        double nrm = 0.0;
        for (auto l : ids) nrm += beta[static_cast<Eigen::Index>(l)] * beta[static_cast<Eigen::Index>(l)];
        nrm = std::sqrt(nrm);
        if (nrm > 0.0) {
            for (auto l : ids) {
                const auto L = static_cast<Eigen::Index>(l);
                if (std::isinf(w.coefficient[L])) continue;
                const double lam = w.coefficient[L];
                if (beta[L] != 0.0)
                    worst = std::max(worst,
                                     std::abs(s[L] - lam * (beta[L] > 0 ? 1.0 : -1.0) - lg * beta[L] / nrm));
                else
                    worst = std::max(worst, std::max(0.0, std::abs(s[L]) - lam));
            }
        } else {
            double t = 0.0;
            for (auto l : ids) {
                const auto L = static_cast<Eigen::Index>(l);
                if (std::isinf(w.coefficient[L])) continue;
                const double v = soft(s[L], w.coefficient[L]);
                t += v * v;
            }
            worst = std::max(worst, std::max(0.0, std::sqrt(t) - lg));
        }
    }
    return worst;
}

}  // namespace

double penalty(const PenaltyWeights& w, const DesignSpec& spec, const Eigen::VectorXd& beta) {
    double total = 0.0;
    for (std::size_t l = 0; l < spec.size(); ++l) {
        const auto L = static_cast<Eigen::Index>(l);
        if (beta[L] == 0.0) continue;
        if (pinned(w, spec, l)) return kInf;
        total += w.coefficient[L] * std::abs(beta[L]);
    }
    for (std::size_t g = 0; g < spec.groups().size(); ++g) {
        const double lg = w.group[static_cast<Eigen::Index>(g)];
        double nrm = 0.0;
        for (auto l : spec.groups()[g].indices) nrm += beta[static_cast<Eigen::Index>(l)] * beta[static_cast<Eigen::Index>(l)];
        if (nrm > 0.0) total += lg * std::sqrt(nrm);
    }
    return total;
}

Eigen::VectorXd sgl_prox(const Eigen::VectorXd& v, const PenaltyWeights& w, const DesignSpec& spec, double t) {
    Eigen::VectorXd out = v;
    for (std::size_t l = 0; l < spec.size(); ++l) {
        const auto L = static_cast<Eigen::Index>(l);
        if (pinned(w, spec, l))
            out[L] = 0.0;
        else if (w.coefficient[L] > 0.0)
            out[L] = soft(v[L], t * w.coefficient[L]);
    }
    for (std::size_t g = 0; g < spec.groups().size(); ++g) {
        const double lg = t * w.group[static_cast<Eigen::Index>(g)];
        if (lg == 0.0 || std::isinf(lg)) continue;
        const auto& ids = spec.groups()[g].indices;
        double nrm = 0.0;
        for (auto l : ids) nrm += out[static_cast<Eigen::Index>(l)] * out[static_cast<Eigen::Index>(l)];
        nrm = std::sqrt(nrm);
        const double f = nrm > lg ? 1.0 - lg / nrm : 0.0;
        for (auto l : ids) out[static_cast<Eigen::Index>(l)] *= f;
    }
    return out;
}

double sgl_kkt_residual(const CompositeModel& m, const PenaltyWeights& w, const Eigen::VectorXd& beta) {
    check_weights(w, m.spec);
    const auto ss = score_and_sensitivity(m, beta);
    return kkt_violation(ss.gradient, w, m.spec, beta) / (1.0 + m.total_count());
}

SolverResult sgl_solve(const CompositeModel& m, const PenaltyWeights& w, const Eigen::VectorXd& beta_init,
                       const SolverOptions& options) {
    check_weights(w, m.spec);
    check_beta(m, beta_init);
    const DesignSpec& spec = m.spec;
    const double scale = 1.0 + m.total_count();
    const double tol_abs = options.tol * scale;

    Eigen::VectorXd beta = beta_init;
    for (std::size_t l = 0; l < spec.size(); ++l)
        if (pinned(w, spec, l)) beta[static_cast<Eigen::Index>(l)] = 0.0;
    auto objective = [&](const Eigen::VectorXd& b) { return -loglik(m, b) + penalty(w, spec, b); };
    double F = objective(beta);

    SolverResult res;
    for (int iter = 0; iter < options.max_iter; ++iter) {
        const auto ss = score_and_sensitivity(m, beta);
        const double violation = kkt_violation(ss.gradient, w, spec, beta);
        res.iterations = iter;
        if (violation < tol_abs) {
            res.beta = beta;
            res.objective = F;
            res.kkt = violation / scale;
            return res;
        }
        const Eigen::VectorXd grad = -ss.gradient;
        const Eigen::MatrixXd& H = ss.sensitivity;
        const double L = std::max(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H, Eigen::EigenvaluesOnly)
                                      .eigenvalues()
                                      .maxCoeff(),
                                  1e-12);
        const double inner_tol = std::max(0.2 * tol_abs, 0.05 * violation);

        // accelerated proximal gradient on the local quadratic model
        Eigen::VectorXd x = beta, y = beta;
        double tk = 1.0;
        for (int inner = 0; inner < options.max_inner_iter; ++inner) {
            const Eigen::VectorXd gq = grad + H * (y - beta);
            const Eigen::VectorXd x_new = sgl_prox(y - gq / L, w, spec, 1.0 / L);
            if ((y - x_new).dot(x_new - x) > 0.0) {
                x = x_new;
                y = x_new;
                tk = 1.0;
            } else {
                const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
                y = x_new + ((tk - 1.0) / t_new) * (x_new - x);
                x = x_new;
                tk = t_new;
            }
            if (inner % 10 == 9) {
                const Eigen::VectorXd sq = -(grad + H * (x - beta));
                if (kkt_violation(sq, w, spec, x) < inner_tol) break;
            }
        }

        const Eigen::VectorXd d = x - beta;
        const double pen_beta = penalty(w, spec, beta);
        const double decrease = grad.dot(d) + penalty(w, spec, x) - pen_beta;
        double t = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            const Eigen::VectorXd trial = t == 1.0 ? x : Eigen::VectorXd(beta + t * d);
            const double Ft = objective(trial);
            if (Ft <= F + 1e-4 * t * std::min(decrease, 0.0) + 1e-13 * (1.0 + std::abs(F))) {
                beta = trial;
                F = Ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
    }
    const auto ss = score_and_sensitivity(m, beta);
    const double violation = kkt_violation(ss.gradient, w, spec, beta);
    if (violation < tol_abs) {
        res.beta = beta;
        res.objective = F;
        res.kkt = violation / scale;
        return res;
    }
    throw Error(ErrorCode::NonConvergence, "sparse group lasso stopped with KKT residual " +
                                               std::to_string(violation / scale) + " > " +
                                               std::to_string(options.tol));
}

Eigen::VectorXd null_fit(const CompositeModel& m, const UnpenalizedOptions& options) {
    UnpenalizedOptions o = options;
    o.support.assign(m.p(), false);
    for (std::size_t l = 0; l < m.p(); ++l) o.support[l] = !m.spec.penalized(l);
    return fit_unpenalized(m, o);
}

double lambda_max(const CompositeModel& m, const PenaltyWeights& unit) {
    check_weights(unit, m.spec);
    const DesignSpec& spec = m.spec;
    const Eigen::VectorXd beta0 = null_fit(m);
    const Eigen::VectorXd s = score_and_sensitivity(m, beta0).gradient;
    double best = 0.0;
    for (std::size_t l = 0; l < spec.size(); ++l) {
        const auto L = static_cast<Eigen::Index>(l);
        if (!spec.penalized(l) || spec.group_of(l) || pinned(unit, spec, l) || s[L] == 0.0) continue;
        if (unit.coefficient[L] <= 0.0) throw Error(ErrorCode::InvalidArgument, "penalized coefficient with zero weight");
        best = std::max(best, std::abs(s[L]) / unit.coefficient[L]);
    }
    for (std::size_t g = 0; g < spec.groups().size(); ++g) {
        const double wg = unit.group[static_cast<Eigen::Index>(g)];
        if (std::isinf(wg)) continue;
        std::vector<std::pair<double, double>> sa;  // (|s_l|, a_l)
        double snorm = 0.0, hi_coef = 0.0;
        for (auto l : spec.groups()[g].indices) {
            const auto L = static_cast<Eigen::Index>(l);
            if (std::isinf(unit.coefficient[L])) continue;
            sa.emplace_back(std::abs(s[L]), unit.coefficient[L]);
            snorm += s[L] * s[L];
            if (s[L] != 0.0) {
                hi_coef = unit.coefficient[L] > 0.0 ? std::max(hi_coef, std::abs(s[L]) / unit.coefficient[L]) : kInf;
            }
        }
        snorm = std::sqrt(snorm);
        if (snorm == 0.0) continue;
        auto excess = [&](double lam) {
            double t = 0.0;
            for (const auto& [sv, a] : sa) {
                const double v = std::max(0.0, sv - lam * a);
                t += v * v;
            }
            return std::sqrt(t) - lam * wg;
        };
        double hi = wg > 0.0 ? snorm / wg : hi_coef;
        if (std::isinf(hi)) throw Error(ErrorCode::InvalidArgument, "group " + spec.groups()[g].name + " is never zeroed");
        double lo = 0.0;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (excess(mid) <= 0.0 ? hi : lo) = mid;
        }
        best = std::max(best, hi);
    }
    return best;
}

PathResult bic_path(const CompositeModel& m, const PathOptions& options) {
    return bic_path(m, fit_unpenalized(m), options);
}

PathResult bic_path(const CompositeModel& m, const Eigen::VectorXd& beta_no, const PathOptions& options) {
    PathResult out;
    out.beta_no = beta_no;
    out.unit_weights = make_weights(beta_no, m.spec, 1.0, options.alpha);
    out.lambda_max = lambda_max(m, out.unit_weights);

    std::vector<double> grid = options.lambda_grid;
    if (grid.empty()) {
        const std::size_t n = std::max<std::size_t>(options.n_lambda, 1);
        for (std::size_t k = 0; k < n; ++k) {
            const double f = n == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n - 1);
            grid.push_back(out.lambda_max * std::pow(options.min_ratio, f));
        }
    }
    for (std::size_t k = 1; k < grid.size(); ++k) {
        if (!(grid[k] < grid[k - 1])) throw Error(ErrorCode::InvalidArgument, "lambda grid must be decreasing");
    }
    const double n_bic = options.sample_size.value_or(m.total_count());
    if (!(n_bic > 0.0)) throw Error(ErrorCode::DegenerateFit, "BIC needs a positive sample size");
    const double log_n = std::log(n_bic);

    Eigen::VectorXd warm = null_fit(m);
    for (double lam : grid) {
        const auto w = out.unit_weights.scaled(lam);
        const auto sol = sgl_solve(m, w, warm, options.solver);
        warm = sol.beta;
        PathRecord rec;
        rec.lambda = lam;
        rec.beta = sol.beta;
        rec.df = static_cast<std::size_t>((sol.beta.array() != 0.0).count());
        rec.loglik = loglik(m, sol.beta);
        rec.bic = -2.0 * rec.loglik + static_cast<double>(rec.df) * log_n;
        rec.kkt = sol.kkt;
        out.records.push_back(std::move(rec));
    }
    for (std::size_t k = 1; k < out.records.size(); ++k)
        if (out.records[k].bic < out.records[out.best].bic) out.best = k;
    return out;
}

// ---------------------------------------------------------------------------
// Split, covariance, prediction

SplitPatterns split_pattern(const MarkedPointPattern& pattern, const SplitSpec& split) {
    const double f = split.training_fraction;
    if (!(f > 0.0 && f < 1.0)) throw Error(ErrorCode::InvalidArgument, "training fraction must lie in (0, 1)");
    Philox rng(split.seed, split.stream);
    SplitPatterns out;
    out.in_training.resize(pattern.size());
    std::vector<Point> tp, vp;
    std::vector<int> tm, vm;
    for (std::size_t k = 0; k < pattern.size(); ++k) {
        const bool train = rng.uniform() < f;
        out.in_training[k] = train;
        (train ? tp : vp).push_back(pattern.points()[k]);
        (train ? tm : vm).push_back(pattern.marks()[k]);
    }
    out.training = MarkedPointPattern(std::move(tp), std::move(tm), pattern.mark_count(), pattern.window());
    out.validation = MarkedPointPattern(std::move(vp), std::move(vm), pattern.mark_count(), pattern.window());
    return out;
}

PairDistanceTable::PairDistanceTable(const RegionSet& regions, double range, int quadrature) : range_(range) {
    if (!(range >= 0.0)) throw Error(ErrorCode::InvalidArgument, "range must be >= 0");
    if (quadrature < 1) throw Error(ErrorCode::InvalidArgument, "quadrature must be >= 1");
    const std::size_t J = regions.size();
    struct Nodes {
        std::vector<Point> pts;
        double weight = 0.0;
    };
    std::vector<Nodes> nodes(J);
    for (std::size_t j = 0; j < J; ++j) {
        const auto& shape = regions[j].boundary;
        const BBox& b = shape.bbox();
        const double dx = b.width() / quadrature;
        const double dy = b.height() / quadrature;
        for (int iy = 0; iy < quadrature; ++iy)
            for (int ix = 0; ix < quadrature; ++ix) {
                const Point c{b.xmin + (ix + 0.5) * dx, b.ymin + (iy + 0.5) * dy};
                if (shape.contains(c)) nodes[j].pts.push_back(c);
            }
        if (nodes[j].pts.empty()) nodes[j].pts.push_back({0.5 * (b.xmin + b.xmax), 0.5 * (b.ymin + b.ymax)});
        nodes[j].weight = regions[j].area / static_cast<double>(nodes[j].pts.size());
    }
    table_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(J));
    if (range == 0.0) return;
    const double r2 = range * range;
    parallel_for(J, [&](std::size_t j) {
        const BBox& bj = regions[j].boundary.bbox();
        for (std::size_t k = j; k < J; ++k) {
            const BBox& bk = regions[k].boundary.bbox();
            const double gx = std::max({0.0, bj.xmin - bk.xmax, bk.xmin - bj.xmax});
            const double gy = std::max({0.0, bj.ymin - bk.ymax, bk.ymin - bj.ymax});
            if (gx * gx + gy * gy > r2) continue;
            std::size_t hits = 0;
            for (const auto& a : nodes[j].pts)
                for (const auto& c : nodes[k].pts) {
                    const double ex = a.x - c.x;
                    const double ey = a.y - c.y;
                    if (ex * ex + ey * ey <= r2) ++hits;
                }
            table_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
                static_cast<double>(hits) * nodes[j].weight * nodes[k].weight;
        }
    });
    for (std::size_t j = 0; j < J; ++j)
        for (std::size_t k = 0; k < j; ++k)
            table_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
                table_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
}

std::vector<std::vector<double>> predict_intensity(const CompositeModel& m, const Eigen::VectorXd& beta) {
    check_beta(m, beta);
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.marks()));
    for (int i = 1; i <= m.marks(); ++i) {
        const Eigen::VectorXd e = m.eta(i, beta);
        auto& v = out[static_cast<std::size_t>(i - 1)];
        v.resize(m.regions());
        for (std::size_t j = 0; j < m.regions(); ++j) {
            const auto J = static_cast<Eigen::Index>(j);
            v[j] = m.population[J] / m.area[J] * std::exp(e[J]);
        }
    }
    return out;
}

std::vector<std::vector<double>> predict_intensity(const Eigen::VectorXd& beta, const RegionSet& regions,
                                                   const DesignSpec& spec, const DesignOptions& options) {
    const auto design = build_design(regions, spec, options);
    CountMatrix zero = CountMatrix::Zero(spec.mark_count(), static_cast<Eigen::Index>(regions.size()));
    return predict_intensity(make_model(zero, design, spec), beta);
}

IntensitySurface region_surface(const RegionSet& regions, const std::vector<double>& values, GridSize grid) {
    if (values.size() != regions.size()) throw Error(ErrorCode::InvalidArgument, "need one value per region");
    IntensitySurface s = make_surface(regions.window(), grid);
    for (int iy = 0; iy < s.grid.ny(); ++iy)
        for (int ix = 0; ix < s.grid.nx(); ++ix) {
            const std::size_t c = static_cast<std::size_t>(iy) * s.grid.nx() + ix;
            if (!s.mask[c]) continue;
            const auto j = regions.locate(s.grid.center(ix, iy));
            s.values[c] = j ? values[*j] : 0.0;
        }
    return s;
}

double select_range(const MarkedPointPattern& pattern, const RegionSet& regions,
                    const std::vector<double>& rho_per_region, int mark, const CovarianceOptions& options) {
    const auto pts = pattern.points_of(mark);
    if (pts.size() < 2) return 0.0;
    auto rho_at = [&](const std::vector<Point>& xs) {
        std::vector<double> out(xs.size());
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const auto j = regions.locate(xs[k]);
            if (!j) throw UnlocatedPointError(xs[k], k);
            out[k] = rho_per_region[*j];
        }
        return out;
    };
    const auto r = make_r_grid(default_r_max(pattern.window()));
    const TranslationWeights weights(pattern.window(), r.back());
    auto curve = [&](const MarkedPointPattern& p) {
        const auto xs = p.points_of(mark);
        return center_L(inhom_K(p, mark, rho_at(xs), r, EdgeCorrection::Translation, weights)).value;
    };
    CurveEnsemble e;
    e.r = r;
    e.observed = curve(pattern);
    e.simulated.resize(options.envelope_sims);
    parallel_for(options.envelope_sims, [&](std::size_t k) {
        Philox rng(options.seed, k + 1);
        auto sim = simulate_inhom_poisson(regions, rho_per_region, rng);
        std::vector<int> mk(sim.size(), mark);
        e.simulated[k] = curve(MarkedPointPattern(std::move(sim), std::move(mk), pattern.mark_count(), pattern.window()));
    });
    const auto env = global_envelope(e, options.envelope_level);
    std::size_t t = 0;
    while (t < r.size() && !env.significant[t]) ++t;
    if (t == r.size()) return 0.0;
    while (t < r.size() && env.significant[t]) ++t;
    return t == r.size() ? r.back() : r[t];
}

CovarianceResult covariance(const CompositeModel& m, const Eigen::VectorXd& beta, const std::vector<bool>& support,
                            const CovarianceOptions& options, const MarkedPointPattern* pattern,
                            const RegionSet* regions) {
    const auto idx = support_indices(m, support);
    const auto k = static_cast<Eigen::Index>(idx.size());
    const auto ss = score_and_sensitivity(m, beta);
    Eigen::MatrixXd S(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b) S(a, b) = ss.sensitivity(idx[a], idx[b]);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    const double top = k > 0 ? eig.eigenvalues().maxCoeff() : 0.0;
    if (k > 0 && !(eig.eigenvalues().minCoeff() > 1e-12 * std::max(top, 1.0))) {
        throw Error(ErrorCode::SingularSensitivity, "sensitivity matrix is singular on the support");
    }
    const Eigen::MatrixXd S_inv =
        eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();

    CovarianceResult out;
    out.range.assign(static_cast<std::size_t>(m.marks()), 0.0);
    Eigen::MatrixXd sigma_sub = S_inv;

    if (options.mode == CovarianceMode::SecondOrder) {
        if (!pattern || !regions) {
            throw Error(ErrorCode::InvalidArgument, "second-order covariance needs the pattern and regions");
        }
        const auto rho = predict_intensity(m, beta);
        for (int i = 1; i <= m.marks(); ++i) {
            const auto I = static_cast<std::size_t>(i - 1);
            if (options.range.size() == 1)
                out.range[I] = options.range[0];
            else if (options.range.size() == static_cast<std::size_t>(m.marks()))
                out.range[I] = options.range[I];
            else if (options.range.empty())
                out.range[I] = select_range(*pattern, *regions, rho[I], i, options);
            else
                throw Error(ErrorCode::InvalidArgument, "give one covariance range or one per mark");
            if (!(out.range[I] >= 0.0)) throw Error(ErrorCode::InvalidArgument, "covariance range must be >= 0");
        }

        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
        std::map<double, PairDistanceTable> tables;
        const std::size_t J = m.regions();
        for (int i = 1; i <= m.marks(); ++i) {
            const double R = out.range[static_cast<std::size_t>(i - 1)];
            if (R <= 0.0) continue;
            auto it = tables.find(R);
            if (it == tables.end()) it = tables.emplace(R, PairDistanceTable(*regions, R, options.quadrature)).first;
            const Eigen::MatrixXd& D = it->second.table();

            const auto pts = pattern->points_of(i);
            std::vector<std::size_t> region(pts.size());
            for (std::size_t a = 0; a < pts.size(); ++a) {
                const auto j = regions->locate(pts[a]);
                if (!j) throw UnlocatedPointError(pts[a], a);
                region[a] = *j;
            }
            Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(J));
            const double R2 = R * R;
            for (std::size_t a = 0; a < pts.size(); ++a)
                for (std::size_t b = a + 1; b < pts.size(); ++b) {
                    const double dx = pts[a].x - pts[b].x;
                    const double dy = pts[a].y - pts[b].y;
                    if (dx * dx + dy * dy > R2) continue;
                    P(static_cast<Eigen::Index>(region[a]), static_cast<Eigen::Index>(region[b])) += 1.0;
                    P(static_cast<Eigen::Index>(region[b]), static_cast<Eigen::Index>(region[a])) += 1.0;
                }
            const Eigen::Map<const Eigen::VectorXd> r(rho[static_cast<std::size_t>(i - 1)].data(),
                                                       static_cast<Eigen::Index>(J));
            const Eigen::MatrixXd A = P - r.asDiagonal() * D * r.asDiagonal();

            std::vector<Eigen::Index> pos, col;
            for (Eigen::Index a = 0; a < k; ++a) {
                if (m.spec.mark_of(static_cast<std::size_t>(idx[a])) != i) continue;
                pos.push_back(a);
                col.push_back(idx[a] - off(m.spec, i));
            }
            Eigen::MatrixXd Zs(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(col.size()));
            for (std::size_t c = 0; c < col.size(); ++c) Zs.col(static_cast<Eigen::Index>(c)) = m.z[i - 1].col(col[c]);
            const Eigen::MatrixXd Ti = Zs.transpose() * A * Zs;
            for (std::size_t a = 0; a < pos.size(); ++a)
                for (std::size_t b = 0; b < pos.size(); ++b)
                    T(pos[a], pos[b]) = Ti(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        }
        // T vanishes identically when every range is 0
        const bool zero_range = std::all_of(out.range.begin(), out.range.end(), [](double R) { return R <= 0.0; });
        if (!zero_range) {
            Eigen::MatrixXd middle = S + T;
            middle = 0.5 * (middle + middle.transpose()).eval();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> me(middle);
            Eigen::VectorXd ev = me.eigenvalues();
            for (Eigen::Index a = 0; a < ev.size(); ++a) {
                if (ev[a] < 0.0) {
                    ev[a] = 0.0;
                    ++out.clipped;
                }
            }
            middle = me.eigenvectors() * ev.asDiagonal() * me.eigenvectors().transpose();
            sigma_sub = S_inv * middle * S_inv;
        }
    }
    sigma_sub = 0.5 * (sigma_sub + sigma_sub.transpose()).eval();

    const auto p = static_cast<Eigen::Index>(m.p());
    out.sigma = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b) out.sigma(idx[a], idx[b]) = sigma_sub(a, b);
    return out;
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal(), p);
}

FitResult two_step_fit(const MarkedPointPattern& pattern, const RegionSet& regions, const DesignSpec& spec,
                       const TwoStepOptions& options) {
    if (!(options.level > 0.0 && options.level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0, 1)");
    if (pattern.mark_count() != spec.mark_count()) {
        throw Error(ErrorCode::InvalidArgument, "pattern has " + std::to_string(pattern.mark_count()) +
                                                    " marks, design has " + std::to_string(spec.mark_count()));
    }
    const double f = options.split.training_fraction;
    const auto split = split_pattern(pattern, options.split);
    const auto design = build_design(regions, spec, options.design);

    const auto train = make_model(aggregate_counts(split.training, regions), design.with_population_scale(f), spec);
    FitResult out;
    out.spec = spec;
    out.level = options.level;
    out.mode = options.covariance.mode;
    out.training_points = split.training.size();
    out.validation_points = split.validation.size();

    out.beta_no = fit_unpenalized(train, options.unpenalized);
    const auto path = bic_path(train, out.beta_no, options.path);
    out.path = path.records;
    out.best = path.best;
    out.lambda_max = path.lambda_max;
    out.lambda_star = path.records[path.best].lambda;
    out.beta_penalized = path.records[path.best].beta;
    const auto w = path.unit_weights.scaled(out.lambda_star);
    out.objective = -loglik(train, out.beta_penalized) + penalty(w, spec, out.beta_penalized);
    out.kkt = path.records[path.best].kkt;

    const std::size_t p = spec.size();
    out.selected.assign(p, false);
    for (std::size_t l = 0; l < p; ++l)
        out.selected[l] = !spec.penalized(l) || out.beta_penalized[static_cast<Eigen::Index>(l)] != 0.0;
    out.df = static_cast<std::size_t>(std::count(out.selected.begin(), out.selected.end(), true));

    const auto valid_regions = regions.with_population_scale(1.0 - f);
    const auto valid =
        make_model(aggregate_counts(split.validation, regions), design.with_population_scale(1.0 - f), spec);
    UnpenalizedOptions refit = options.unpenalized;
    refit.support = out.selected;
    out.beta = fit_unpenalized(valid, refit);

    const auto cov = covariance(valid, out.beta, out.selected, options.covariance, &split.validation, &valid_regions);
    out.sigma = cov.sigma;
    out.range = cov.range;
    out.clipped = cov.clipped;
    const double zq = normal_quantile(0.5 * (1.0 + options.level));
    const auto P = static_cast<Eigen::Index>(p);
    out.se = Eigen::VectorXd::Constant(P, std::numeric_limits<double>::quiet_NaN());
    out.ci_lower = out.se;
    out.ci_upper = out.se;
    for (Eigen::Index l = 0; l < P; ++l) {
        if (!out.selected[static_cast<std::size_t>(l)]) continue;
        out.se[l] = std::sqrt(std::max(0.0, out.sigma(l, l)));
        out.ci_lower[l] = out.beta[l] - zq * out.se[l];
        out.ci_upper[l] = out.beta[l] + zq * out.se[l];
    }
    return out;
}

}  // namespace mtpp
