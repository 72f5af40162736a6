#include "mtpp/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mtpp/error.hpp"
#include "mtpp/parallel.hpp"
#include "mtpp/sim.hpp"

namespace mtpp {

namespace {

void check_ensemble(const CurveEnsemble& e) {
    const std::size_t T = e.r.size();
    if (T == 0) throw Error(ErrorCode::GridMismatch, "empty r grid");
    if (e.observed.size() != T) {
        throw Error(ErrorCode::GridMismatch, "observed curve has " + std::to_string(e.observed.size()) +
                                                 " values on a grid of " + std::to_string(T));
    }
    for (std::size_t k = 0; k < e.simulated.size(); ++k) {
        if (e.simulated[k].size() != T) {
            throw Error(ErrorCode::GridMismatch, "simulated curve " + std::to_string(k) + " has " +
                                                     std::to_string(e.simulated[k].size()) + " values");
        }
    }
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!finite(e.observed) || !std::all_of(e.simulated.begin(), e.simulated.end(), finite)) {
        throw Error(ErrorCode::InvalidArgument, "curves must not contain missing or infinite values");
    }
}

const std::vector<double>& curve(const CurveEnsemble& e, std::size_t k) {
    return k == 0 ? e.observed : e.simulated[k - 1];
}

}  // namespace

ErlRanking erl_order(const CurveEnsemble& e) {
    check_ensemble(e);
    if (e.sims() < 1) throw Error(ErrorCode::TooFewSimulations, "need at least one simulated curve");
    const std::size_t n = e.sims() + 1;
    const std::size_t T = e.r.size();

    ErlRanking out;
    out.erl.assign(n, std::vector<int>(T));
    std::vector<double> column(n), sorted(n);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < n; ++k) column[k] = curve(e, k)[t];
        sorted = column;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t k = 0; k < n; ++k) {
            const auto less = std::lower_bound(sorted.begin(), sorted.end(), column[k]) - sorted.begin();
            const auto greater = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), column[k]);
            out.erl[k][t] = static_cast<int>(1 + std::min(less, greater));
        }
    }
    for (auto& v : out.erl) std::sort(v.begin(), v.end());

    out.order.resize(n);
    std::iota(out.order.begin(), out.order.end(), std::size_t{0});
    std::stable_sort(out.order.begin(), out.order.end(),
                     [&](std::size_t a, std::size_t b) { return out.erl[a] < out.erl[b]; });
    out.rank.assign(n, 1);
    for (std::size_t pos = 1; pos < n; ++pos) {
        const std::size_t k = out.order[pos];
        const std::size_t prev = out.order[pos - 1];
        out.rank[k] = out.erl[k] == out.erl[prev] ? out.rank[prev] : pos + 1;
    }
    return out;
}

std::size_t min_simulations(double level) {
    return static_cast<std::size_t>(std::ceil(1.0 / (1.0 - level) - 1e-9)) - 1;
}

EnvelopeResult global_envelope(const CurveEnsemble& e, double level) {
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0, 1)");
    check_ensemble(e);
    const std::size_t need = min_simulations(level);
    if (e.sims() < need || e.sims() < 1) {
        throw Error(ErrorCode::TooFewSimulations, std::to_string(e.sims()) + " simulations given, level " +
                                                      std::to_string(level) + " needs at least " +
                                                      std::to_string(need));
    }
    const auto ranking = erl_order(e);
    const std::size_t n = e.sims() + 1;
    const double budget = (1.0 - level) * static_cast<double>(n) + 1e-9;

    // Critical rank: the least extreme class such that fewer than budget
    // curves are strictly more extreme; only those are dropped.
    std::size_t critical = 1;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t r = ranking.rank[k];
        if (static_cast<double>(r - 1) <= budget) critical = std::max(critical, r);
    }

    EnvelopeResult out;
    out.level = level;
    out.r = e.r;
    out.observed = e.observed;
    const std::size_t T = e.r.size();
    out.lower.assign(T, std::numeric_limits<double>::infinity());
    out.upper.assign(T, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < n; ++k) {
        if (ranking.rank[k] < critical) continue;
        const auto& c = curve(e, k);
        for (std::size_t t = 0; t < T; ++t) {
            out.lower[t] = std::min(out.lower[t], c[t]);
            out.upper[t] = std::max(out.upper[t], c[t]);
        }
    }
    out.significant.resize(T);
    for (std::size_t t = 0; t < T; ++t)
        out.significant[t] = e.observed[t] < out.lower[t] || e.observed[t] > out.upper[t];

    std::size_t strictly = 0, at_least = 0;
    for (std::size_t k = 1; k < n; ++k) {
        if (ranking.erl[k] < ranking.erl[0]) ++strictly;
        if (ranking.erl[k] <= ranking.erl[0]) ++at_least;
    }
    out.p_lower = static_cast<double>(strictly + 1) / static_cast<double>(n);
    out.p_upper = static_cast<double>(at_least + 1) / static_cast<double>(n);
    return out;
}

namespace {

IntensitySurface null_surface(const MarkedPointPattern& pattern, int mark, const IntensityOptions& opt, double h0,
                              GridSize grid) {
    switch (opt.estimator) {
        case IntensityEstimator::Homogeneous: {
            auto s = make_surface(pattern.window(), grid);
            const double lambda = static_cast<double>(pattern.count(mark)) / pattern.window().area();
            for (std::size_t c = 0; c < s.values.size(); ++c)
                if (s.mask[c]) s.values[c] = lambda;
            return s;
        }
        case IntensityEstimator::Kernel:
            return kernel_intensity(pattern, mark, h0, grid);
        case IntensityEstimator::Adaptive:
            return adaptive_intensity(pattern, mark, h0, opt.adaptive, grid);
    }
    return {};
}

std::vector<double> rho_at(const MarkedPointPattern& pattern, int mark, const IntensityOptions& opt) {
    if (pattern.count(mark) == 0) return {};
    auto rho = intensity_at_points(pattern, mark, opt);
    // an isolated point has no leave-one-out mass; keep its own kernel then
    if (opt.leave_one_out && std::any_of(rho.begin(), rho.end(), [](double v) { return !(v > 0.0); })) {
        IntensityOptions with_self = opt;
        with_self.leave_one_out = false;
        rho = intensity_at_points(pattern, mark, with_self);
    }
    return rho;
}

std::vector<double> surface_at(const IntensitySurface& s, const std::vector<Point>& pts) {
    std::vector<double> out(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) out[k] = s.at(pts[k]);
    return out;
}

}  // namespace

EnvelopeTest envelope_test(const MarkedPointPattern& pattern, int mark_a, int mark_b,
                           const EnvelopeTestOptions& options) {
    const int M = pattern.mark_count();
    if (mark_a < 1 || mark_a > M || mark_b < 1 || mark_b > M) {
        throw Error(ErrorCode::InvalidArgument, "marks must lie in 1.." + std::to_string(M));
    }
    if (options.simulations < min_simulations(options.level) || options.simulations < 1) {
        throw Error(ErrorCode::TooFewSimulations, std::to_string(options.simulations) +
                                                      " simulations requested, need at least " +
                                                      std::to_string(min_simulations(options.level)));
    }
    const bool cross = mark_a != mark_b;
    const std::vector<int> marks = cross ? std::vector<int>{mark_a, mark_b} : std::vector<int>{mark_a};

    std::vector<double> r = options.r.empty() ? make_r_grid(default_r_max(pattern.window())) : options.r;
    const TranslationWeights weights(pattern.window(), r.back());

    // Bandwidths are fixed from the observed data so that replicates use the
    // same smoothing.
    std::vector<IntensitySurface> surfaces;
    std::vector<IntensityOptions> per_mark;
    for (int m : marks) {
        IntensityOptions o = options.intensity;
        if (o.estimator != IntensityEstimator::Homogeneous && o.bandwidth <= 0.0)
            o.bandwidth = scott_bandwidth(pattern.points_of(m));
        per_mark.push_back(o);
        surfaces.push_back(null_surface(pattern, m, o, o.bandwidth, options.null_grid));
    }

    auto statistic = [&](const MarkedPointPattern& p, bool observed) {
        std::vector<std::vector<double>> rho(marks.size());
        for (std::size_t q = 0; q < marks.size(); ++q) {
            if (observed || options.reestimate)
                rho[q] = rho_at(p, marks[q], per_mark[q]);
            else
                rho[q] = surface_at(surfaces[q], p.points_of(marks[q]));
        }
        const auto k = cross ? inhom_cross_K(p, mark_a, mark_b, rho[0], rho[1], r, options.correction, weights)
                             : inhom_K(p, mark_a, rho[0], r, options.correction, weights);
        return center_L(k).value;
    };

    EnvelopeTest out;
    out.ensemble.r = r;
    out.ensemble.observed = statistic(pattern, true);
    out.ensemble.simulated.resize(options.simulations);
    parallel_for(options.simulations, [&](std::size_t k) {
        Philox rng(options.seed, k + 1);
        std::vector<Point> pts;
        std::vector<int> mk;
        for (std::size_t q = 0; q < marks.size(); ++q) {
            auto sim = simulate_inhom_poisson(surfaces[q], pattern.window(), rng);
            pts.insert(pts.end(), sim.begin(), sim.end());
            mk.insert(mk.end(), sim.size(), marks[q]);
        }
        const MarkedPointPattern replicate(std::move(pts), std::move(mk), M, pattern.window());
        out.ensemble.simulated[k] = statistic(replicate, false);
    });
    out.result = global_envelope(out.ensemble, options.level);
    return out;
}

}  // namespace mtpp
