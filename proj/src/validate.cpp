#include "mtpp/validate.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "mtpp/error.hpp"
#include "mtpp/io.hpp"
#include "mtpp/parallel.hpp"

namespace mtpp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t stream_id(std::size_t level, std::size_t rep) {
    return (static_cast<std::uint64_t>(level) << 32) | static_cast<std::uint64_t>(rep);
}

struct Replicate {
    bool ok = false;
    bool degenerate = false;
    double error = kNaN;
    double kkt = 0.0;
    std::vector<bool> zero;
};

ExperimentReport run_levels(const SyntheticScenario& scenario, const ExperimentOptions& options, const char* kind) {
    if (options.reps == 0) throw Error(ErrorCode::InvalidArgument, "need at least one replicate");
    for (std::size_t q = 1; q < options.scales.size(); ++q) {
        if (!(options.scales[q] > options.scales[q - 1])) {
            throw Error(ErrorCode::InvalidArgument, "scales must be increasing");
        }
    }
    ExperimentReport rep;
    rep.kind = kind;
    rep.seed = options.seed;
    rep.beta_star = scenario.beta_vector();
    const std::size_t p = scenario.spec.size();
    for (std::size_t l = 0; l < p; ++l) {
        rep.names.push_back(scenario.spec.coefficient_name(l) + "[" + std::to_string(scenario.spec.mark_of(l)) + "]");
        rep.true_zero.push_back(scenario.spec.penalized(l) && rep.beta_star[static_cast<Eigen::Index>(l)] == 0.0);
    }

    for (std::size_t q = 0; q < options.scales.size(); ++q) {
        const auto start = std::chrono::steady_clock::now();
        const SyntheticScenario sc = scenario.with_scale(options.scales[q]);
        const RegionSet regions = sc.scaled_regions();
        std::vector<Replicate> results(options.reps);
        parallel_for(options.reps, [&](std::size_t r) {
            Replicate& out = results[r];
            const auto id = stream_id(q, r);
            try {
                const auto pattern = simulate_scenario(sc, options.seed, 2 * id);
                TwoStepOptions fo = options.fit;
                fo.split.seed = options.seed;
                fo.split.stream = 2 * id + 1;
                fo.covariance.seed = options.seed + 1;
                const auto fit = two_step_fit(pattern, regions, sc.spec, fo);
                double kkt = 0.0;
                for (const auto& rec : fit.path) kkt = std::max(kkt, rec.kkt);
                out.kkt = kkt;
                if (!(kkt < fo.path.solver.tol)) return;
                out.ok = true;
                out.error = (fit.beta - rep.beta_star).norm();
                out.zero.resize(p);
                for (std::size_t l = 0; l < p; ++l) out.zero[l] = fit.beta[static_cast<Eigen::Index>(l)] == 0.0;
            } catch (const Error& e) {
                if (!is_numerical(e.code())) throw;
                out.degenerate = true;
            }
        });

        LevelReport lv;
        lv.scale = options.scales[q];
        lv.mu = sc.expected_counts().sum();
        lv.reps = options.reps;
        lv.zero_frequency.assign(p, 0.0);
        double sum = 0.0, sum2 = 0.0;
        for (const auto& r : results) {
            lv.max_kkt = std::max(lv.max_kkt, r.kkt);
            if (r.degenerate) ++lv.degenerate;
            if (!r.ok) continue;
            ++lv.completed;
            sum += r.error;
            sum2 += r.error * r.error;
            for (std::size_t l = 0; l < p; ++l)
                if (r.zero[l]) lv.zero_frequency[l] += 1.0;
        }
        if (lv.completed > 0) {
            const double n = static_cast<double>(lv.completed);
            lv.mean_error = sum / n;
            lv.sd_error = lv.completed > 1 ? std::sqrt(std::max(0.0, (sum2 - n * lv.mean_error * lv.mean_error) / (n - 1))) : 0.0;
            for (auto& f : lv.zero_frequency) f /= n;
        } else {
            lv.mean_error = kNaN;
            lv.sd_error = kNaN;
            for (auto& f : lv.zero_frequency) f = kNaN;
        }
        double zsum = 0.0, asum = 0.0;
        std::size_t zn = 0, an = 0;
        for (std::size_t l = 0; l < p; ++l) {
            if (rep.true_zero[l]) {
                zsum += lv.zero_frequency[l];
                ++zn;
            } else if (scenario.spec.penalized(l)) {
                asum += 1.0 - lv.zero_frequency[l];
                ++an;
            }
        }
        lv.mean_zero_frequency = zn ? zsum / static_cast<double>(zn) : kNaN;
        lv.active_retention = an ? asum / static_cast<double>(an) : kNaN;
        lv.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        rep.levels.push_back(std::move(lv));
    }

    // least-squares slope over levels with a finite error and positive μ
    std::vector<std::pair<double, double>> xy;
    for (const auto& lv : rep.levels)
        if (lv.mu > 0.0 && std::isfinite(lv.mean_error) && lv.mean_error > 0.0)
            xy.emplace_back(std::log(lv.mu), std::log(lv.mean_error));
    rep.slope = kNaN;
    if (xy.size() >= 2) {
        double mx = 0.0, my = 0.0;
        for (const auto& [x, y] : xy) {
            mx += x;
            my += y;
        }
        mx /= static_cast<double>(xy.size());
        my /= static_cast<double>(xy.size());
        double sxy = 0.0, sxx = 0.0;
        for (const auto& [x, y] : xy) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
        rep.slope = sxy / sxx;
    }
    for (std::size_t l = 0; l < p; ++l) {
        if (!rep.true_zero[l]) continue;
        bool monotone = true;
        for (std::size_t q = 1; q < rep.levels.size(); ++q)
            if (!(rep.levels[q].zero_frequency[l] >= rep.levels[q - 1].zero_frequency[l])) monotone = false;
        if (monotone) ++rep.monotone_zeros;
    }
    return rep;
}

}  // namespace

ExperimentReport consistency_experiment(const SyntheticScenario& scenario, const ExperimentOptions& options) {
    return run_levels(scenario, options, "consistency");
}

ExperimentReport selection_experiment(const SyntheticScenario& scenario, const ExperimentOptions& options) {
    bool any_zero = false;
    for (std::size_t l = 0; l < scenario.spec.size(); ++l)
        if (scenario.spec.penalized(l) && scenario.beta_vector()[static_cast<Eigen::Index>(l)] == 0.0) any_zero = true;
    if (!any_zero) throw Error(ErrorCode::InvalidArgument, "scenario has no true zero coefficients");
    return run_levels(scenario, options, "selection");
}

ExperimentReport coverage_experiment(const SyntheticScenario& scenario, std::size_t reps, double level,
                                     std::uint64_t seed) {
    if (reps == 0) throw Error(ErrorCode::InvalidArgument, "need at least one replicate");
    const double zq = normal_quantile(0.5 * (1.0 + level));
    ExperimentReport rep;
    rep.kind = "coverage";
    rep.seed = seed;
    rep.level = level;
    rep.beta_star = scenario.beta_vector();
    const std::size_t p = scenario.spec.size();
    for (std::size_t l = 0; l < p; ++l) {
        rep.names.push_back(scenario.spec.coefficient_name(l) + "[" + std::to_string(scenario.spec.mark_of(l)) + "]");
        rep.true_zero.push_back(scenario.spec.penalized(l) && rep.beta_star[static_cast<Eigen::Index>(l)] == 0.0);
    }
    const auto start = std::chrono::steady_clock::now();
    const RegionSet regions = scenario.scaled_regions();
    const auto design = build_design(regions, scenario.spec);
    std::vector<std::vector<int>> covered(reps);
    std::vector<int> ok(reps, 0);
    parallel_for(reps, [&](std::size_t r) {
        try {
            const auto pattern = simulate_scenario(scenario, seed, r);
            const auto model = make_model(aggregate_counts(pattern, regions), design, scenario.spec);
            const auto beta = fit_unpenalized(model);
            CovarianceOptions co;
            co.mode = CovarianceMode::Poisson;
            const auto cov = covariance(model, beta, {}, co);
            covered[r].resize(p);
            for (std::size_t l = 0; l < p; ++l) {
                const auto L = static_cast<Eigen::Index>(l);
                const double half = zq * std::sqrt(cov.sigma(L, L));
                covered[r][l] = std::abs(beta[L] - rep.beta_star[L]) <= half ? 1 : 0;
            }
            ok[r] = 1;
        } catch (const Error& e) {
            if (!is_numerical(e.code())) throw;
        }
    });
    LevelReport lv;
    lv.scale = scenario.scale;
    lv.mu = scenario.expected_counts().sum();
    lv.reps = reps;
    rep.coefficient_coverage.assign(p, 0.0);
    double hits = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
        if (!ok[r]) {
            ++lv.degenerate;
            continue;
        }
        ++lv.completed;
        for (std::size_t l = 0; l < p; ++l) {
            rep.coefficient_coverage[l] += covered[r][l];
            hits += covered[r][l];
        }
    }
    const double n = static_cast<double>(lv.completed);
    for (auto& c : rep.coefficient_coverage) c = n > 0 ? c / n : kNaN;
    rep.coverage = n > 0 ? hits / (n * static_cast<double>(p)) : kNaN;
    lv.mean_error = kNaN;
    lv.sd_error = kNaN;
    lv.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rep.levels.push_back(lv);
    rep.slope = kNaN;
    return rep;
}

namespace {

nlohmann::json num(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

std::string report_json(const ExperimentReport& report) {
    using nlohmann::json;
    json j;
    j["kind"] = report.kind;
    j["seed"] = report.seed;
    j["coefficients"] = report.names;
    std::vector<double> beta(report.beta_star.data(), report.beta_star.data() + report.beta_star.size());
    j["beta_star"] = beta;
    j["true_zero"] = report.true_zero;
    j["slope"] = num(report.slope);
    j["monotone_zeros"] = report.monotone_zeros;
    if (report.kind == "coverage") {
        j["level"] = report.level;
        j["coverage"] = num(report.coverage);
        json cc = json::array();
        for (double c : report.coefficient_coverage) cc.push_back(num(c));
        j["coefficient_coverage"] = cc;
    }
    json levels = json::array();
    for (const auto& lv : report.levels) {
        json z = json::array();
        for (double f : lv.zero_frequency) z.push_back(num(f));
        levels.push_back({{"scale", lv.scale},
                          {"mu", lv.mu},
                          {"reps", lv.reps},
                          {"completed", lv.completed},
                          {"degenerate", lv.degenerate},
                          {"mean_error", num(lv.mean_error)},
                          {"sd_error", num(lv.sd_error)},
                          {"zero_frequency", z},
                          {"mean_zero_frequency", num(lv.mean_zero_frequency)},
                          {"active_retention", num(lv.active_retention)},
                          {"max_kkt", lv.max_kkt},
                          {"seconds", lv.seconds}});
    }
    j["levels"] = levels;
    return j.dump(2) + "\n";
}

void write_report_csv(const ExperimentReport& report, const std::filesystem::path& path) {
    io::CsvWriter w(path, {"scale", "mu", "coefficient", "beta_star", "true_zero", "zero_frequency", "coverage",
                           "mean_error", "completed", "degenerate"});
    for (const auto& lv : report.levels) {
        for (std::size_t l = 0; l < report.names.size(); ++l) {
            w.cell(lv.scale).cell(lv.mu).cell(report.names[l]).cell(report.beta_star[static_cast<Eigen::Index>(l)]);
            w.cell(static_cast<long long>(report.true_zero[l]));
            w.cell(l < lv.zero_frequency.size() ? lv.zero_frequency[l] : kNaN);
            w.cell(l < report.coefficient_coverage.size() ? report.coefficient_coverage[l] : kNaN);
            w.cell(lv.mean_error).cell(static_cast<long long>(lv.completed)).cell(static_cast<long long>(lv.degenerate));
            w.end_row();
        }
    }
}

}  // namespace mtpp
