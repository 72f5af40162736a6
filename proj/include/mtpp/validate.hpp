#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtpp/fit.hpp"
#include "mtpp/sim.hpp"

namespace mtpp {

struct ExperimentOptions {
    std::vector<double> scales{1.0, 4.0, 16.0};  ///< κ levels, increasing
    std::size_t reps = 50;
    std::uint64_t seed = 1;
    TwoStepOptions fit = [] {
        TwoStepOptions o;
        o.covariance.mode = CovarianceMode::Poisson;
        return o;
    }();
};

struct LevelReport {
    double scale = 0.0;
    double mu = 0.0;                 ///< expected total count
    std::size_t reps = 0;
    std::size_t completed = 0;       ///< fits that passed the KKT check
    std::size_t degenerate = 0;      ///< numerical failures (e.g. empty patterns)
    double mean_error = 0.0;         ///< mean ‖β̂ - β⋆‖ over completed fits
    double sd_error = 0.0;
    std::vector<double> zero_frequency;  ///< per coefficient
    double mean_zero_frequency = 0.0;    ///< over true zeros
    double active_retention = 0.0;       ///< over true non-zero penalized coefficients
    double max_kkt = 0.0;
    double seconds = 0.0;
};

struct ExperimentReport {
    std::string kind;
    std::vector<std::string> names;
    Eigen::VectorXd beta_star;
    std::vector<bool> true_zero;     ///< penalized coefficients with β⋆ = 0
    std::vector<LevelReport> levels;
    double slope = 0.0;              ///< log mean error against log μ
    /// True zeros whose zero frequency never decreases across levels.
    std::size_t monotone_zeros = 0;
    /// Coverage experiments: pooled and per-coefficient rates.
    double level = 0.0;
    double coverage = 0.0;
    std::vector<double> coefficient_coverage;
    std::uint64_t seed = 0;
};

/// Two-step fits of simulated patterns at each κ; reports the mean error and
/// its log-log slope against μ.
ExperimentReport consistency_experiment(const SyntheticScenario& scenario, const ExperimentOptions& options);

/// Same replicates as consistency_experiment, summarised by exact-zero
/// frequencies per coefficient.
ExperimentReport selection_experiment(const SyntheticScenario& scenario, const ExperimentOptions& options);

/// Unpenalized full-data fits with poisson-mode level-CIs; pooled coverage of
/// β⋆ over all coefficients and replicates at the scenario's own κ.
ExperimentReport coverage_experiment(const SyntheticScenario& scenario, std::size_t reps, double level,
                                     std::uint64_t seed);

std::string report_json(const ExperimentReport& report);
/// One row per (level, coefficient).
void write_report_csv(const ExperimentReport& report, const std::filesystem::path& path);

}  // namespace mtpp
