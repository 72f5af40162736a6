#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mtpp/design.hpp"
#include "mtpp/envelope.hpp"
#include "mtpp/npest.hpp"
#include "mtpp/pattern.hpp"
#include "mtpp/regions.hpp"

namespace mtpp {

/// Region-aggregated multitype Poisson model: counts N_ij, designs z_ij and
/// populations ν_j. Immutable once built.
struct CompositeModel {
    DesignSpec spec;
    std::vector<Eigen::MatrixXd> z;  ///< per mark, J × b_i
    Eigen::VectorXd population;      ///< ν_j
    Eigen::VectorXd area;            ///< |A_j|
    Eigen::MatrixXd counts;          ///< M × J
    std::vector<int> region_ids;

    int marks() const { return static_cast<int>(z.size()); }
    std::size_t regions() const { return static_cast<std::size_t>(population.size()); }
    std::size_t p() const { return spec.size(); }
    double total_count() const { return counts.sum(); }
    /// Linear predictors of mark i (1-based), clipped at ±700.
    Eigen::VectorXd eta(int mark, const Eigen::VectorXd& beta) const;
};

/// Throws InconsistentData when a region with ν_j = 0 holds points.
CompositeModel make_model(const CountMatrix& counts, const RegionDesign& design, const DesignSpec& spec);
CompositeModel make_model(const MarkedPointPattern& pattern, const RegionSet& regions, const DesignSpec& spec,
                          const DesignOptions& options = {});

/// ℓ(β) = Σ_i Σ_j N_ij β_i^T z_ij - ν_j exp(β_i^T z_ij).
double loglik(const CompositeModel& m, const Eigen::VectorXd& beta);

/// Log-likelihood of the M Poisson regressions with offsets log ν_j (without
/// the log N! terms); equals loglik + Σ N_ij log ν_j.
double poisson_regression_loglik(const CompositeModel& m, const Eigen::VectorXd& beta);

struct ScoreSensitivity {
    Eigen::VectorXd gradient;     ///< ∂ℓ/∂β
    Eigen::MatrixXd sensitivity;  ///< S(β), block diagonal over marks
};

ScoreSensitivity score_and_sensitivity(const CompositeModel& m, const Eigen::VectorXd& beta);

/// Σ_j ν_j exp(β_i^T z_ij) per mark.
Eigen::VectorXd mean_count(const CompositeModel& m, const Eigen::VectorXd& beta);

struct UnpenalizedOptions {
    double tol = 1e-10;
    int max_iter = 100;
    /// Coefficients allowed to move; empty means all. Others stay at 0.
    std::vector<bool> support;
};

/// Newton-Raphson maximizer of ℓ with step halving.
Eigen::VectorXd fit_unpenalized(const CompositeModel& m, const UnpenalizedOptions& options = {});

/// Per-coefficient and per-group penalty levels, already multiplied by λ.
/// An infinite coefficient weight pins that coefficient at zero.
struct PenaltyWeights {
    double lambda = 0.0;
    double alpha = 0.05;
    Eigen::VectorXd coefficient;  ///< λ_l (0 for unpenalized coefficients)
    Eigen::VectorXd group;        ///< λ^g, in spec.groups() order

    PenaltyWeights scaled(double new_lambda) const;
};

/// λ^g = (1-α)λ/‖β̂_no^g‖ and λ_l = αλ/|β̂_no,l|.
PenaltyWeights make_weights(const Eigen::VectorXd& beta_no, const DesignSpec& spec, double lambda,
                            double alpha = 0.05);

/// Σ λ^g ‖β^g‖ + Σ λ_l |β_l|.
double penalty(const PenaltyWeights& w, const DesignSpec& spec, const Eigen::VectorXd& beta);

/// Exact proximal map of t·penalty: soft-threshold, then group shrinkage.
Eigen::VectorXd sgl_prox(const Eigen::VectorXd& v, const PenaltyWeights& w, const DesignSpec& spec, double t);

/// Largest violation of the optimality conditions of -ℓ + penalty at β,
/// divided by 1 + Σ N.
double sgl_kkt_residual(const CompositeModel& m, const PenaltyWeights& w, const Eigen::VectorXd& beta);

struct SolverOptions {
    double tol = 1e-8;
    int max_iter = 200;
    int max_inner_iter = 20000;
};

struct SolverResult {
    Eigen::VectorXd beta;
    double objective = 0.0;  ///< -ℓ + penalty
    double kkt = 0.0;
    int iterations = 0;
};

/// Maximizes ℓ(β) - penalty(β) by proximal Newton steps with backtracking;
/// the quadratic subproblems are solved by accelerated proximal gradient.
SolverResult sgl_solve(const CompositeModel& m, const PenaltyWeights& w, const Eigen::VectorXd& beta_init,
                       const SolverOptions& options = {});

/// Maximizer of ℓ over intercepts and unpenalized coefficients with every
/// penalized coefficient at 0.
Eigen::VectorXd null_fit(const CompositeModel& m, const UnpenalizedOptions& options = {});

/// Smallest λ for which the penalized coefficients all vanish, for weights
/// given at λ = 1.
double lambda_max(const CompositeModel& m, const PenaltyWeights& unit_weights);

struct PathRecord {
    double lambda = 0.0;
    Eigen::VectorXd beta;
    std::size_t df = 0;
    double loglik = 0.0;
    double bic = 0.0;
    double kkt = 0.0;
};

struct PathOptions {
    double alpha = 0.05;
    std::size_t n_lambda = 100;
    double min_ratio = 1e-4;
    std::vector<double> lambda_grid;     ///< decreasing; overrides the default grid
    std::optional<double> sample_size;   ///< BIC log factor; default Σ N
    SolverOptions solver{};
};

struct PathResult {
    std::vector<PathRecord> records;
    std::size_t best = 0;
    double lambda_max = 0.0;
    Eigen::VectorXd beta_no;
    PenaltyWeights unit_weights;  ///< λ = 1
};

/// BIC(λ) = -2ℓ(β̂_λ) + df log(n) along a warm-started decreasing λ grid.
PathResult bic_path(const CompositeModel& m, const PathOptions& options = {});
PathResult bic_path(const CompositeModel& m, const Eigen::VectorXd& beta_no, const PathOptions& options);

struct SplitSpec {
    double training_fraction = 1.0 / 3.0;
    std::uint64_t seed = 1;
    std::uint64_t stream = 0;
};

struct SplitPatterns {
    MarkedPointPattern training;
    MarkedPointPattern validation;
    std::vector<bool> in_training;  ///< per point of the input pattern
};

/// Independent thinning: each point joins the training part with probability
/// training_fraction.
SplitPatterns split_pattern(const MarkedPointPattern& pattern, const SplitSpec& split);

/// D_jk = ∫_{A_j} ∫_{A_k} 1(‖x - y‖ ≤ R) dx dy by q × q midpoint quadrature
/// per region (sub-cells outside the region dropped, weights rescaled to
/// the exact area).
class PairDistanceTable {
public:
    PairDistanceTable(const RegionSet& regions, double range, int quadrature = 16);
    double range() const { return range_; }
    const Eigen::MatrixXd& table() const { return table_; }

private:
    double range_;
    Eigen::MatrixXd table_;
};

enum class CovarianceMode { Poisson, SecondOrder };

struct CovarianceOptions {
    CovarianceMode mode = CovarianceMode::SecondOrder;
    /// Truncation radius per mark; empty selects it from the envelope of the
    /// fitted centered L function. A single value applies to all marks.
    std::vector<double> range;
    int quadrature = 16;
    std::size_t envelope_sims = 199;
    double envelope_level = 0.95;
    std::uint64_t seed = 1;
};

struct CovarianceResult {
    Eigen::MatrixXd sigma;       ///< p × p, zero outside the support
    std::vector<double> range;   ///< R used per mark (0 in poisson mode)
    std::size_t clipped = 0;     ///< negative eigenvalues of S + T set to 0
};

/// S⁻¹ (poisson) or S⁻¹(S + T̂)S⁻¹ (second order) on the support. The
/// second-order mode needs the pattern and regions the model was built on.
CovarianceResult covariance(const CompositeModel& m, const Eigen::VectorXd& beta, const std::vector<bool>& support,
                            const CovarianceOptions& options, const MarkedPointPattern* pattern = nullptr,
                            const RegionSet* regions = nullptr);

/// First r at which the observed centered L of `mark` re-enters its global
/// envelope under the fitted Poisson model; 0 if it never leaves it.
double select_range(const MarkedPointPattern& pattern, const RegionSet& regions,
                    const std::vector<double>& rho_per_region, int mark, const CovarianceOptions& options);

/// ρ̂_i on region j: d_j exp(β_i^T z_ij). Indexed [mark-1][j].
std::vector<std::vector<double>> predict_intensity(const Eigen::VectorXd& beta, const RegionSet& regions,
                                                   const DesignSpec& spec, const DesignOptions& options = {});
std::vector<std::vector<double>> predict_intensity(const CompositeModel& m, const Eigen::VectorXd& beta);

/// Raster of a region-wise constant intensity.
IntensitySurface region_surface(const RegionSet& regions, const std::vector<double>& values, GridSize grid);

struct TwoStepOptions {
    SplitSpec split{};
    PathOptions path{};
    double level = 0.90;
    CovarianceOptions covariance{};
    DesignOptions design{};
    UnpenalizedOptions unpenalized{};
};

struct FitResult {
    DesignSpec spec;
    Eigen::VectorXd beta;           ///< validation refit, exact 0 when deselected
    std::vector<bool> selected;     ///< Î_1 plus intercepts
    std::size_t df = 0;             ///< |Î_1| including intercepts
    std::vector<PathRecord> path;
    std::size_t best = 0;
    double lambda_star = 0.0;
    double lambda_max = 0.0;
    Eigen::VectorXd beta_no;        ///< training unpenalized fit
    Eigen::VectorXd beta_penalized; ///< training sparse group lasso at λ⋆
    double objective = 0.0;
    double kkt = 0.0;
    Eigen::MatrixXd sigma;
    Eigen::VectorXd se;             ///< NaN when deselected
    Eigen::VectorXd ci_lower;
    Eigen::VectorXd ci_upper;
    double level = 0.90;
    CovarianceMode mode = CovarianceMode::SecondOrder;
    std::vector<double> range;
    std::size_t clipped = 0;
    std::size_t training_points = 0;
    std::size_t validation_points = 0;
};

FitResult two_step_fit(const MarkedPointPattern& pattern, const RegionSet& regions, const DesignSpec& spec,
                       const TwoStepOptions& options = {});

/// Symmetric level-CIs β ± z se with z the standard normal quantile.
double normal_quantile(double p);

}  // namespace mtpp
