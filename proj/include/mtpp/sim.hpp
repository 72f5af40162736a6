#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mtpp/design.hpp"
#include "mtpp/npest.hpp"
#include "mtpp/pattern.hpp"
#include "mtpp/regions.hpp"
#include "mtpp/rng.hpp"

namespace mtpp {

/// Draws N ~ Poisson(lambda) using the generator's stream.
std::int64_t sample_poisson(double lambda, Philox& rng);

/// Uniform point in the window by bounding-box rejection.
Point sample_uniform(const Window& window, Philox& rng);

/// Homogeneous Poisson process with intensity `lambda` on the window.
std::vector<Point> simulate_homogeneous(const Window& window, double lambda, Philox& rng);

/// Inhomogeneous Poisson process by thinning a dominating homogeneous
/// process at the largest intensity value.
std::vector<Point> simulate_inhom_poisson(const IntensitySurface& surface, const Window& window, Philox& rng);

/// Region-wise constant intensity: rho_per_region[j] points per unit area on
/// region j (RegionSet order); points outside every region get intensity 0.
std::vector<Point> simulate_inhom_poisson(const RegionSet& regions, std::span<const double> rho_per_region,
                                          Philox& rng);

/// Multitype Poisson truth ρ_i(x) = κ d(x) exp(β_i^T z_i(x)) over a region
/// partition.
struct SyntheticScenario {
    RegionSet regions;                ///< populations at κ = 1
    DesignSpec spec;
    RegionDesign design;              ///< build_design(regions, spec), κ = 1
    std::vector<Eigen::VectorXd> beta;  ///< per mark, intercept first
    double scale = 1.0;               ///< κ

    SyntheticScenario() = default;
    SyntheticScenario(RegionSet regions, DesignSpec spec, std::vector<Eigen::VectorXd> beta, double scale = 1.0);

    /// β⋆ stacked in coefficient order.
    Eigen::VectorXd beta_vector() const;
    /// Regions with populations multiplied by κ, as seen by a fit.
    RegionSet scaled_regions() const;
    SyntheticScenario with_scale(double kappa) const;
    /// ρ_i on region j, points per unit area: [mark-1][j].
    std::vector<std::vector<double>> intensity() const;
    /// Σ_j κ ν_j exp(β_i^T z_ij) per mark.
    Eigen::VectorXd expected_counts() const;
};

/// Design text of the default scenario: eleven covariates per mark in
/// demographic (3), social (4) and economic (4) groups.
const char* default_design_text();

/// M = 2 marks on [0,10]^2 split into 100 unit squares, fixed covariate
/// fields, five true zeros among the 22 covariate coefficients; expected
/// counts are 1500 and 1000 at κ = 1.
SyntheticScenario default_scenario(double scale = 1.0);

/// Independent inhomogeneous Poisson pattern per mark; marks are simulated in
/// order from the single (seed, stream) generator.
MarkedPointPattern simulate_scenario(const SyntheticScenario& scenario, std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace mtpp
