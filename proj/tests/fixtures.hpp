#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtpp/fit.hpp"
#include "support.hpp"

// Small models shared by the fit tests and the acceptance run.
namespace fixtures {

using Eigen::VectorXd;

inline const std::vector<std::string> kCovs{"x1", "x2", "x3", "x4", "x5"};

struct Fixture {
    mtpp::RegionSet regions;
    mtpp::DesignSpec spec;
    mtpp::RegionDesign design;
    mtpp::CompositeModel model;
};

// One mark, intercept + five covariates in groups {x1, x2} and {x3, x4, x5};
// counts drawn from the model at beta_true.
inline Fixture six_coefficient_fixture(std::uint64_t seed, const VectorXd& beta_true, double pop_scale = 1.0) {
    Fixture f;
    f.regions = mtpp::RegionSet(testing_support::grid_regions(6, 5, 1.0, seed, kCovs)).with_population_scale(pop_scale);
    f.spec = mtpp::DesignSpec::parse("marks 1\ngroup a: x1, x2\ngroup b: x3, x4, x5\n");
    f.design = mtpp::build_design(f.regions, f.spec);
    std::mt19937_64 g(seed);
    mtpp::CountMatrix counts(1, 30);
    const VectorXd eta = f.design.z[0] * beta_true;
    for (int j = 0; j < 30; ++j) {
        std::poisson_distribution<std::int64_t> pd(f.design.population[j] * std::exp(eta[j]));
        counts(0, j) = pd(g);
    }
    f.model = mtpp::make_model(counts, f.design, f.spec);
    return f;
}

inline VectorXd default_truth() {
    VectorXd b(6);
    b << std::log(0.05), 0.6, -0.4, 0.3, 0.0, 0.0;
    return b;
}

// 20 regions, two marks, raw covariates a and b; 400 uniform points.
struct PointFixture {
    std::vector<mtpp::Region> regs;
    std::vector<mtpp::Point> pts;
    std::vector<int> marks;
    mtpp::CompositeModel model;
};

inline PointFixture twenty_region_fixture() {
    PointFixture f;
    f.regs = testing_support::grid_regions(5, 4, 1.3, 4, {"a", "b"});
    const mtpp::RegionSet rs(f.regs);
    const auto spec = mtpp::DesignSpec::parse("marks 2\ngroup g: a, b\n");
    f.pts = testing_support::uniform_points(400, 6.5, 5.2, 9);
    f.marks.resize(f.pts.size());
    for (std::size_t k = 0; k < f.pts.size(); ++k) f.marks[k] = 1 + static_cast<int>(k % 3 == 0);
    const mtpp::MarkedPointPattern pat(f.pts, f.marks, 2, rs.window());
    f.model = mtpp::make_model(pat, rs, spec);
    return f;
}

struct DirectForm {
    double loglik = 0.0;       ///< point sum minus integrated intensity
    double log_pop_sum = 0.0;  ///< sum over points of log population of the home region
};

// Continuous form of the likelihood with ν_j = population / area: sum over
// points of the linear predictor minus the integral of d exp(beta^T z), done
// per point and per polygon with independent geometry.
inline DirectForm direct_loglik(const PointFixture& f, const VectorXd& beta) {
    auto zdot = [&](int mark, const mtpp::Region& r) {
        const auto o = static_cast<Eigen::Index>(3 * (mark - 1));
        return beta[o] + beta[o + 1] * r.raw_covariates.at("a") + beta[o + 2] * r.raw_covariates.at("b");
    };
    DirectForm d;
    for (std::size_t k = 0; k < f.pts.size(); ++k) {
        const mtpp::Region* home = nullptr;
        for (const auto& r : f.regs)
            if (testing_support::ray_inside(r.boundary.polygons()[0].outer, f.pts[k])) home = &r;
        if (!home) return {NAN, NAN};
        d.loglik += zdot(f.marks[k], *home);
        d.log_pop_sum += std::log(home->population);
    }
    for (int mark = 1; mark <= 2; ++mark)
        for (const auto& r : f.regs) {
            const double area = testing_support::shoelace(r.boundary.polygons()[0].outer);
            d.loglik -= (r.population / r.area) * area * std::exp(zdot(mark, r));
        }
    return d;
}

}  // namespace fixtures
