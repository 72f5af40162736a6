#include "mtpp/sim.hpp"

#include <cmath>
#include <random>
#include <string>

#include "mtpp/compositional.hpp"
#include "mtpp/error.hpp"

namespace mtpp {

std::int64_t sample_poisson(double lambda, Philox& rng) {
    if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "Poisson mean must be >= 0");
    if (!std::isfinite(lambda)) throw Error(ErrorCode::UnboundedIntensity, "infinite expected count");
    if (lambda == 0.0) return 0;
    std::poisson_distribution<std::int64_t> dist(lambda);
    return dist(rng);
}

Point sample_uniform(const Window& window, Philox& rng) {
    const BBox& b = window.bbox();
    for (int attempt = 0; attempt < 1000000; ++attempt) {
        const Point p{b.xmin + rng.uniform() * b.width(), b.ymin + rng.uniform() * b.height()};
        if (window.contains(p)) return p;
    }
    throw Error(ErrorCode::InvalidGeometry, "rejection sampling failed to hit the window");
}

std::vector<Point> simulate_homogeneous(const Window& window, double lambda, Philox& rng) {
    const auto n = sample_poisson(lambda * window.area(), rng);
    std::vector<Point> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) out.push_back(sample_uniform(window, rng));
    return out;
}

namespace {

template <class Rho>
std::vector<Point> thin(const Window& window, double lambda_max, Rho&& rho, Philox& rng) {
    if (!std::isfinite(lambda_max)) throw Error(ErrorCode::UnboundedIntensity, "intensity is not bounded");
    std::vector<Point> out;
    if (lambda_max <= 0.0) return out;
    const auto n = sample_poisson(lambda_max * window.area(), rng);
    for (std::int64_t k = 0; k < n; ++k) {
        const Point p = sample_uniform(window, rng);
        const double u = rng.uniform();
        if (u * lambda_max < rho(p)) out.push_back(p);
    }
    return out;
}

}  // namespace

std::vector<Point> simulate_inhom_poisson(const IntensitySurface& surface, const Window& window, Philox& rng) {
    double lambda_max = 0.0;
    for (std::size_t c = 0; c < surface.values.size(); ++c) {
        if (!surface.mask[c]) continue;
        const double v = surface.values[c];
        if (!std::isfinite(v)) throw Error(ErrorCode::UnboundedIntensity, "surface has a non-finite cell");
        if (v < 0.0) throw Error(ErrorCode::InvalidArgument, "surface has a negative cell");
        lambda_max = std::max(lambda_max, v);
    }
    return thin(window, lambda_max, [&](Point p) { return surface.at(p); }, rng);
}

std::vector<Point> simulate_inhom_poisson(const RegionSet& regions, std::span<const double> rho_per_region,
                                          Philox& rng) {
    if (rho_per_region.size() != regions.size()) {
        throw Error(ErrorCode::InvalidArgument, "need one intensity per region");
    }
    double lambda_max = 0.0;
    for (double v : rho_per_region) {
        if (!std::isfinite(v)) throw Error(ErrorCode::UnboundedIntensity, "region intensity is not finite");
        if (v < 0.0) throw Error(ErrorCode::InvalidArgument, "region intensity is negative");
        lambda_max = std::max(lambda_max, v);
    }
    return thin(
        regions.window(), lambda_max,
        [&](Point p) {
            const auto j = regions.locate(p);
            return j ? rho_per_region[*j] : 0.0;
        },
        rng);
}

SyntheticScenario::SyntheticScenario(RegionSet regions_, DesignSpec spec_, std::vector<Eigen::VectorXd> beta_,
                                     double scale_)
    : regions(std::move(regions_)), spec(std::move(spec_)), beta(std::move(beta_)), scale(scale_) {
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw Error(ErrorCode::InvalidArgument, "scale must be >= 0");
    if (static_cast<int>(beta.size()) != spec.mark_count()) {
        throw Error(ErrorCode::InvalidArgument, "need one coefficient vector per mark");
    }
    for (int i = 1; i <= spec.mark_count(); ++i) {
        if (static_cast<std::size_t>(beta[i - 1].size()) != spec.mark_width(i)) {
            throw Error(ErrorCode::InvalidArgument, "coefficient vector of mark " + std::to_string(i) +
                                                        " has the wrong length");
        }
    }
    design = build_design(regions, spec);
}

Eigen::VectorXd SyntheticScenario::beta_vector() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(spec.size()));
    for (int i = 1; i <= spec.mark_count(); ++i)
        out.segment(static_cast<Eigen::Index>(spec.mark_offset(i)), beta[i - 1].size()) = beta[i - 1];
    return out;
}

RegionSet SyntheticScenario::scaled_regions() const { return regions.with_population_scale(scale); }

SyntheticScenario SyntheticScenario::with_scale(double kappa) const {
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw Error(ErrorCode::InvalidArgument, "scale must be >= 0");
    SyntheticScenario out = *this;
    out.scale = kappa;
    return out;
}

std::vector<std::vector<double>> SyntheticScenario::intensity() const {
    std::vector<std::vector<double>> out(beta.size());
    for (std::size_t i = 0; i < beta.size(); ++i) {
        const Eigen::VectorXd eta = design.z[i] * beta[i];
        out[i].resize(design.regions());
        for (std::size_t j = 0; j < design.regions(); ++j)
            out[i][j] = scale * design.population[j] / design.area[j] * std::exp(eta[j]);
    }
    return out;
}

Eigen::VectorXd SyntheticScenario::expected_counts() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(beta.size()));
    for (std::size_t i = 0; i < beta.size(); ++i) {
        const Eigen::VectorXd eta = design.z[i] * beta[i];
        out[i] = scale * (design.population.array() * eta.array().exp()).sum();
    }
    return out;
}

const char* default_design_text() {
    return R"(marks 2
mark 1 cooperative
mark 2 lucrative
alr prop16.24 prop25.64 prop65.more ref=prop65.more
alr activity non.activity
alr poverty non.poverty
alr prop.industry prop.public prop.trade prop.agri ref=prop.agri
logratio prop.1to9 prop10.more
group demographic: evolution, log(prop16.24/prop65.more), log(prop25.64/prop65.more)
group social: median, decile.ratio, log(activity/non.activity), log(poverty/non.poverty)
group economic: log(prop.industry/prop.agri), log(prop.public/prop.agri), log(prop.trade/prop.agri), log(prop.1to9/prop10.more)
)";
}

SyntheticScenario default_scenario(double scale) {
    constexpr int side = 10;
    constexpr int J = side * side;
    constexpr int K = 11;
    Philox rng(20240611, 0);
    std::normal_distribution<double> normal;

    // smooth part: two random plane waves per field, plus white noise
    Eigen::MatrixXd field(J, K + 1);
    for (int k = 0; k <= K; ++k) {
        double fx[2], fy[2], ph[2];
        for (int w = 0; w < 2; ++w) {
            fx[w] = (rng.uniform() - 0.5) * 1.2;
            fy[w] = (rng.uniform() - 0.5) * 1.2;
            ph[w] = rng.uniform() * 6.283185307179586;
        }
        for (int j = 0; j < J; ++j) {
            const double x = j % side + 0.5;
            const double y = j / side + 0.5;
            const double smooth = std::sin(fx[0] * x + fy[0] * y + ph[0]) + std::sin(fx[1] * x + fy[1] * y + ph[1]);
            field(j, k) = 0.6 * smooth + 0.8 * normal(rng);
        }
        const double mean = field.col(k).mean();
        const double sd = std::sqrt((field.col(k).array() - mean).square().sum() / (J - 1));
        field.col(k) = (field.col(k).array() - mean) / sd;
    }

    auto logistic = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    std::vector<Region> regions;
    for (int j = 0; j < J; ++j) {
        const double x0 = j % side;
        const double y0 = j / side;
        const auto z = field.row(j);
        std::map<std::string, double> cov;
        cov["evolution"] = z[0];
        const double ages[2] = {z[1], z[2]};
        const auto age = inverse_alr(ages, 2);
        cov["prop16.24"] = age[0];
        cov["prop25.64"] = age[1];
        cov["prop65.more"] = age[2];
        cov["median"] = z[3];
        cov["decile.ratio"] = z[4];
        cov["activity"] = logistic(z[5]);
        cov["non.activity"] = 1.0 - cov["activity"];
        cov["poverty"] = logistic(z[6]);
        cov["non.poverty"] = 1.0 - cov["poverty"];
        const double econ[3] = {z[7], z[8], z[9]};
        const auto sector = inverse_alr(econ, 3);
        cov["prop.industry"] = sector[0];
        cov["prop.public"] = sector[1];
        cov["prop.trade"] = sector[2];
        cov["prop.agri"] = sector[3];
        cov["prop.1to9"] = logistic(z[10]);
        cov["prop10.more"] = 1.0 - cov["prop.1to9"];
        const double population = 1000.0 * std::exp(0.4 * z[11]);
        regions.push_back(Region::with_population(j + 1, Shape::rectangle(x0, y0, x0 + 1, y0 + 1), population, cov));
    }
    RegionSet rs(std::move(regions), Shape::rectangle(0, 0, side, side));
    DesignSpec spec = DesignSpec::parse(default_design_text());

    Eigen::VectorXd b1(K + 1), b2(K + 1);
    b1 << 0, 0.0, 0.4, -0.3, 0.5, -0.35, 0.3, 0.45, 0.3, -0.4, 0.35, -0.5;
    b2 << 0, 0.0, 0.35, -0.4, 0.3, 0.5, 0.0, 0.4, 0.0, 0.45, -0.35, 0.0;
    SyntheticScenario sc(rs, spec, {b1, b2}, 1.0);
    const double target[2] = {1500.0, 1000.0};
    const auto base = sc.expected_counts();
    sc.beta[0][0] = std::log(target[0] / base[0]);
    sc.beta[1][0] = std::log(target[1] / base[1]);
    sc.scale = scale;
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw Error(ErrorCode::InvalidArgument, "scale must be >= 0");
    return sc;
}

MarkedPointPattern simulate_scenario(const SyntheticScenario& scenario, std::uint64_t seed, std::uint64_t stream) {
    Philox rng(seed, stream);
    const auto rho = scenario.intensity();
    std::vector<Point> points;
    std::vector<int> marks;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        auto pts = simulate_inhom_poisson(scenario.regions, rho[i], rng);
        points.insert(points.end(), pts.begin(), pts.end());
        marks.insert(marks.end(), pts.size(), static_cast<int>(i) + 1);
    }
    return MarkedPointPattern(std::move(points), std::move(marks), static_cast<int>(rho.size()),
                              scenario.regions.window());
}

}  // namespace mtpp
