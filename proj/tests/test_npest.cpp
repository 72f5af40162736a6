#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "mtpp/error.hpp"
#include "mtpp/npest.hpp"
#include "mtpp/parallel.hpp"
#include "mtpp/sim.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mtpp;
namespace ts = testing_support;

namespace {

constexpr double kPi = std::numbers::pi;

double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Gaussian mass of a rectangle, written from the normal cdf.
double rect_mass(BBox b, Point u, double h) {
    return (phi((b.xmax - u.x) / h) - phi((b.xmin - u.x) / h)) * (phi((b.ymax - u.y) / h) - phi((b.ymin - u.y) / h));
}

double gauss(Point a, Point b, double h) {
    const double d2 = (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
    return std::exp(-0.5 * d2 / (h * h)) / (2.0 * kPi * h * h);
}

std::vector<double> varying_rho(const std::vector<Point>& pts, double scale) {
    std::vector<double> rho;
    for (const auto& p : pts) rho.push_back(scale * (0.5 + p.x * p.x + 0.3 * std::sin(3 * p.y)));
    return rho;
}

}  // namespace

// ---------------------------------------------------------------------------
// kernel intensity

TEST(KernelIntensity, EmptyPatternGivesZeroSurface) {
    const MarkedPointPattern p({{0.5, 0.5}}, {2}, 2, Shape::rectangle(0, 0, 1, 1));
    const auto s = kernel_intensity(p, 1, 0.1, {32, 32});
    EXPECT_EQ(s.max(), 0.0);
    EXPECT_EQ(s.integral(), 0.0);
}

TEST(KernelIntensity, PeakOfSinglePoint) {
    const double h = 0.5;
    const MarkedPointPattern p({{50.0, 50.0}}, {1}, 1, Shape::rectangle(0, 0, 100, 100));
    const auto s = kernel_intensity(p, 1, h, {400, 400});
    // the point sits on a cell corner; the neighbouring centre is (0.125, 0.125) away
    const double expect = std::exp(-0.5 * 0.03125 / (h * h)) / (2 * kPi * h * h);
    EXPECT_NEAR(s.at({50.1, 50.1}), expect, 1e-12);
}

TEST(KernelIntensity, MassPreservedOnHomogeneousSample) {
    Philox rng(2024, 1);
    const Shape w = Shape::rectangle(0, 0, 1, 1);
    auto pts = simulate_homogeneous(w, 200, rng);
    const std::size_t n = pts.size();
    std::vector<int> marks(n, 1);
    const MarkedPointPattern p(pts, marks, 1, w);
    const auto s = kernel_intensity(p, 1, 0.08, {256, 256});
    EXPECT_NEAR(s.integral(), static_cast<double>(n), 0.02 * static_cast<double>(n));
}

TEST(KernelIntensity, MassWellInsideWindow) {
    auto pts = ts::uniform_points(150, 2, 2, 5);
    for (auto& q : pts) q = {4 + q.x, 4 + q.y};
    std::vector<int> marks(pts.size(), 1);
    const MarkedPointPattern p(pts, marks, 1, Shape::rectangle(0, 0, 10, 10));
    const auto s = kernel_intensity(p, 1, 0.3, {256, 256});
    EXPECT_GE(s.integral(), 0.95 * 150);
    EXPECT_LE(s.integral(), 1.05 * 150);
}

TEST(KernelIntensity, NonPositiveBandwidth) {
    const auto p = ts::two_mark_pattern(10, 1, 1, 1);
    try {
        kernel_intensity(p, 1, 0.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonPositiveBandwidth);
    }
    EXPECT_THROW(adaptive_intensity(p, 1, -1.0), Error);
}

TEST(KernelIntensity, SurfaceNonNegativeAndFinite) {
    const auto p = ts::two_mark_pattern(80, 3, 2, 3);
    const auto s = adaptive_intensity(p, 2, 0.3, {}, {64, 64});
    for (std::size_t c = 0; c < s.values.size(); ++c) {
        EXPECT_TRUE(std::isfinite(s.values[c]));
        EXPECT_GE(s.values[c], 0.0);
    }
}

TEST(KernelMass, RectangleClosedForm) {
    const Shape w = Shape::rectangle(0, 0, 3, 2);
    const KernelMass mass(w);
    for (Point u : {Point{0.1, 0.1}, Point{1.5, 1.0}, Point{2.9, 0.4}})
        for (double h : {0.05, 0.3, 1.0}) EXPECT_NEAR(mass(u, h), rect_mass({0, 0, 3, 2}, u, h), 1e-14);
}

TEST(KernelMass, PolygonAgreesWithRectangleDecomposition) {
    // L-shape = two rectangles whose Gaussian masses add up.
    const Shape L({Polygon{{{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}}, {}}});
    const KernelMass mass(L, {512, 512});
    for (Point u : {Point{0.5, 0.5}, Point{1.0, 1.0}, Point{0.2, 1.8}, Point{1.9, 0.1}})
        for (double h : {0.1, 0.4}) {
            const double expect = rect_mass({0, 0, 2, 1}, u, h) + rect_mass({0, 1, 1, 2}, u, h);
            EXPECT_NEAR(mass(u, h), expect, 2e-3) << u.x << "," << u.y << " h=" << h;
        }
}

TEST(KernelMass, FilledBoundingBoxIsExact) {
    // A window made of several polygons that tile its bounding box.
    const Shape w({Polygon{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {}}, Polygon{{{1, 0}, {2, 0}, {2, 1}, {1, 1}}, {}}});
    ASSERT_FALSE(w.as_rectangle().has_value());
    const KernelMass mass(w);
    for (double h : {0.1, 0.5}) EXPECT_NEAR(mass({0.3, 0.2}, h), rect_mass({0, 0, 2, 1}, {0.3, 0.2}, h), 1e-14);
}

// ---------------------------------------------------------------------------
// adaptive bandwidths

TEST(Adaptive, LatticeGivesPilotBandwidth) {
    std::vector<Point> pts;
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 40; ++j) pts.push_back({(i + 0.5) / 40, (j + 0.5) / 40});
    std::vector<int> marks(pts.size(), 1);
    const MarkedPointPattern p(pts, marks, 1, Shape::rectangle(0, 0, 1, 1));
    const auto bw = abramson_bandwidths(p, 1, 0.05);
    for (double h : bw.point_bandwidth) EXPECT_NEAR(h, 0.05, 0.05 * 0.05);
}

TEST(Adaptive, DenseClusterGetsSmallerBandwidth) {
    Philox rng(8);
    std::vector<Point> pts;
    std::vector<int> marks;
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int k = 0; k < 300; ++k) pts.push_back({0.25 + 0.03 * nd(rng), 0.25 + 0.03 * nd(rng)});
    for (int k = 0; k < 30; ++k) pts.push_back({0.75 + 0.08 * nd(rng), 0.75 + 0.08 * nd(rng)});
    for (auto& q : pts) q = {std::clamp(q.x, 0.0, 1.0), std::clamp(q.y, 0.0, 1.0)};
    marks.assign(pts.size(), 1);
    const MarkedPointPattern p(pts, marks, 1, Shape::rectangle(0, 0, 1, 1));
    const auto bw = abramson_bandwidths(p, 1, 0.1);
    double dense = 0.0, sparse = 0.0;
    for (int k = 0; k < 300; ++k) dense = std::max(dense, bw.point_bandwidth[k]);
    sparse = *std::min_element(bw.point_bandwidth.begin() + 300, bw.point_bandwidth.end());
    EXPECT_LT(dense, sparse);
}

TEST(Adaptive, BandwidthRuleAndDiscretization) {
    const auto p = ts::two_mark_pattern(120, 4, 4, 12);
    const double h0 = 0.6;
    AdaptiveOptions o;
    o.trim = 1e9;
    const auto bw = abramson_bandwidths(p, 1, h0, o);
    const auto pts = p.points_of(1);
    double logs = 0.0;
    for (double v : bw.pilot_at_points) logs += std::log(v);
    EXPECT_NEAR(bw.geometric_mean, std::exp(logs / static_cast<double>(pts.size())), 1e-12 * bw.geometric_mean);
    const KernelMass mass(p.window());
    for (std::size_t k = 0; k < pts.size(); ++k) {
        // each point takes the bandwidth of its 16 x 16 cell, whose pilot is
        // evaluated at the cell centre
        const auto c = bw.grid.cell_of(pts[k]);
        ASSERT_GE(c, 0);
        const Point centre = bw.grid.center(static_cast<int>(c % 16), static_cast<int>(c / 16));
        double pilot = 0.0;
        for (const auto& x : pts) pilot += gauss(centre, x, h0);
        pilot /= rect_mass({0, 0, 4, 4}, centre, h0);
        EXPECT_NEAR(bw.point_bandwidth[k], h0 / std::sqrt(pilot / bw.geometric_mean), 1e-9);
    }
}

TEST(Adaptive, TrimCapsBandwidths) {
    const auto p = ts::two_mark_pattern(60, 4, 4, 13);
    AdaptiveOptions o;
    o.trim = 1.2;
    const auto bw = abramson_bandwidths(p, 1, 0.3, o);
    for (double h : bw.cell_bandwidth) EXPECT_LE(h, 1.2 * 0.3 + 1e-15);
}

TEST(Adaptive, VanishingPilotIsDegenerate) {
    std::vector<Point> pts{{0.1, 0.1}, {0.11, 0.1}, {0.9, 0.83}};
    const MarkedPointPattern p(pts, {1, 1, 1}, 1, Shape::rectangle(0, 0, 1, 1));
    try {
        abramson_bandwidths(p, 1, 1e-4);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegeneratePilot);
    }
}

TEST(IntensityAtPoints, LeaveOneOutKernel) {
    const auto p = ts::two_mark_pattern(40, 2, 1, 21);
    IntensityOptions o;
    o.estimator = IntensityEstimator::Kernel;
    o.bandwidth = 0.2;
    const auto loo = intensity_at_points(p, 1, o);
    o.leave_one_out = false;
    const auto full = intensity_at_points(p, 1, o);
    const auto pts = p.points_of(1);
    for (std::size_t m = 0; m < pts.size(); ++m) {
        double s = 0.0;
        for (std::size_t k = 0; k < pts.size(); ++k)
            if (k != m) s += gauss(pts[m], pts[k], 0.2);
        const double c = rect_mass({0, 0, 2, 1}, pts[m], 0.2);
        EXPECT_NEAR(loo[m], s / c, 1e-10 * s / c);
        EXPECT_NEAR(full[m], (s + gauss(pts[m], pts[m], 0.2)) / c, 1e-10 * full[m]);
    }
}

TEST(IntensityAtPoints, Homogeneous) {
    const auto p = ts::two_mark_pattern(30, 2, 3, 1);
    IntensityOptions o;
    o.estimator = IntensityEstimator::Homogeneous;
    for (double v : intensity_at_points(p, 2, o)) EXPECT_DOUBLE_EQ(v, 15.0 / 6.0);
}

TEST(ScottBandwidth, Formula) {
    const std::vector<Point> pts{{0, 0}, {1, 0}, {0, 2}, {1, 2}};
    // sample sds: x 1/sqrt(3), y 2/sqrt(3)
    const double expect = std::sqrt((1.0 / std::sqrt(3.0)) * (2.0 / std::sqrt(3.0))) * std::pow(4.0, -1.0 / 6.0);
    EXPECT_NEAR(scott_bandwidth(pts), expect, 1e-15);
    EXPECT_THROW(scott_bandwidth(std::vector<Point>{{0, 0}}), Error);
}

// ---------------------------------------------------------------------------
// K functions

TEST(InhomK, TwoPointsBelowTheirDistanceGiveZero) {
    const MarkedPointPattern p({{1, 1}, {2, 1}}, {1, 1}, 1, Shape::rectangle(0, 0, 3, 3));
    const auto r = make_r_grid(0.99, 99);
    const std::vector<double> rho{1.0, 1.0};
    for (auto c : {EdgeCorrection::Translation, EdgeCorrection::Border}) {
        const auto k = inhom_K(p, 1, rho, r, c);
        for (double v : k.value) EXPECT_EQ(v, 0.0);
    }
}

TEST(InhomK, TranslationMatchesNaiveLoop) {
    const auto p = ts::two_mark_pattern(100, 2.0, 1.5, 31);  // 50 points per mark
    const auto a = p.points_of(1);
    const auto rho = varying_rho(a, 20.0);
    const auto r = make_r_grid(0.4, 40);
    const auto k = inhom_K(p, 1, rho, r, EdgeCorrection::Translation);
    const auto ref = oracles::naive_translation_k(a, a, rho, rho, true, r, 2.0, 1.5);
    for (std::size_t t = 0; t < r.size(); ++t) EXPECT_NEAR(k.value[t], ref[t], 1e-12 * std::max(1.0, ref[t]));
}

TEST(InhomK, BorderMatchesNaiveLoop) {
    const auto p = ts::two_mark_pattern(100, 2.0, 1.5, 32);
    const auto a = p.points_of(2);
    const auto rho = varying_rho(a, 15.0);
    const auto r = make_r_grid(0.35, 35);
    const auto k = inhom_K(p, 2, rho, r, EdgeCorrection::Border);
    const auto ref = oracles::naive_border_k(a, a, rho, rho, true, r, 2.0, 1.5);
    for (std::size_t t = 0; t < r.size(); ++t) EXPECT_NEAR(k.value[t], ref[t], 1e-12 * std::max(1.0, ref[t]));
}

TEST(InhomCrossK, MatchesNaiveLoop) {
    const auto p = ts::two_mark_pattern(100, 2.0, 1.5, 33);
    const auto a = p.points_of(1), b = p.points_of(2);
    const auto ra = varying_rho(a, 20.0), rb = varying_rho(b, 10.0);
    const auto r = make_r_grid(0.4, 40);
    const auto k = inhom_cross_K(p, 1, 2, ra, rb, r, EdgeCorrection::Translation);
    const auto ref = oracles::naive_translation_k(a, b, ra, rb, false, r, 2.0, 1.5);
    for (std::size_t t = 0; t < r.size(); ++t) EXPECT_NEAR(k.value[t], ref[t], 1e-12 * std::max(1.0, ref[t]));
    const auto kb = inhom_cross_K(p, 1, 2, ra, rb, r, EdgeCorrection::Border);
    const auto refb = oracles::naive_border_k(a, b, ra, rb, false, r, 2.0, 1.5);
    for (std::size_t t = 0; t < r.size(); ++t) EXPECT_NEAR(kb.value[t], refb[t], 1e-12 * std::max(1.0, refb[t]));
}

TEST(InhomCrossK, EmptySecondMarkGivesZeroCurve) {
    const MarkedPointPattern p({{0.2, 0.2}, {0.5, 0.5}}, {1, 1}, 2, Shape::rectangle(0, 0, 1, 1));
    const auto r = make_r_grid(0.25, 10);
    const auto k = inhom_cross_K(p, 1, 2, std::vector<double>{2, 2}, std::vector<double>{}, r);
    for (double v : k.value) EXPECT_EQ(v, 0.0);
}

TEST(InhomK, ConstantRhoEqualsClassicalK) {
    const auto p = ts::two_mark_pattern(160, 3, 2, 41);
    const auto a = p.points_of(1);
    const double n = static_cast<double>(a.size());
    const double area = 6.0;
    const std::vector<double> rho(a.size(), n / area);
    const auto r = make_r_grid(0.5, 25);
    const auto k = inhom_K(p, 1, rho, r);
    // classical translation estimator |W| / n^2 * sum e(u, v) 1(d <= r)
    for (std::size_t t = 0; t < r.size(); ++t) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < a.size(); ++j) {
                if (i == j) continue;
                const double dx = a[i].x - a[j].x, dy = a[i].y - a[j].y;
                if (std::hypot(dx, dy) <= r[t]) s += area / ((3 - std::abs(dx)) * (2 - std::abs(dy)));
            }
        const double classical = area / (n * n) * s;
        EXPECT_NEAR(k.value[t], classical, 1e-12 * std::max(1.0, classical));
    }
}

TEST(InhomK, MonotoneInR) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto p = ts::two_mark_pattern(300, 1, 1, seed);
        IntensityOptions o;
        o.estimator = IntensityEstimator::Kernel;
        o.bandwidth = 0.15;
        const auto rho = intensity_at_points(p, 1, o);
        const auto r = make_r_grid(0.25, 100);
        for (auto c : {EdgeCorrection::Translation, EdgeCorrection::Border}) {
            const auto k = inhom_K(p, 1, rho, r, c);
            for (std::size_t t = 1; t < r.size(); ++t) EXPECT_GE(k.value[t], k.value[t - 1] - 1e-12);
        }
    }
}

TEST(InhomK, NonPositiveIntensityRejected) {
    const auto p = ts::two_mark_pattern(10, 1, 1, 1);
    std::vector<double> rho(5, 1.0);
    rho[2] = 0.0;
    try {
        inhom_K(p, 1, rho, make_r_grid(0.2, 10));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonPositiveIntensityAtPoint);
    }
    EXPECT_THROW(inhom_K(p, 1, std::vector<double>(4, 1.0), make_r_grid(0.2, 10)), Error);
}

TEST(InhomK, ThreadCountDoesNotChangeBits) {
    const auto p = ts::two_mark_pattern(1500, 1, 1, 77);
    const auto rho = std::vector<double>(750, 750.0);
    const auto r = make_r_grid(0.25, 200);
    const unsigned before = max_threads();
    set_max_threads(1);
    const auto k1 = inhom_K(p, 1, rho, r);
    const auto b1 = inhom_K(p, 1, rho, r, EdgeCorrection::Border);
    set_max_threads(4);
    const auto k4 = inhom_K(p, 1, rho, r);
    const auto b4 = inhom_K(p, 1, rho, r, EdgeCorrection::Border);
    set_max_threads(before);
    EXPECT_EQ(k1.value, k4.value);
    EXPECT_EQ(b1.value, b4.value);
}

TEST(InhomK, PoissonBenchmarkNearPiRSquared) {
    Philox rng(99, 3);
    const Shape w = Shape::rectangle(0, 0, 1, 1);
    auto pts = simulate_homogeneous(w, 2000, rng);
    std::vector<int> marks(pts.size(), 1);
    const MarkedPointPattern p(pts, marks, 1, w);
    const std::vector<double> rho(pts.size(), static_cast<double>(pts.size()));
    const auto r = make_r_grid(0.1, 10);
    const auto k = inhom_K(p, 1, rho, r);
    for (std::size_t t = 1; t < r.size(); ++t) EXPECT_NEAR(k.value[t] / (kPi * r[t] * r[t]), 1.0, 0.1);
}

TEST(TranslationWeights, AtLeastOneAndOneAtZeroShift) {
    const Shape w = Shape::rectangle(0, 0, 2, 1);
    const TranslationWeights tw(w, 0.5);
    EXPECT_EQ(tw({0.3, 0.3}, {0.3, 0.3}), 1.0);
    Philox rng(1);
    for (int k = 0; k < 200; ++k) {
        const Point u{2 * rng.uniform(), rng.uniform()};
        const Point v{std::clamp(u.x + rng.uniform() - 0.5, 0.0, 2.0), std::clamp(u.y + rng.uniform() - 0.5, 0.0, 1.0)};
        EXPECT_GE(tw(u, v), 1.0);
    }
}

TEST(TranslationWeights, LargePolygonUsesAccurateCovariogram) {
    // 200-gon disc of radius 1: beyond the exact-clipping vertex limit.
    Ring ring;
    for (int k = 0; k < 200; ++k) {
        const double t = 2 * kPi * k / 200;
        ring.push_back({std::cos(t), std::sin(t)});
    }
    const Shape disc({Polygon{ring, {}}});
    const TranslationWeights tw(disc, 0.5);
    EXPECT_NEAR(tw({0, 0}, {0, 0}), 1.0, 1e-12);
    for (double d : {0.1, 0.25, 0.45}) {
        const double exact = disc.area() / disc.shifted_overlap_area(d, 0.0);
        EXPECT_NEAR(tw({0, 0}, {d, 0}), exact, 2e-3 * exact) << d;
        EXPECT_GE(tw({0, 0}, {d, 0}), 1.0);
    }
}

TEST(CenterL, Algebra) {
    const auto r = make_r_grid(1.0, 50);
    SummaryCurve k{r, {}, CurveKind::K};
    for (double v : r) k.value.push_back(kPi * v * v);
    for (double v : center_L(k).value) EXPECT_NEAR(v, 0.0, 1e-15);
    SummaryCurve k4{r, {}, CurveKind::CrossK};
    for (double v : r) k4.value.push_back(4 * kPi * v * v);
    const auto l4 = center_L(k4);
    for (std::size_t t = 0; t < r.size(); ++t) EXPECT_NEAR(l4.value[t], r[t], 1e-15);
    EXPECT_EQ(l4.kind, CurveKind::CrossLCentered);
}

TEST(CenterL, ClusteringGivesPositiveValues) {
    // tight pairs: far more short-range neighbours than Poisson
    std::vector<Point> pts;
    for (const auto& q : ts::uniform_points(100, 0.98, 0.98, 5)) {
        pts.push_back({q.x + 0.005, q.y + 0.005});
        pts.push_back({q.x + 0.015, q.y + 0.01});
    }
    std::vector<int> marks(pts.size(), 1);
    const MarkedPointPattern p(pts, marks, 1, Shape::rectangle(0, 0, 1, 1));
    const std::vector<double> rho(pts.size(), 200.0);
    const auto l = center_L(inhom_K(p, 1, rho, make_r_grid(0.05, 10)));
    for (std::size_t t = 1; t < l.value.size(); ++t) EXPECT_GT(l.value[t], 0.0);
}

TEST(CenterL, NegativeKRejected) {
    SummaryCurve k{{0.0, 0.1}, {0.0, -1.0}, CurveKind::K};
    try {
        center_L(k);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NegativeKValue);
    }
}

TEST(RGrid, Defaults) {
    const auto r = make_r_grid(default_r_max(Shape::rectangle(0, 0, 8, 4)));
    ASSERT_EQ(r.size(), 513u);
    EXPECT_EQ(r.front(), 0.0);
    EXPECT_EQ(r.back(), 1.0);
    for (std::size_t t = 1; t < r.size(); ++t) EXPECT_GT(r[t], r[t - 1]);
}
