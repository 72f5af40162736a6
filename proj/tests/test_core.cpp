#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <gtest/gtest.h>

#include "mtpp/compositional.hpp"
#include "mtpp/design.hpp"
#include "mtpp/error.hpp"
#include "mtpp/fit.hpp"
#include "mtpp/io.hpp"
#include "mtpp/pattern.hpp"
#include "mtpp/regions.hpp"
#include "mtpp/sim.hpp"
#include "support.hpp"

using namespace mtpp;
namespace ts = testing_support;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no mtpp::Error thrown";
    return ErrorCode::InvalidArgument;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / ("mtpp_core_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// compositional

TEST(Alr, EqualSharesGiveZeros) {
    const std::vector<double> p{1.0 / 3, 1.0 / 3, 1.0 / 3};
    const auto out = alr_transform(p, 2);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_NEAR(out[0], 0.0, 1e-15);
    EXPECT_NEAR(out[1], 0.0, 1e-15);
}

TEST(Alr, DirectArithmetic) {
    const std::vector<double> p{0.2, 0.3, 0.5};
    const auto out = alr_transform(p, 2);
    EXPECT_NEAR(out[0], std::log(0.4), 1e-14);
    EXPECT_NEAR(out[1], std::log(0.6), 1e-14);
    EXPECT_NEAR(out[0], -0.9163, 1e-4);
    EXPECT_NEAR(out[1], -0.5108, 1e-4);
}

TEST(Alr, ReferenceInTheMiddleKeepsOrder) {
    const std::vector<double> p{0.1, 0.4, 0.5};
    const auto out = alr_transform(p, 1);
    EXPECT_NEAR(out[0], std::log(0.25), 1e-14);
    EXPECT_NEAR(out[1], std::log(1.25), 1e-14);
}

TEST(Alr, ZeroComponentRejected) {
    const std::vector<double> p{0.5, 0.0, 0.5};
    EXPECT_EQ(code_of([&] { alr_transform(p, 2); }), ErrorCode::NonPositiveComponent);
}

TEST(Alr, SumOutsideToleranceRejected) {
    const std::vector<double> p{0.2, 0.3, 0.6};
    EXPECT_EQ(code_of([&] { alr_transform(p, 2); }), ErrorCode::SumOutOfTolerance);
}

TEST(Alr, SumWithinToleranceRenormalized) {
    const std::vector<double> p{0.2, 0.3, 0.5 + 5e-7};
    const auto out = alr_transform(p, 2);
    EXPECT_NEAR(out[0], std::log(0.2 / (0.5 + 5e-7)), 1e-14);
}

TEST(Alr, InverseRoundTrip) {
    Philox rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t K = 2 + rep % 5;
        std::vector<double> p(K);
        for (auto& v : p) v = 0.01 + rng.uniform();
        const double s = std::accumulate(p.begin(), p.end(), 0.0);
        for (auto& v : p) v /= s;
        const std::size_t ref = static_cast<std::size_t>(rep) % K;
        const auto back = inverse_alr(alr_transform(p, ref), ref);
        ASSERT_EQ(back.size(), K);
        for (std::size_t k = 0; k < K; ++k) EXPECT_NEAR(back[k], p[k], 1e-12);
    }
}

TEST(Alr, MultiplicativeReplacement) {
    const std::vector<double> p{0.5, 0.0, 0.3, 0.2};
    const auto q = multiplicative_replacement(p);
    EXPECT_NEAR(q[1], 0.1, 1e-15);
    EXPECT_NEAR(std::accumulate(q.begin(), q.end(), 0.0), 1.0, 1e-15);
    EXPECT_NEAR(q[0] / q[2], 0.5 / 0.3, 1e-12);
}

// ---------------------------------------------------------------------------
// geometry

TEST(Geometry, ShoelaceArea) {
    const Shape s({Polygon{{{0, 0}, {4, 0}, {4, 3}, {1, 5}, {0, 3}}, {}}});
    EXPECT_NEAR(s.area(), ts::shoelace({{0, 0}, {4, 0}, {4, 3}, {1, 5}, {0, 3}}), 1e-12);
}

TEST(Geometry, HoleSubtractsArea) {
    const Shape s({Polygon{{{0, 0}, {10, 0}, {10, 10}, {0, 10}}, {{{2, 2}, {4, 2}, {4, 4}, {2, 4}}}}});
    EXPECT_NEAR(s.area(), 96.0, 1e-12);
    EXPECT_FALSE(s.contains({3, 3}));
    EXPECT_TRUE(s.contains({1, 1}));
    EXPECT_TRUE(s.contains({2, 3}));  // hole boundary counts as inside the closed shape
}

TEST(Geometry, ClockwiseInputNormalized) {
    const Shape s({Polygon{{{0, 0}, {0, 2}, {3, 2}, {3, 0}, {0, 0}}, {}}});
    EXPECT_NEAR(s.area(), 6.0, 1e-15);
    ASSERT_TRUE(s.as_rectangle().has_value());
}

TEST(Geometry, RectangleSetCovariance) {
    const Shape s = Shape::rectangle(0, 0, 3, 2);
    for (double dx : {-1.3, 0.0, 0.4, 2.9})
        for (double dy : {-0.7, 0.0, 1.5}) {
            const double expect = std::max(0.0, 3 - std::abs(dx)) * std::max(0.0, 2 - std::abs(dy));
            EXPECT_NEAR(s.shifted_overlap_area(dx, dy), expect, 1e-12);
        }
}

TEST(Geometry, PolygonSetCovarianceMatchesMonteCarloFreeOracle) {
    // L-shape as two rectangles: the overlap splits into four rectangle pairs.
    const Shape L({Polygon{{{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}}, {}}});
    const BBox a{0, 0, 2, 1}, b{0, 1, 1, 2};
    auto ov = [](BBox p, BBox q) {
        return std::max(0.0, std::min(p.xmax, q.xmax) - std::max(p.xmin, q.xmin)) *
               std::max(0.0, std::min(p.ymax, q.ymax) - std::max(p.ymin, q.ymin));
    };
    for (double dx : {0.0, 0.3, -0.6})
        for (double dy : {0.0, 0.45, -0.2}) {
            auto sh = [&](BBox r) { return BBox{r.xmin + dx, r.ymin + dy, r.xmax + dx, r.ymax + dy}; };
            const double expect = ov(a, sh(a)) + ov(a, sh(b)) + ov(b, sh(a)) + ov(b, sh(b));
            EXPECT_NEAR(L.shifted_overlap_area(dx, dy), expect, 1e-12) << dx << "," << dy;
        }
}

// ---------------------------------------------------------------------------
// regions and pattern

TEST(Regions, LocateCentroid) {
    const RegionSet rs(ts::grid_regions(4, 3, 1.0, 1));
    // id 7 is the third cell of the second row: [2,3] x [1,2]
    EXPECT_EQ(locate_region({2.5, 1.5}, rs), 7);
    EXPECT_FALSE(locate_region({4.5, 1.5}, rs).has_value());
    EXPECT_FALSE(locate_region({-0.1, 0.0}, rs).has_value());
}

TEST(Regions, SharedEdgeGoesToLowestId) {
    std::vector<Region> r;
    r.push_back(Region::with_population(5, Shape::rectangle(0, 0, 1, 1), 10));
    r.push_back(Region::with_population(2, Shape::rectangle(1, 0, 2, 1), 10));
    const RegionSet rs(r);
    EXPECT_EQ(locate_region({1.0, 0.5}, rs), 2);
    EXPECT_EQ(rs[0].id, 2);  // sorted by id
}

TEST(Regions, DensityGivesPopulation) {
    const auto r = Region::with_density(1, Shape::rectangle(0, 0, 2, 3), 7.5);
    EXPECT_NEAR(r.population, 45.0, 1e-12);
    EXPECT_NEAR(r.density(), 7.5, 1e-15);
}

TEST(Regions, CoverageGapRejected) {
    auto regions = ts::grid_regions(2, 2, 1.0, 1);
    regions.pop_back();
    EXPECT_EQ(code_of([&] { RegionSet rs(regions, Shape::rectangle(0, 0, 2, 2)); }), ErrorCode::CoverageGap);
}

TEST(Regions, OverlapDetectedWhenAsked) {
    std::vector<Region> r;
    r.push_back(Region::with_population(1, Shape::rectangle(0, 0, 1.5, 1), 1));
    r.push_back(Region::with_population(2, Shape::rectangle(1, 0, 2, 1), 1));
    RegionSetOptions o;
    o.check_disjoint = true;
    EXPECT_EQ(code_of([&] { RegionSet rs(r, Shape::rectangle(0, 0, 2, 1), o); }), ErrorCode::InvalidGeometry);
}

TEST(Pattern, PointOutsideWindowRejected) {
    EXPECT_ANY_THROW(MarkedPointPattern({{2, 2}}, {1}, 1, Shape::rectangle(0, 0, 1, 1)));
    EXPECT_ANY_THROW(MarkedPointPattern({{0.5, 0.5}}, {3}, 2, Shape::rectangle(0, 0, 1, 1)));
    EXPECT_ANY_THROW(MarkedPointPattern({{0.5, 0.5}}, {}, 1, Shape::rectangle(0, 0, 1, 1)));
}

TEST(Counts, EmptyPattern) {
    const RegionSet rs(ts::grid_regions(2, 1, 1.0, 1));
    const MarkedPointPattern p({}, {}, 3, rs.window());
    const auto N = aggregate_counts(p, rs);
    EXPECT_EQ(N.rows(), 3);
    EXPECT_EQ(N.cols(), 2);
    EXPECT_EQ(N.sum(), 0);
}

TEST(Counts, SmallExample) {
    const RegionSet rs(ts::grid_regions(2, 1, 1.0, 1));
    const MarkedPointPattern p({{0.2, 0.2}, {0.5, 0.7}, {0.9, 0.1}, {1.5, 0.5}}, {1, 1, 1, 2}, 2, rs.window());
    const auto N = aggregate_counts(p, rs);
    EXPECT_EQ(N(0, 0), 3);
    EXPECT_EQ(N(0, 1), 0);
    EXPECT_EQ(N(1, 0), 0);
    EXPECT_EQ(N(1, 1), 1);
}

TEST(Counts, MatchesBruteForcePointInPolygon) {
    // 10 irregular strips: vertical cuts at jittered abscissae with a kink.
    std::vector<Region> regions;
    std::vector<std::vector<Point>> rings;
    Philox rng(17);
    std::vector<double> cut{0.0};
    for (int k = 1; k < 10; ++k) cut.push_back(k + 0.4 * (rng.uniform() - 0.5));
    cut.push_back(10.0);
    for (int k = 0; k < 10; ++k) {
        const double kink_l = k == 0 ? 0.0 : 0.3;
        const double kink_r = k == 9 ? 0.0 : 0.3;
        std::vector<Point> ring{{cut[k], 0}, {cut[k + 1], 0}, {cut[k + 1] + kink_r, 2}, {cut[k + 1], 4},
                                {cut[k], 4}, {cut[k] + kink_l, 2}};
        rings.push_back(ring);
        regions.push_back(Region::with_population(k + 1, Shape({Polygon{ring, {}}}), 100));
    }
    const RegionSet rs(regions, Shape::rectangle(0, 0, 10, 4));
    auto pts = ts::uniform_points(500, 10, 4, 3);
    std::vector<int> marks(500);
    for (std::size_t k = 0; k < 500; ++k) marks[k] = 1 + static_cast<int>(rng.uniform() * 3);
    const MarkedPointPattern p(pts, marks, 3, rs.window());
    const auto N = aggregate_counts(p, rs);

    CountMatrix brute = CountMatrix::Zero(3, 10);
    for (std::size_t k = 0; k < pts.size(); ++k) {
        int hits = 0;
        for (int j = 0; j < 10; ++j)
            if (ts::ray_inside(rings[j], pts[k])) {
                ++brute(marks[k] - 1, j);
                ++hits;
            }
        ASSERT_EQ(hits, 1);
    }
    EXPECT_EQ(N, brute);
    EXPECT_EQ(N.sum(), 500);
}

TEST(Counts, PermutationInvariant) {
    const RegionSet rs(ts::grid_regions(5, 5, 2.0, 1));
    auto p = ts::two_mark_pattern(300, 10, 10, 8);
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    Philox rng(4);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Point> pts;
    std::vector<int> marks;
    for (auto k : order) {
        pts.push_back(p.points()[k]);
        marks.push_back(p.marks()[k]);
    }
    const MarkedPointPattern q(pts, marks, 2, p.window());
    EXPECT_EQ(aggregate_counts(p, rs), aggregate_counts(q, rs));
}

TEST(Counts, UnlocatedPointCarriesThePoint) {
    const RegionSet rs(ts::grid_regions(2, 1, 1.0, 1));
    const MarkedPointPattern p({{0.5, 0.5}, {2.5, 0.5}}, {1, 1}, 1, Shape::rectangle(0, 0, 3, 1));
    try {
        aggregate_counts(p, rs);
        FAIL();
    } catch (const UnlocatedPointError& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnlocatedPoint);
        EXPECT_EQ(e.index(), 1u);
        EXPECT_EQ(e.point().x, 2.5);
    }
}

// ---------------------------------------------------------------------------
// design

TEST(Design, SingleRegionSingleCovariate) {
    std::vector<Region> r{Region::with_population(1, Shape::rectangle(0, 0, 1, 1), 1000, {{"x", 2.5}})};
    const RegionSet rs(r);
    const auto spec = DesignSpec::parse("marks 1\ngroup g: x\n");
    const auto d = build_design(rs, spec);
    ASSERT_EQ(d.z.size(), 1u);
    EXPECT_EQ(d.z[0].rows(), 1);
    EXPECT_EQ(d.z[0].cols(), 2);
    EXPECT_EQ(d.z[0](0, 0), 1.0);
    EXPECT_EQ(d.z[0](0, 1), 2.5);
    EXPECT_EQ(d.log_population[0], std::log(1000.0));
}

TEST(Design, PaperLayout) {
    const auto spec = DesignSpec::parse(default_design_text());
    EXPECT_EQ(spec.mark_count(), 2);
    EXPECT_EQ(spec.mark_width(1), 12u);
    EXPECT_EQ(spec.mark_width(2), 12u);
    EXPECT_EQ(spec.size(), 24u);
    ASSERT_EQ(spec.groups().size(), 6u);
    const std::vector<std::size_t> sizes{3, 3, 4, 4, 4, 4};
    for (std::size_t g = 0; g < 6; ++g) EXPECT_EQ(spec.groups()[g].indices.size(), sizes[g]);
    // groups start right after each intercept
    EXPECT_EQ(spec.groups()[0].indices.front(), 1u);
    EXPECT_EQ(spec.groups()[1].indices.front(), 13u);
}

TEST(Design, GroupInvariants) {
    const auto spec = DesignSpec::parse(default_design_text());
    std::vector<int> seen(spec.size(), 0);
    for (const auto& g : spec.groups())
        for (auto l : g.indices) ++seen[l];
    for (std::size_t l = 0; l < spec.size(); ++l) {
        if (spec.is_intercept(l)) {
            EXPECT_FALSE(spec.penalized(l));
            EXPECT_EQ(seen[l], 0);
            EXPECT_FALSE(spec.group_of(l).has_value());
        } else if (spec.penalized(l)) {
            EXPECT_EQ(seen[l], 1);
        }
    }
}

TEST(Design, TextRoundTrip) {
    const auto spec = DesignSpec::parse(default_design_text());
    const auto again = DesignSpec::parse(spec.to_text());
    EXPECT_EQ(again.to_text(), spec.to_text());
    ASSERT_EQ(again.size(), spec.size());
    for (std::size_t l = 0; l < spec.size(); ++l) EXPECT_EQ(again.coefficient_name(l), spec.coefficient_name(l));
}

TEST(Design, ParseErrorNamesLine) {
    try {
        DesignSpec::parse("marks 2\nfrobnicate a b\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParseError);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
}

TEST(Design, MissingCovariate) {
    const RegionSet rs(ts::grid_regions(2, 2, 1.0, 1, {"a"}));
    const auto spec = DesignSpec::parse("marks 1\ngroup g: a, b\n");
    EXPECT_EQ(code_of([&] { build_design(rs, spec); }), ErrorCode::MissingCovariate);
}

TEST(Design, OffsetIsLogPopulationExactly) {
    const auto sc = default_scenario();
    const auto& d = sc.design;
    for (std::size_t j = 0; j < d.regions(); ++j) {
        ASSERT_GT(d.population[static_cast<Eigen::Index>(j)], 0.0);
        EXPECT_EQ(std::exp(d.log_population[static_cast<Eigen::Index>(j)]),
                  std::exp(std::log(d.population[static_cast<Eigen::Index>(j)])));
        EXPECT_NEAR(std::exp(d.log_population[static_cast<Eigen::Index>(j)]), d.population[static_cast<Eigen::Index>(j)],
                    1e-12 * d.population[static_cast<Eigen::Index>(j)]);
    }
    for (const auto& z : d.z) EXPECT_TRUE((z.col(0).array() == 1.0).all());
}

TEST(Design, ZeroPopulationRegionWithPointIsInconsistent) {
    auto regions = ts::grid_regions(2, 1, 1.0, 1, {"a"});
    regions[1] = Region::with_population(2, Shape::rectangle(1, 0, 2, 1), 0.0, {{"a", 0.3}});
    const RegionSet rs(regions);
    const auto spec = DesignSpec::parse("marks 1\ngroup g: a\n");
    const auto d = build_design(rs, spec);
    EXPECT_TRUE(d.zero_population[1]);
    EXPECT_TRUE(std::isinf(d.log_population[1]));
    const MarkedPointPattern ok({{0.5, 0.5}}, {1}, 1, rs.window());
    EXPECT_NO_THROW(make_model(ok, rs, spec));
    const MarkedPointPattern bad({{1.5, 0.5}}, {1}, 1, rs.window());
    EXPECT_EQ(code_of([&] { make_model(bad, rs, spec); }), ErrorCode::InconsistentData);
}

TEST(Design, AlrTransformFromRawShares) {
    std::vector<Region> r{Region::with_population(1, Shape::rectangle(0, 0, 1, 1), 10,
                                                  {{"a", 0.2}, {"b", 0.3}, {"c", 0.5}})};
    const RegionSet rs(r);
    const auto spec = DesignSpec::parse("marks 1\nalr a b c ref=c\ngroup g: log(a/c), log(b/c)\n");
    const auto d = build_design(rs, spec);
    EXPECT_NEAR(d.z[0](0, 1), std::log(0.4), 1e-14);
    EXPECT_NEAR(d.z[0](0, 2), std::log(0.6), 1e-14);
}

TEST(Design, ZeroShareNeedsReplacementOption) {
    std::vector<Region> r{Region::with_population(1, Shape::rectangle(0, 0, 1, 1), 10,
                                                  {{"a", 0.0}, {"b", 0.5}, {"c", 0.5}})};
    const RegionSet rs(r);
    const auto spec = DesignSpec::parse("marks 1\nalr a b c ref=c\ngroup g: log(a/c), log(b/c)\n");
    EXPECT_EQ(code_of([&] { build_design(rs, spec); }), ErrorCode::NonPositiveComponent);
    DesignOptions o;
    o.zero_replacement = true;
    const auto d = build_design(rs, spec, o);
    EXPECT_TRUE(std::isfinite(d.z[0](0, 1)));
}

// ---------------------------------------------------------------------------
// io

TEST(Io, FormatDoubleRoundTrips) {
    Philox rng(3);
    for (int k = 0; k < 1000; ++k) {
        const double v = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<int>(rng.uniform() * 40) - 20);
        EXPECT_EQ(std::stod(io::format_double(v)), v);
    }
    EXPECT_EQ(io::format_double(0.1), "0.10000000000000001");
}

TEST(Io, PointsRoundTrip) {
    const auto dir = temp_dir("points");
    const auto p = ts::two_mark_pattern(50, 3, 2, 9);
    io::write_points_csv(dir / "p.csv", p.points(), p.marks());
    const auto back = io::read_points_csv(dir / "p.csv");
    EXPECT_EQ(back.points, p.points());
    EXPECT_EQ(back.marks, p.marks());
    EXPECT_EQ(back.max_mark, 2);
}

TEST(Io, PointsParseErrorNamesLineAndField) {
    const auto dir = temp_dir("badpoints");
    io::write_text_file(dir / "p.csv", "x,y,mark\n1,2,1\n1,abc,1\n");
    try {
        io::read_points_csv(dir / "p.csv");
        FAIL();
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_EQ(e.code(), ErrorCode::ParseError);
        EXPECT_NE(msg.find(":3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("y"), std::string::npos) << msg;
    }
}

TEST(Io, MissingFileIsFileError) {
    try {
        io::read_regions_geojson("/nonexistent/regions.geojson");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::FileError);
        EXPECT_NE(std::string(e.what()).find("/nonexistent/regions.geojson"), std::string::npos);
    }
}

TEST(Io, RegionsRoundTrip) {
    const auto dir = temp_dir("regions");
    const auto regions = ts::grid_regions(3, 2, 1.5, 4, {"u", "v"});
    io::write_regions_geojson(dir / "r.geojson", regions);
    const auto back = io::read_regions_geojson(dir / "r.geojson");
    ASSERT_EQ(back.size(), regions.size());
    for (std::size_t j = 0; j < regions.size(); ++j) {
        EXPECT_EQ(back[j].id, regions[j].id);
        EXPECT_EQ(back[j].population, regions[j].population);
        EXPECT_EQ(back[j].raw_covariates, regions[j].raw_covariates);
        EXPECT_NEAR(back[j].area, regions[j].area, 1e-12);
    }
}

TEST(Io, DensityPropertyAccepted) {
    const auto dir = temp_dir("density");
    io::write_text_file(dir / "r.geojson", R"({"type":"FeatureCollection","features":[
      {"type":"Feature","properties":{"id":3,"density":2.0,"w":1.5},
       "geometry":{"type":"Polygon","coordinates":[[[0,0],[2,0],[2,2],[0,2],[0,0]]]}}]})");
    const auto r = io::read_regions_geojson(dir / "r.geojson");
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].id, 3);
    EXPECT_NEAR(r[0].population, 8.0, 1e-12);
    EXPECT_EQ(r[0].raw_covariates.at("w"), 1.5);
}

TEST(Io, WindowFromMultiPolygon) {
    const auto dir = temp_dir("window");
    io::write_text_file(dir / "w.geojson", R"({"type":"MultiPolygon","coordinates":[
      [[[0,0],[1,0],[1,1],[0,1],[0,0]]], [[[2,0],[3,0],[3,2],[2,2],[2,0]]]]})");
    const auto w = io::read_window_geojson(dir / "w.geojson");
    EXPECT_NEAR(w.area(), 3.0, 1e-12);
    EXPECT_FALSE(w.contains({1.5, 0.5}));
}
