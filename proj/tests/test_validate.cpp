#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "mtpp/error.hpp"
#include "mtpp/validate.hpp"

using namespace mtpp;

namespace {

ExperimentOptions quick(std::size_t reps, std::vector<double> scales) {
    ExperimentOptions o;
    o.reps = reps;
    o.scales = std::move(scales);
    o.seed = 3;
    o.fit.path.n_lambda = 25;
    return o;
}

}  // namespace

TEST(Consistency, ReportShapeAndSlope) {
    const auto sc = default_scenario();
    const auto rep = consistency_experiment(sc, quick(3, {0.5, 2.0}));
    EXPECT_EQ(rep.kind, "consistency");
    ASSERT_EQ(rep.levels.size(), 2u);
    ASSERT_EQ(rep.names.size(), 24u);
    EXPECT_EQ(std::count(rep.true_zero.begin(), rep.true_zero.end(), true), 5);
    for (const auto& lv : rep.levels) {
        EXPECT_EQ(lv.reps, 3u);
        EXPECT_EQ(lv.completed + lv.degenerate, 3u);
        EXPECT_GT(lv.mean_error, 0.0);
        EXPECT_LT(lv.max_kkt, 1e-8);
        ASSERT_EQ(lv.zero_frequency.size(), 24u);
        for (double z : lv.zero_frequency) {
            EXPECT_GE(z, 0.0);
            EXPECT_LE(z, 1.0);
        }
        // intercepts are never zeroed
        EXPECT_EQ(lv.zero_frequency[0], 0.0);
        EXPECT_EQ(lv.zero_frequency[12], 0.0);
    }
    EXPECT_NEAR(rep.levels[1].mu, 4 * rep.levels[0].mu, 1e-6 * rep.levels[1].mu);
    // two points: the slope is the secant in log-log coordinates
    const double secant = std::log(rep.levels[1].mean_error / rep.levels[0].mean_error) /
                          std::log(rep.levels[1].mu / rep.levels[0].mu);
    EXPECT_NEAR(rep.slope, secant, 1e-12);
}

TEST(Consistency, SeededAndRepeatable) {
    const auto sc = default_scenario();
    const auto a = consistency_experiment(sc, quick(2, {1.0}));
    const auto b = consistency_experiment(sc, quick(2, {1.0}));
    EXPECT_EQ(a.levels[0].mean_error, b.levels[0].mean_error);
    auto o = quick(2, {1.0});
    o.seed = 4;
    EXPECT_NE(consistency_experiment(sc, o).levels[0].mean_error, a.levels[0].mean_error);
}

TEST(Consistency, RejectsBadScales) {
    const auto sc = default_scenario();
    EXPECT_THROW(consistency_experiment(sc, quick(2, {4.0, 1.0})), Error);
    EXPECT_THROW(consistency_experiment(sc, quick(0, {1.0})), Error);
}

TEST(Selection, FrequenciesAreConsistentWithRetention) {
    const auto sc = default_scenario();
    const auto rep = selection_experiment(sc, quick(4, {1.0}));
    EXPECT_EQ(rep.kind, "selection");
    const auto& lv = rep.levels[0];
    double zsum = 0.0, asum = 0.0;
    int nz = 0, na = 0;
    for (std::size_t l = 0; l < 24; ++l) {
        if (rep.true_zero[l]) {
            zsum += lv.zero_frequency[l];
            ++nz;
        } else if (!(l == 0 || l == 12)) {
            asum += 1.0 - lv.zero_frequency[l];
            ++na;
        }
    }
    EXPECT_NEAR(lv.mean_zero_frequency, zsum / nz, 1e-12);
    EXPECT_NEAR(lv.active_retention, asum / na, 1e-12);
}

TEST(Coverage, PooledRateIsPlausible) {
    const auto sc = default_scenario();
    const auto rep = coverage_experiment(sc, 30, 0.9, 5);
    EXPECT_EQ(rep.kind, "coverage");
    ASSERT_EQ(rep.coefficient_coverage.size(), 24u);
    double mean = 0.0;
    for (double c : rep.coefficient_coverage) mean += c / 24;
    EXPECT_NEAR(rep.coverage, mean, 1e-12);
    // 720 intervals; a correct 90% procedure lands well inside this band
    EXPECT_GT(rep.coverage, 0.8);
    EXPECT_LT(rep.coverage, 0.97);
}

TEST(Report, JsonAndCsv) {
    const auto sc = default_scenario();
    const auto rep = consistency_experiment(sc, quick(2, {1.0, 2.0}));
    const auto j = nlohmann::json::parse(report_json(rep));
    EXPECT_EQ(j["kind"], "consistency");
    EXPECT_EQ(j["levels"].size(), 2u);
    EXPECT_EQ(j["seed"], 3);
    const auto dir = std::filesystem::temp_directory_path() / "mtpp_validate_test";
    std::filesystem::create_directories(dir);
    write_report_csv(rep, dir / "r.csv");
    std::ifstream in(dir / "r.csv");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    EXPECT_EQ(lines, 1u + 2u * 24u);
    std::filesystem::remove_all(dir);
}
