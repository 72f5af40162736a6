#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mtpp/npest.hpp"
#include "mtpp/pattern.hpp"

namespace mtpp {

/// Observed curve plus s simulated curves on a shared r grid.
struct CurveEnsemble {
    std::vector<double> r;
    std::vector<double> observed;
    std::vector<std::vector<double>> simulated;

    std::size_t sims() const { return simulated.size(); }
};

/// Extreme-rank-length ordering of the s+1 curves; curve 0 is the observed one
/// and curve k >= 1 is simulated[k-1].
struct ErlRanking {
    std::vector<std::vector<int>> erl;  ///< sorted pointwise ranks per curve
    std::vector<std::size_t> order;     ///< curve indices, most extreme first
    /// 1 + number of curves strictly more extreme; tied curves share it.
    std::vector<std::size_t> rank;
};

ErlRanking erl_order(const CurveEnsemble& ensemble);

struct EnvelopeResult {
    std::vector<double> r;
    std::vector<double> observed;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<bool> significant;
    double p_lower = 1.0;
    double p_upper = 1.0;
    double level = 0.95;
};

/// Smallest s accepted for a given level.
std::size_t min_simulations(double level);

EnvelopeResult global_envelope(const CurveEnsemble& ensemble, double level = 0.95);

struct EnvelopeTestOptions {
    std::size_t simulations = 999;
    double level = 0.95;
    IntensityOptions intensity{};
    /// Re-estimate the intensity on every simulated pattern; otherwise the
    /// observed-data surface is evaluated at the simulated points.
    bool reestimate = true;
    EdgeCorrection correction = EdgeCorrection::Translation;
    std::vector<double> r;  ///< empty selects make_r_grid(default_r_max(window))
    GridSize null_grid{128, 128};
    std::uint64_t seed = 1;
};

struct EnvelopeTest {
    CurveEnsemble ensemble;
    EnvelopeResult result;
};

/// Centered (cross-)L curve of the observed pattern against inhomogeneous
/// Poisson nulls simulated from the estimated intensity of each mark.
/// Replicate k uses generator stream k + 1.
EnvelopeTest envelope_test(const MarkedPointPattern& pattern, int mark_a, int mark_b,
                           const EnvelopeTestOptions& options = {});

}  // namespace mtpp
