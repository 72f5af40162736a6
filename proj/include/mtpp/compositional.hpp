#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mtpp {

/// Additive log-ratio transform of a composition against component `ref`
/// (0-based). Output keeps the input order with `ref` removed. Components
/// must be positive and sum to 1 within `sum_tolerance`; within tolerance
/// the composition is renormalized first.
std::vector<double> alr_transform(std::span<const double> props, std::size_t ref, double sum_tolerance = 1e-6);

/// Inverse of alr_transform: returns the K-part composition.
std::vector<double> inverse_alr(std::span<const double> log_ratios, std::size_t ref);

/// Multiplicative replacement of zero parts: zeros become half the smallest
/// positive share, positive parts are scaled so the total stays 1.
std::vector<double> multiplicative_replacement(std::span<const double> props);

}  // namespace mtpp
