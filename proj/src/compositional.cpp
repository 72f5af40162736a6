#include "mtpp/compositional.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mtpp/error.hpp"

namespace mtpp {

std::vector<double> alr_transform(std::span<const double> props, std::size_t ref, double sum_tolerance) {
    if (props.size() < 2) throw Error(ErrorCode::InvalidArgument, "alr needs at least two components");
    if (ref >= props.size()) throw Error(ErrorCode::InvalidArgument, "alr reference index out of range");
    double total = 0.0;
    for (std::size_t k = 0; k < props.size(); ++k) {
        if (!(props[k] > 0.0)) {
            throw Error(ErrorCode::NonPositiveComponent,
                        "component " + std::to_string(k) + " is " + std::to_string(props[k]));
        }
        total += props[k];
    }
    if (std::abs(total - 1.0) > sum_tolerance) {
        throw Error(ErrorCode::SumOutOfTolerance, "components sum to " + std::to_string(total));
    }
    // Renormalizing does not change the ratios; log(a/b) is taken directly.
    std::vector<double> out;
    out.reserve(props.size() - 1);
    for (std::size_t k = 0; k < props.size(); ++k) {
        if (k != ref) out.push_back(std::log(props[k] / props[ref]));
    }
    return out;
}

std::vector<double> inverse_alr(std::span<const double> log_ratios, std::size_t ref) {
    const std::size_t parts = log_ratios.size() + 1;
    if (ref >= parts) throw Error(ErrorCode::InvalidArgument, "alr reference index out of range");
    double shift = 0.0;
    for (double v : log_ratios) shift = std::max(shift, v);
    std::vector<double> out(parts);
    double total = 0.0;
    for (std::size_t k = 0, i = 0; k < parts; ++k) {
        out[k] = (k == ref) ? std::exp(-shift) : std::exp(log_ratios[i++] - shift);
        total += out[k];
    }
    for (double& v : out) v /= total;
    return out;
}

std::vector<double> multiplicative_replacement(std::span<const double> props) {
    double smallest = std::numeric_limits<double>::infinity();
    double total = 0.0;
    std::size_t zeros = 0;
    for (double v : props) {
        if (v < 0.0 || !std::isfinite(v)) throw Error(ErrorCode::NonPositiveComponent, "negative or non-finite share");
        if (v > 0.0) smallest = std::min(smallest, v);
        if (v == 0.0) ++zeros;
        total += v;
    }
    if (!std::isfinite(smallest)) throw Error(ErrorCode::NonPositiveComponent, "composition has no positive part");
    std::vector<double> out(props.begin(), props.end());
    for (double& v : out) v /= total;
    if (zeros == 0) return out;
    const double eps = 0.5 * smallest / total;
    const double scale = 1.0 - eps * static_cast<double>(zeros);
    for (double& v : out) v = (v == 0.0) ? eps : v * scale;
    return out;
}

}  // namespace mtpp
