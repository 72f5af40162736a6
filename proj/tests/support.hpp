#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mtpp/geometry.hpp"
#include "mtpp/pattern.hpp"
#include "mtpp/regions.hpp"
#include "mtpp/rng.hpp"

namespace testing_support {

using mtpp::Point;

// nx × ny unit-ish squares of side `cell`, ids 1..nx*ny row-major from the
// bottom-left. Populations and the covariates named in `covs` are random.
inline std::vector<mtpp::Region> grid_regions(int nx, int ny, double cell, std::uint64_t seed,
                                              const std::vector<std::string>& covs = {}) {
    mtpp::Philox rng(seed, 99);
    std::vector<mtpp::Region> out;
    int id = 1;
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            std::map<std::string, double> raw;
            for (const auto& c : covs) raw[c] = 2.0 * rng.uniform() - 1.0;
            out.push_back(mtpp::Region::with_population(
                id++, mtpp::Shape::rectangle(ix * cell, iy * cell, (ix + 1) * cell, (iy + 1) * cell),
                200.0 + 800.0 * rng.uniform(), raw));
        }
    return out;
}

inline std::vector<Point> uniform_points(std::size_t n, double w, double h, std::uint64_t seed,
                                         std::uint64_t stream = 0) {
    mtpp::Philox rng(seed, stream);
    std::vector<Point> pts(n);
    for (auto& p : pts) p = {w * rng.uniform(), h * rng.uniform()};
    return pts;
}

inline mtpp::MarkedPointPattern two_mark_pattern(std::size_t n, double w, double h, std::uint64_t seed) {
    auto pts = uniform_points(n, w, h, seed);
    std::vector<int> marks(n);
    for (std::size_t k = 0; k < n; ++k) marks[k] = 1 + static_cast<int>(k % 2);
    return mtpp::MarkedPointPattern(std::move(pts), std::move(marks), 2, mtpp::Shape::rectangle(0, 0, w, h));
}

// Ray-casting containment written independently of the library.
inline bool ray_inside(const std::vector<Point>& ring, Point p) {
    bool in = false;
    for (std::size_t a = 0, b = ring.size() - 1; a < ring.size(); b = a++) {
        if ((ring[a].y > p.y) != (ring[b].y > p.y)) {
            const double x = ring[b].x + (p.y - ring[b].y) * (ring[a].x - ring[b].x) / (ring[a].y - ring[b].y);
            if (p.x < x) in = !in;
        }
    }
    return in;
}

inline double shoelace(const std::vector<Point>& ring) {
    double s = 0.0;
    for (std::size_t a = 0, b = ring.size() - 1; a < ring.size(); b = a++) s += ring[b].x * ring[a].y - ring[a].x * ring[b].y;
    return 0.5 * std::abs(s);
}

}  // namespace testing_support
