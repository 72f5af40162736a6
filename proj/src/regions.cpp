#include "mtpp/regions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mtpp/error.hpp"

namespace mtpp {

Region Region::with_population(int id, Shape boundary, double population, std::map<std::string, double> covariates) {
    if (!(population >= 0.0) || !std::isfinite(population)) {
        throw Error(ErrorCode::InvalidArgument, "region " + std::to_string(id) + ": population must be >= 0");
    }
    Region r;
    r.id = id;
    r.area = boundary.area();
    r.boundary = std::move(boundary);
    r.population = population;
    r.raw_covariates = std::move(covariates);
    return r;
}

Region Region::with_density(int id, Shape boundary, double density, std::map<std::string, double> covariates) {
    if (!(density >= 0.0) || !std::isfinite(density)) {
        throw Error(ErrorCode::InvalidArgument, "region " + std::to_string(id) + ": density must be >= 0");
    }
    const double area = boundary.area();
    return with_population(id, std::move(boundary), density * area, std::move(covariates));
}

RegionSet::RegionSet(std::vector<Region> regions, std::optional<Window> window, RegionSetOptions options)
    : regions_(std::move(regions)) {
    if (regions_.empty()) throw Error(ErrorCode::InvalidArgument, "region set is empty");
    std::sort(regions_.begin(), regions_.end(), [](const Region& a, const Region& b) { return a.id < b.id; });
    for (std::size_t j = 1; j < regions_.size(); ++j) {
        if (regions_[j].id == regions_[j - 1].id) {
            throw Error(ErrorCode::InvalidArgument, "duplicate region id " + std::to_string(regions_[j].id));
        }
    }
    for (const auto& r : regions_) {
        if (!(r.area > 0.0)) throw Error(ErrorCode::InvalidGeometry, "region " + std::to_string(r.id) + " has no area");
        total_area_ += r.area;
    }

    if (window) {
        window_ = std::move(*window);
        const double gap = window_.area() - total_area_;
        if (gap > options.coverage_tolerance * window_.area()) {
            throw Error(ErrorCode::CoverageGap, "regions leave " + std::to_string(gap) + " of window area uncovered");
        }
        if (-gap > options.coverage_tolerance * window_.area()) {
            throw Error(ErrorCode::InvalidGeometry, "region areas exceed the window area (overlaps?)");
        }
    } else {
        std::vector<Polygon> all;
        for (const auto& r : regions_)
            for (const auto& p : r.boundary.polygons()) all.push_back(p);
        window_ = Shape(std::move(all));
    }

    if (options.check_disjoint) {
        for (std::size_t a = 0; a < regions_.size(); ++a) {
            for (std::size_t b = a + 1; b < regions_.size(); ++b) {
                const double overlap = intersection_area(regions_[a].boundary, regions_[b].boundary);
                if (overlap > 1e-9 * std::min(regions_[a].area, regions_[b].area)) {
                    throw Error(ErrorCode::InvalidGeometry, "regions " + std::to_string(regions_[a].id) + " and " +
                                                                std::to_string(regions_[b].id) + " overlap");
                }
            }
        }
    }
    build_index();
}

void RegionSet::build_index() {
    bbox_ = regions_.front().boundary.bbox();
    for (const auto& r : regions_) {
        const BBox& b = r.boundary.bbox();
        bbox_ = {std::min(bbox_.xmin, b.xmin), std::min(bbox_.ymin, b.ymin), std::max(bbox_.xmax, b.xmax),
                 std::max(bbox_.ymax, b.ymax)};
    }
    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(regions_.size())))) * 2;
    grid_nx_ = std::clamp<std::size_t>(side, 1, 256);
    grid_ny_ = grid_nx_;
    grid_.assign(grid_nx_ * grid_ny_, {});
    const double cw = bbox_.width() / static_cast<double>(grid_nx_);
    const double ch = bbox_.height() / static_cast<double>(grid_ny_);
    auto cell_x = [&](double x) {
        return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(0.0, (x - bbox_.xmin) / cw)), 0, grid_nx_ - 1);
    };
    auto cell_y = [&](double y) {
        return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(0.0, (y - bbox_.ymin) / ch)), 0, grid_ny_ - 1);
    };
    for (std::size_t j = 0; j < regions_.size(); ++j) {
        const BBox& b = regions_[j].boundary.bbox();
        // Widen by one cell so points on a cell edge see both neighbours.
        const std::size_t x0 = cell_x(b.xmin) == 0 ? 0 : cell_x(b.xmin) - 1;
        const std::size_t y0 = cell_y(b.ymin) == 0 ? 0 : cell_y(b.ymin) - 1;
        const std::size_t x1 = std::min(cell_x(b.xmax) + 1, grid_nx_ - 1);
        const std::size_t y1 = std::min(cell_y(b.ymax) + 1, grid_ny_ - 1);
        for (std::size_t iy = y0; iy <= y1; ++iy)
            for (std::size_t ix = x0; ix <= x1; ++ix) grid_[iy * grid_nx_ + ix].push_back(j);
    }
}

std::optional<std::size_t> RegionSet::index_of(int id) const {
    auto it = std::lower_bound(regions_.begin(), regions_.end(), id,
                               [](const Region& r, int v) { return r.id < v; });
    if (it == regions_.end() || it->id != id) return std::nullopt;
    return static_cast<std::size_t>(it - regions_.begin());
}

std::optional<std::size_t> RegionSet::locate(Point p) const {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return std::nullopt;
    const double tol = 1e-12 * std::hypot(bbox_.width(), bbox_.height());
    if (p.x < bbox_.xmin - tol || p.x > bbox_.xmax + tol || p.y < bbox_.ymin - tol || p.y > bbox_.ymax + tol) {
        return std::nullopt;
    }
    const double cw = bbox_.width() / static_cast<double>(grid_nx_);
    const double ch = bbox_.height() / static_cast<double>(grid_ny_);
    const auto ix = std::min<std::size_t>(static_cast<std::size_t>(std::max(0.0, (p.x - bbox_.xmin) / cw)), grid_nx_ - 1);
    const auto iy = std::min<std::size_t>(static_cast<std::size_t>(std::max(0.0, (p.y - bbox_.ymin) / ch)), grid_ny_ - 1);
    // Candidates are stored in ascending index (= ascending id) order.
    for (std::size_t j : grid_[iy * grid_nx_ + ix]) {
        if (regions_[j].boundary.contains(p)) return j;
    }
    return std::nullopt;
}

RegionSet RegionSet::with_population_scale(double factor) const {
    if (!(factor >= 0.0) || !std::isfinite(factor)) throw Error(ErrorCode::InvalidArgument, "population scale must be >= 0");
    RegionSet out = *this;
    for (auto& r : out.regions_) r.population *= factor;
    return out;
}

std::optional<int> locate_region(Point p, const RegionSet& rs) {
    if (auto j = rs.locate(p)) return rs[*j].id;
    return std::nullopt;
}

}  // namespace mtpp
