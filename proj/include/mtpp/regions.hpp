#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtpp/geometry.hpp"

namespace mtpp {

/// A living-area style unit: covariates and population are constant on it.
struct Region {
    int id = 0;
    Shape boundary;
    double area = 0.0;        ///< |A_j|, taken from the boundary
    double population = 0.0;  ///< ν_j = d_j |A_j|
    std::map<std::string, double> raw_covariates;

    double density() const { return population / area; }

    static Region with_population(int id, Shape boundary, double population,
                                  std::map<std::string, double> covariates = {});
    static Region with_density(int id, Shape boundary, double density, std::map<std::string, double> covariates = {});
};

struct RegionSetOptions {
    /// Largest tolerated |W \ ∪A_j| as a fraction of |W|.
    double coverage_tolerance = 1e-3;
    /// Check pairwise interior-disjointness exactly (quadratic in J).
    bool check_disjoint = false;
};

/// Partition of the window into regions, ordered by ascending id.
class RegionSet {
public:
    RegionSet() = default;
    /// Without a window the union of the regions is taken as the window.
    explicit RegionSet(std::vector<Region> regions, std::optional<Window> window = std::nullopt,
                       RegionSetOptions options = {});

    std::size_t size() const { return regions_.size(); }
    const Region& operator[](std::size_t j) const { return regions_[j]; }
    const std::vector<Region>& regions() const { return regions_; }
    std::optional<std::size_t> index_of(int id) const;

    const BBox& bbox() const { return bbox_; }
    double total_area() const { return total_area_; }
    /// Window the regions partition; the union of all regions when none was given.
    const Window& window() const { return window_; }

    /// Index of the lowest-id region whose closed boundary contains p.
    std::optional<std::size_t> locate(Point p) const;

    /// Same regions with every population multiplied by `factor`.
    RegionSet with_population_scale(double factor) const;

private:
    void build_index();

    std::vector<Region> regions_;
    Window window_;
    BBox bbox_{};
    double total_area_ = 0.0;
    std::size_t grid_nx_ = 0;
    std::size_t grid_ny_ = 0;
    std::vector<std::vector<std::size_t>> grid_;
};

/// Region id containing p, or nullopt (Outside).
std::optional<int> locate_region(Point p, const RegionSet& rs);

}  // namespace mtpp
