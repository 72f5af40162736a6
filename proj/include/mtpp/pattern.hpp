#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mtpp/error.hpp"
#include "mtpp/geometry.hpp"
#include "mtpp/regions.hpp"

namespace mtpp {

/// Realization of a multitype point process Y = (X_1, ..., X_M) on a window.
/// Marks are 1-based.
class MarkedPointPattern {
public:
    MarkedPointPattern() = default;
    MarkedPointPattern(std::vector<Point> points, std::vector<int> marks, int mark_count, Window window);

    const std::vector<Point>& points() const { return points_; }
    const std::vector<int>& marks() const { return marks_; }
    int mark_count() const { return mark_count_; }
    const Window& window() const { return window_; }
    std::size_t size() const { return points_.size(); }

    /// Locations carrying `mark`, in pattern order.
    std::vector<Point> points_of(int mark) const;
    std::size_t count(int mark) const;

private:
    std::vector<Point> points_;
    std::vector<int> marks_;
    int mark_count_ = 1;
    Window window_;
};

/// Raised when a point cannot be assigned to any region.
class UnlocatedPointError : public Error {
public:
    UnlocatedPointError(Point p, std::size_t index);
    Point point() const { return point_; }
    std::size_t index() const { return index_; }

private:
    Point point_;
    std::size_t index_;
};

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// N[i][j]: number of points with mark i+1 in region j (regions in id order).
CountMatrix aggregate_counts(const MarkedPointPattern& pattern, const RegionSet& regions);

}  // namespace mtpp
