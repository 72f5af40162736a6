#include "mtpp/pattern.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace mtpp {

MarkedPointPattern::MarkedPointPattern(std::vector<Point> points, std::vector<int> marks, int mark_count,
                                       Window window)
    : points_(std::move(points)), marks_(std::move(marks)), mark_count_(mark_count), window_(std::move(window)) {
    if (mark_count_ < 1) throw Error(ErrorCode::InvalidArgument, "mark count must be >= 1");
    if (points_.size() != marks_.size()) throw Error(ErrorCode::InvalidArgument, "points and marks differ in length");
    for (std::size_t k = 0; k < points_.size(); ++k) {
        const Point p = points_[k];
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            throw Error(ErrorCode::InvalidArgument, "point " + std::to_string(k) + " has non-finite coordinates");
        }
        if (marks_[k] < 1 || marks_[k] > mark_count_) {
            throw Error(ErrorCode::InvalidArgument,
                        "point " + std::to_string(k) + " has mark " + std::to_string(marks_[k]) + " outside 1.." +
                            std::to_string(mark_count_));
        }
        if (!window_.contains(p)) {
            std::ostringstream msg;
            msg << "point " << k << " (" << p.x << ", " << p.y << ") lies outside the window";
            throw Error(ErrorCode::InvalidArgument, msg.str());
        }
    }
}

std::vector<Point> MarkedPointPattern::points_of(int mark) const {
    std::vector<Point> out;
    for (std::size_t k = 0; k < points_.size(); ++k)
        if (marks_[k] == mark) out.push_back(points_[k]);
    return out;
}

std::size_t MarkedPointPattern::count(int mark) const {
    std::size_t n = 0;
    for (int m : marks_) n += (m == mark);
    return n;
}

namespace {
std::string describe(Point p, std::size_t index) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "point " << index << " at (" << p.x << ", " << p.y << ") is not inside any region";
    return msg.str();
}
}  // namespace

UnlocatedPointError::UnlocatedPointError(Point p, std::size_t index)
    : Error(ErrorCode::UnlocatedPoint, describe(p, index)), point_(p), index_(index) {}

CountMatrix aggregate_counts(const MarkedPointPattern& pattern, const RegionSet& regions) {
    CountMatrix counts = CountMatrix::Zero(pattern.mark_count(), static_cast<Eigen::Index>(regions.size()));
    const auto& pts = pattern.points();
    const auto& marks = pattern.marks();
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto j = regions.locate(pts[k]);
        if (!j) throw UnlocatedPointError(pts[k], k);
        counts(marks[k] - 1, static_cast<Eigen::Index>(*j)) += 1;
    }
    return counts;
}

}  // namespace mtpp
