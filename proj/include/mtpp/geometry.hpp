#pragma once

#include <optional>
#include <vector>

namespace mtpp {

/// Planar location in projected coordinates.
struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

struct BBox {
    double xmin = 0.0;
    double ymin = 0.0;
    double xmax = 0.0;
    double ymax = 0.0;

    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
    bool contains(Point p) const { return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax; }
    bool intersects(const BBox& o) const {
        return xmin <= o.xmax && o.xmin <= xmax && ymin <= o.ymax && o.ymin <= ymax;
    }
};

/// Open ring: the closing vertex is not repeated.
using Ring = std::vector<Point>;

struct Polygon {
    Ring outer;
    std::vector<Ring> holes;
};

double signed_area(const Ring& ring);
double distance_to_segment(Point p, Point a, Point b);

/// Union of interior-disjoint polygons (with optional holes). Rings are
/// normalized on construction: outer rings counter-clockwise, holes
/// clockwise, duplicate closing vertices removed.
class Shape {
public:
    Shape() = default;
    explicit Shape(std::vector<Polygon> polygons);

    static Shape rectangle(double xmin, double ymin, double xmax, double ymax);

    const std::vector<Polygon>& polygons() const { return polygons_; }
    bool empty() const { return polygons_.empty(); }
    double area() const { return area_; }
    const BBox& bbox() const { return bbox_; }

    /// Closed containment: points on the boundary (within a relative
    /// tolerance of 1e-12 of the bounding-box diagonal) are inside.
    bool contains(Point p) const;
    bool on_boundary(Point p) const;
    /// Distance from p to the nearest boundary edge.
    double boundary_distance(Point p) const;

    /// Set when the shape is a single axis-aligned rectangle.
    const std::optional<BBox>& as_rectangle() const { return rectangle_; }

    Shape translated(double dx, double dy) const;

    /// |W ∩ (W + (dx, dy))|, the set covariance of the shape.
    double shifted_overlap_area(double dx, double dy) const;

private:
    std::vector<Polygon> polygons_;
    double area_ = 0.0;
    BBox bbox_{};
    double tolerance_ = 0.0;
    std::optional<BBox> rectangle_;
};

using Window = Shape;

/// Exact area of A ∩ B via signed triangle fans and convex clipping.
double intersection_area(const Shape& a, const Shape& b);

/// Area of a convex polygon clipped by a convex polygon (both CCW).
double convex_intersection_area(const std::vector<Point>& subject, const std::vector<Point>& clip);

}  // namespace mtpp
