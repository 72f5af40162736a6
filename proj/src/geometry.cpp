#include "mtpp/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "mtpp/error.hpp"

namespace mtpp {

namespace {

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

Ring normalize_ring(Ring ring, bool ccw) {
    if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
    Ring cleaned;
    cleaned.reserve(ring.size());
    for (const auto& p : ring) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            throw Error(ErrorCode::InvalidGeometry, "non-finite polygon vertex");
        }
        if (cleaned.empty() || !(cleaned.back() == p)) cleaned.push_back(p);
    }
    if (cleaned.size() > 1 && cleaned.front() == cleaned.back()) cleaned.pop_back();
    if (cleaned.size() < 3) throw Error(ErrorCode::InvalidGeometry, "ring with fewer than 3 distinct vertices");
    const double a = signed_area(cleaned);
    if (a == 0.0) throw Error(ErrorCode::InvalidGeometry, "ring with zero area");
    if ((a > 0.0) != ccw) std::reverse(cleaned.begin(), cleaned.end());
    return cleaned;
}

bool crosses(const Ring& ring, Point p) {
    bool inside = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point a = ring[j];
        const Point b = ring[i];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double xc = a.x + (b.x - a.x) * (p.y - a.y) / (b.y - a.y);
            if (p.x < xc) inside = !inside;
        }
    }
    return inside;
}

struct FanTriangle {
    std::vector<Point> v;  // CCW
    BBox box;
    double sign;
};

std::vector<FanTriangle> signed_fan(const Shape& s, double dx = 0.0, double dy = 0.0) {
    std::vector<FanTriangle> fan;
    if (s.empty()) return fan;
    const Point o{s.polygons().front().outer.front().x + dx, s.polygons().front().outer.front().y + dy};
    auto add_ring = [&](const Ring& ring) {
        const std::size_t n = ring.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Point a{ring[i].x + dx, ring[i].y + dy};
            const Point b{ring[(i + 1) % n].x + dx, ring[(i + 1) % n].y + dy};
            const double c = cross(o, a, b);
            if (c == 0.0) continue;
            FanTriangle t;
            t.sign = c > 0.0 ? 1.0 : -1.0;
            t.v = c > 0.0 ? std::vector<Point>{o, a, b} : std::vector<Point>{o, b, a};
            t.box = {std::min({o.x, a.x, b.x}), std::min({o.y, a.y, b.y}), std::max({o.x, a.x, b.x}),
                     std::max({o.y, a.y, b.y})};
            fan.push_back(std::move(t));
        }
    };
    for (const auto& poly : s.polygons()) {
        add_ring(poly.outer);
        for (const auto& h : poly.holes) add_ring(h);
    }
    return fan;
}

double fan_intersection(const std::vector<FanTriangle>& fa, const std::vector<FanTriangle>& fb) {
    double total = 0.0;
    for (const auto& ta : fa) {
        for (const auto& tb : fb) {
            if (!ta.box.intersects(tb.box)) continue;
            const double a = convex_intersection_area(ta.v, tb.v);
            if (a != 0.0) total += ta.sign * tb.sign * a;
        }
    }
    return total;
}

}  // namespace

double signed_area(const Ring& ring) {
    double s = 0.0;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        s += (ring[j].x * ring[i].y) - (ring[i].x * ring[j].y);
    }
    return 0.5 * s;
}

double distance_to_segment(Point p, Point a, Point b) {
    const double vx = b.x - a.x;
    const double vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

Shape::Shape(std::vector<Polygon> polygons) {
    if (polygons.empty()) throw Error(ErrorCode::InvalidGeometry, "shape without polygons");
    bbox_ = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (auto& poly : polygons) {
        poly.outer = normalize_ring(std::move(poly.outer), true);
        double a = signed_area(poly.outer);
        for (auto& h : poly.holes) {
            h = normalize_ring(std::move(h), false);
            a += signed_area(h);
        }
        area_ += a;
        for (const auto& p : poly.outer) {
            bbox_.xmin = std::min(bbox_.xmin, p.x);
            bbox_.ymin = std::min(bbox_.ymin, p.y);
            bbox_.xmax = std::max(bbox_.xmax, p.x);
            bbox_.ymax = std::max(bbox_.ymax, p.y);
        }
    }
    polygons_ = std::move(polygons);
    if (!(area_ > 0.0)) throw Error(ErrorCode::InvalidGeometry, "shape area must be positive");
    tolerance_ = 1e-12 * std::hypot(bbox_.width(), bbox_.height());

    if (polygons_.size() == 1 && polygons_[0].holes.empty() && polygons_[0].outer.size() == 4) {
        const Ring& r = polygons_[0].outer;
        bool axis_aligned = true;
        for (std::size_t i = 0; i < 4; ++i) {
            const Point a = r[i];
            const Point b = r[(i + 1) % 4];
            if (a.x != b.x && a.y != b.y) axis_aligned = false;
        }
        if (axis_aligned) rectangle_ = bbox_;
    }
}

Shape Shape::rectangle(double xmin, double ymin, double xmax, double ymax) {
    if (!(xmax > xmin) || !(ymax > ymin)) throw Error(ErrorCode::InvalidGeometry, "degenerate rectangle");
    return Shape({Polygon{{{xmin, ymin}, {xmax, ymin}, {xmax, ymax}, {xmin, ymax}}, {}}});
}

bool Shape::on_boundary(Point p) const {
    for (const auto& poly : polygons_) {
        auto check = [&](const Ring& ring) {
            const std::size_t n = ring.size();
            for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
                if (distance_to_segment(p, ring[j], ring[i]) <= tolerance_) return true;
            }
            return false;
        };
        if (check(poly.outer)) return true;
        for (const auto& h : poly.holes)
            if (check(h)) return true;
    }
    return false;
}

bool Shape::contains(Point p) const {
    const BBox grown{bbox_.xmin - tolerance_, bbox_.ymin - tolerance_, bbox_.xmax + tolerance_, bbox_.ymax + tolerance_};
    if (!grown.contains(p)) return false;
    if (rectangle_) return true;
    for (const auto& poly : polygons_) {
        bool inside = crosses(poly.outer, p);
        for (const auto& h : poly.holes)
            if (crosses(h, p)) inside = !inside;
        if (inside) return true;
    }
    return on_boundary(p);
}

double Shape::boundary_distance(Point p) const {
    if (rectangle_) {
        return std::min({p.x - bbox_.xmin, bbox_.xmax - p.x, p.y - bbox_.ymin, bbox_.ymax - p.y});
    }
    double d = std::numeric_limits<double>::infinity();
    auto scan = [&](const Ring& ring) {
        const std::size_t n = ring.size();
        for (std::size_t i = 0, j = n - 1; i < n; j = i++) d = std::min(d, distance_to_segment(p, ring[j], ring[i]));
    };
    for (const auto& poly : polygons_) {
        scan(poly.outer);
        for (const auto& h : poly.holes) scan(h);
    }
    return d;
}

Shape Shape::translated(double dx, double dy) const {
    std::vector<Polygon> moved = polygons_;
    for (auto& poly : moved) {
        for (auto& p : poly.outer) p = {p.x + dx, p.y + dy};
        for (auto& h : poly.holes)
            for (auto& p : h) p = {p.x + dx, p.y + dy};
    }
    return Shape(std::move(moved));
}

double Shape::shifted_overlap_area(double dx, double dy) const {
    if (rectangle_) {
        return std::max(0.0, bbox_.width() - std::abs(dx)) * std::max(0.0, bbox_.height() - std::abs(dy));
    }
    if (std::abs(dx) >= bbox_.width() || std::abs(dy) >= bbox_.height()) return 0.0;
    return std::max(0.0, fan_intersection(signed_fan(*this), signed_fan(*this, dx, dy)));
}

double intersection_area(const Shape& a, const Shape& b) {
    if (a.empty() || b.empty() || !a.bbox().intersects(b.bbox())) return 0.0;
    return std::max(0.0, fan_intersection(signed_fan(a), signed_fan(b)));
}

double convex_intersection_area(const std::vector<Point>& subject, const std::vector<Point>& clip) {
    std::vector<Point> out = subject;
    std::vector<Point> in;
    const std::size_t m = clip.size();
    for (std::size_t e = 0; e < m && !out.empty(); ++e) {
        const Point a = clip[e];
        const Point b = clip[(e + 1) % m];
        in.swap(out);
        out.clear();
        const std::size_t n = in.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Point cur = in[i];
            const Point prev = in[(i + n - 1) % n];
            const double dc = cross(a, b, cur);
            const double dp = cross(a, b, prev);
            if (dc >= 0.0) {
                if (dp < 0.0) {
                    const double t = dp / (dp - dc);
                    out.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
                }
                out.push_back(cur);
            } else if (dp >= 0.0) {
                const double t = dp / (dp - dc);
                out.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
            }
        }
    }
    if (out.size() < 3) return 0.0;
    return std::max(0.0, signed_area(out));
}

}  // namespace mtpp
