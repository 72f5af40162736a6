#include "mtpp/npest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include <Eigen/Dense>
#include <fftw3.h>

#include "mtpp/error.hpp"
#include "mtpp/parallel.hpp"

namespace mtpp {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double normal_pdf(double d, double h) {
    const double z = d / h;
    return kInvSqrt2Pi / h * std::exp(-0.5 * z * z);
}

double gauss2(double dx, double dy, double h) {
    return std::exp(-(dx * dx + dy * dy) / (2.0 * h * h)) / (2.0 * std::numbers::pi * h * h);
}

/// Φ(b/h) - Φ(a/h) for a <= b, computed on the tail that keeps precision.
double normal_mass(double a, double b, double h) {
    const double s = h * std::numbers::sqrt2;
    if (a >= 0.0) return 0.5 * (std::erfc(a / s) - std::erfc(b / s));
    if (b <= 0.0) return 0.5 * (std::erfc(-b / s) - std::erfc(-a / s));
    return 1.0 - 0.5 * (std::erfc(b / s) + std::erfc(-a / s));
}

void require_bandwidth(double h) {
    if (!(h > 0.0) || !std::isfinite(h)) {
        throw Error(ErrorCode::NonPositiveBandwidth, "bandwidth must be positive, got " + std::to_string(h));
    }
}

void check_mark(const MarkedPointPattern& p, int mark) {
    if (mark < 1 || mark > p.mark_count()) {
        throw Error(ErrorCode::InvalidArgument, "mark " + std::to_string(mark) + " outside 1.." +
                                                    std::to_string(p.mark_count()));
    }
}

/// Midpoint-rule kernel mass at every cell centre: separable convolution of
/// the mask with a Gaussian truncated at 8 bandwidths.
std::vector<double> raster_kernel_mass(const IntensitySurface& s, double h) {
    const int nx = s.grid.nx();
    const int ny = s.grid.ny();
    const int kx = std::min(nx - 1, static_cast<int>(std::ceil(8.0 * h / s.grid.dx())));
    const int ky = std::min(ny - 1, static_cast<int>(std::ceil(8.0 * h / s.grid.dy())));
    std::vector<double> wx(kx + 1), wy(ky + 1);
    for (int k = 0; k <= kx; ++k) wx[k] = normal_pdf(k * s.grid.dx(), h) * s.grid.dx();
    for (int k = 0; k <= ky; ++k) wy[k] = normal_pdf(k * s.grid.dy(), h) * s.grid.dy();

    std::vector<double> rows(s.grid.cells(), 0.0);
    for (int iy = 0; iy < ny; ++iy) {
        const std::size_t base = static_cast<std::size_t>(iy) * nx;
        for (int jx = 0; jx < nx; ++jx) {
            if (!s.mask[base + jx]) continue;
            const int lo = std::max(0, jx - kx);
            const int hi = std::min(nx - 1, jx + kx);
            for (int ix = lo; ix <= hi; ++ix) rows[base + ix] += wx[std::abs(ix - jx)];
        }
    }
    std::vector<double> out(s.grid.cells(), 0.0);
    for (int iy = 0; iy < ny; ++iy) {
        const int lo = std::max(0, iy - ky);
        const int hi = std::min(ny - 1, iy + ky);
        for (int jy = lo; jy <= hi; ++jy) {
            const double w = wy[std::abs(iy - jy)];
            const std::size_t src = static_cast<std::size_t>(jy) * nx;
            const std::size_t dst = static_cast<std::size_t>(iy) * nx;
            for (int ix = 0; ix < nx; ++ix) out[dst + ix] += w * rows[src + ix];
        }
    }
    return out;
}

/// Adds Σ_k κ_h(u - x_k) / c_W(u) over the given points to the surface.
void add_kernel_group(IntensitySurface& s, const std::vector<Point>& pts, double h) {
    if (pts.empty()) return;
    const int nx = s.grid.nx();
    const int ny = s.grid.ny();
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXd gx(n, nx), gy(n, ny);
    for (Eigen::Index k = 0; k < n; ++k) {
        for (int ix = 0; ix < nx; ++ix) gx(k, ix) = normal_pdf(s.grid.center(ix, 0).x - pts[k].x, h);
        for (int iy = 0; iy < ny; ++iy) gy(k, iy) = normal_pdf(s.grid.center(0, iy).y - pts[k].y, h);
    }
    const Eigen::MatrixXd numerator = gy.transpose() * gx;  // ny × nx
    const auto mass = raster_kernel_mass(s, h);
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            const std::size_t c = static_cast<std::size_t>(iy) * nx + ix;
            if (s.mask[c] && mass[c] > 0.0) s.values[c] += numerator(iy, ix) / mass[c];
        }
    }
}

}  // namespace

RasterGrid::RasterGrid(BBox box, GridSize size) : box_(box), nx_(size.nx), ny_(size.ny) {
    if (nx_ < 1 || ny_ < 1) throw Error(ErrorCode::InvalidArgument, "raster dimensions must be positive");
    if (!(box.width() > 0.0) || !(box.height() > 0.0)) throw Error(ErrorCode::InvalidGeometry, "degenerate raster box");
    dx_ = box.width() / nx_;
    dy_ = box.height() / ny_;
}

std::ptrdiff_t RasterGrid::cell_of(Point p) const {
    if (!box_.contains(p)) return -1;
    const int ix = std::min(nx_ - 1, static_cast<int>((p.x - box_.xmin) / dx_));
    const int iy = std::min(ny_ - 1, static_cast<int>((p.y - box_.ymin) / dy_));
    return static_cast<std::ptrdiff_t>(iy) * nx_ + ix;
}

double IntensitySurface::at(Point p) const {
    const auto c = grid.cell_of(p);
    if (c < 0 || !mask[static_cast<std::size_t>(c)]) return 0.0;
    return values[static_cast<std::size_t>(c)];
}

double IntensitySurface::integral() const {
    double total = 0.0;
    for (std::size_t c = 0; c < values.size(); ++c)
        if (mask[c]) total += values[c];
    return total * grid.cell_area();
}

double IntensitySurface::max() const {
    double m = 0.0;
    for (std::size_t c = 0; c < values.size(); ++c)
        if (mask[c]) m = std::max(m, values[c]);
    return m;
}

IntensitySurface make_surface(const Window& window, GridSize size) {
    IntensitySurface s;
    s.grid = RasterGrid(window.bbox(), size);
    s.values.assign(s.grid.cells(), 0.0);
    s.mask.assign(s.grid.cells(), 0);
    for (int iy = 0; iy < s.grid.ny(); ++iy)
        for (int ix = 0; ix < s.grid.nx(); ++ix)
            s.mask[static_cast<std::size_t>(iy) * s.grid.nx() + ix] = window.contains(s.grid.center(ix, iy)) ? 1 : 0;
    return s;
}

KernelMass::KernelMass(const Window& window, GridSize quadrature) : rectangle_(window.as_rectangle()) {
    if (rectangle_) return;
    // Mass over the bounding box minus the cells whose centre falls outside.
    grid_ = RasterGrid(window.bbox(), quadrature);
    runs_.resize(static_cast<std::size_t>(grid_.ny()));
    for (int iy = 0; iy < grid_.ny(); ++iy) {
        int start = -1;
        for (int ix = 0; ix <= grid_.nx(); ++ix) {
            const bool out = ix < grid_.nx() && !window.contains(grid_.center(ix, iy));
            if (out && start < 0) start = ix;
            if (!out && start >= 0) {
                runs_[iy].emplace_back(start, ix);
                start = -1;
            }
        }
    }
}

double KernelMass::operator()(Point u, double h) const {
    if (rectangle_) {
        return normal_mass(rectangle_->xmin - u.x, rectangle_->xmax - u.x, h) *
               normal_mass(rectangle_->ymin - u.y, rectangle_->ymax - u.y, h);
    }
    const BBox& b = grid_.box();
    double total = normal_mass(b.xmin - u.x, b.xmax - u.x, h) * normal_mass(b.ymin - u.y, b.ymax - u.y, h);
    const double reach = 8.0 * h;
    for (int iy = 0; iy < grid_.ny(); ++iy) {
        if (runs_[iy].empty()) continue;
        const double y0 = b.ymin + iy * grid_.dy();
        if (y0 - u.y > reach || u.y - (y0 + grid_.dy()) > reach) continue;
        double row = 0.0;
        for (const auto& [lo, hi] : runs_[iy]) {
            const double x0 = b.xmin + lo * grid_.dx();
            const double x1 = b.xmin + hi * grid_.dx();
            if (x0 - u.x > reach || u.x - x1 > reach) continue;
            row += normal_mass(x0 - u.x, x1 - u.x, h);
        }
        total -= row * normal_mass(y0 - u.y, y0 + grid_.dy() - u.y, h);
    }
    return std::max(total, 0.0);
}

IntensitySurface kernel_intensity(const MarkedPointPattern& pattern, int mark, double bandwidth, GridSize grid) {
    require_bandwidth(bandwidth);
    check_mark(pattern, mark);
    IntensitySurface s = make_surface(pattern.window(), grid);
    add_kernel_group(s, pattern.points_of(mark), bandwidth);
    return s;
}

AdaptiveBandwidths abramson_bandwidths(const MarkedPointPattern& pattern, int mark, double pilot_bandwidth,
                                       const AdaptiveOptions& options) {
    require_bandwidth(pilot_bandwidth);
    check_mark(pattern, mark);
    AdaptiveBandwidths out;
    out.grid = RasterGrid(pattern.window().bbox(), options.bandwidth_grid);
    const auto pts = pattern.points_of(mark);
    const double h0 = pilot_bandwidth;
    out.cell_bandwidth.assign(out.grid.cells(), h0);
    if (pts.empty()) return out;

    const KernelMass mass(pattern.window(), options.quadrature);
    auto pilot = [&](Point u) {
        double sum = 0.0;
        for (const auto& x : pts) sum += gauss2(u.x - x.x, u.y - x.y, h0);
        return sum / mass(u, h0);
    };

    out.pilot_at_points.resize(pts.size());
    parallel_for(pts.size(), [&](std::size_t k) { out.pilot_at_points[k] = pilot(pts[k]); });
    double log_sum = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        if (!(out.pilot_at_points[k] > 0.0)) {
            throw Error(ErrorCode::DegeneratePilot, "pilot intensity vanishes at data point " + std::to_string(k));
        }
        log_sum += std::log(out.pilot_at_points[k]);
    }
    out.geometric_mean = std::exp(log_sum / static_cast<double>(pts.size()));

    std::vector<double> cell_pilot(out.grid.cells());
    parallel_for(out.grid.cells(), [&](std::size_t c) {
        const int ix = static_cast<int>(c % out.grid.nx());
        const int iy = static_cast<int>(c / out.grid.nx());
        cell_pilot[c] = pilot(out.grid.center(ix, iy));
    });
    const double cap = options.trim > 0.0 ? options.trim * h0 : std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cell_pilot.size(); ++c) {
        out.cell_bandwidth[c] = cell_pilot[c] > 0.0
                                    ? std::min(cap, h0 * std::sqrt(out.geometric_mean / cell_pilot[c]))
                                    : std::numeric_limits<double>::infinity();
    }
    out.point_bandwidth.resize(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto c = out.grid.cell_of(pts[k]);
        if (c < 0 || !(cell_pilot[static_cast<std::size_t>(c)] > 0.0)) {
            throw Error(ErrorCode::DegeneratePilot,
                        "pilot intensity vanishes on the bandwidth cell of data point " + std::to_string(k));
        }
        out.point_bandwidth[k] = out.cell_bandwidth[static_cast<std::size_t>(c)];
    }
    for (auto& h : out.cell_bandwidth)
        if (std::isinf(h)) h = cap;
    return out;
}

IntensitySurface adaptive_intensity(const MarkedPointPattern& pattern, int mark, double pilot_bandwidth,
                                    const AdaptiveOptions& options, GridSize grid) {
    const auto bw = abramson_bandwidths(pattern, mark, pilot_bandwidth, options);
    IntensitySurface s = make_surface(pattern.window(), grid);
    const auto pts = pattern.points_of(mark);
    std::map<double, std::vector<Point>> groups;
    for (std::size_t k = 0; k < pts.size(); ++k) groups[bw.point_bandwidth[k]].push_back(pts[k]);
    for (const auto& [h, members] : groups) add_kernel_group(s, members, h);
    return s;
}

double scott_bandwidth(std::span<const Point> points) {
    const std::size_t n = points.size();
    if (n < 2) throw Error(ErrorCode::InvalidArgument, "bandwidth rule needs at least two points");
    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
        mx += p.x;
        my += p.y;
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0.0, vy = 0.0;
    for (const auto& p : points) {
        vx += (p.x - mx) * (p.x - mx);
        vy += (p.y - my) * (p.y - my);
    }
    vx /= static_cast<double>(n - 1);
    vy /= static_cast<double>(n - 1);
    return std::sqrt(std::sqrt(vx * vy)) * std::pow(static_cast<double>(n), -1.0 / 6.0);
}

std::vector<double> intensity_at_points(const MarkedPointPattern& pattern, int mark, const IntensityOptions& options) {
    check_mark(pattern, mark);
    const auto pts = pattern.points_of(mark);
    const std::size_t n = pts.size();
    if (n == 0) return {};
    if (options.estimator == IntensityEstimator::Homogeneous) {
        return std::vector<double>(n, static_cast<double>(n) / pattern.window().area());
    }
    const double h0 = options.bandwidth > 0.0 ? options.bandwidth : scott_bandwidth(pts);
    require_bandwidth(h0);

    std::vector<double> bandwidth(n, h0);
    if (options.estimator == IntensityEstimator::Adaptive) {
        bandwidth = abramson_bandwidths(pattern, mark, h0, options.adaptive).point_bandwidth;
    }
    std::vector<double> distinct = bandwidth;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<std::size_t> group(n);
    for (std::size_t k = 0; k < n; ++k) {
        group[k] = static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), bandwidth[k]) -
                                            distinct.begin());
    }

    const KernelMass mass(pattern.window(), options.adaptive.quadrature);
    std::vector<double> rho(n);
    parallel_for(n, [&](std::size_t m) {
        std::vector<double> acc(distinct.size(), 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            if (options.leave_one_out && k == m) continue;
            acc[group[k]] += gauss2(pts[m].x - pts[k].x, pts[m].y - pts[k].y, distinct[group[k]]);
        }
        double total = 0.0;
        for (std::size_t g = 0; g < distinct.size(); ++g)
            if (acc[g] > 0.0) total += acc[g] / mass(pts[m], distinct[g]);
        rho[m] = total;
    });
    return rho;
}

double default_r_max(const Window& window) {
    return 0.25 * std::min(window.bbox().width(), window.bbox().height());
}

std::vector<double> make_r_grid(double r_max, std::size_t steps) {
    if (!(r_max > 0.0) || steps < 1) throw Error(ErrorCode::InvalidArgument, "r grid needs r_max > 0 and steps >= 1");
    std::vector<double> r(steps + 1);
    for (std::size_t t = 0; t <= steps; ++t) r[t] = r_max * static_cast<double>(t) / static_cast<double>(steps);
    return r;
}

// ---------------------------------------------------------------------------
// Translation correction

struct TranslationWeights::Covariogram {
    double cell = 0.0;
    int sx = 0;  // half-width of the displacement table in cells
    int sy = 0;
    std::vector<double> table;  // (2sy+1) × (2sx+1), overlap areas
    double at_zero = 0.0;

    double overlap(double dx, double dy) const {
        const double fx = dx / cell + sx;
        const double fy = dy / cell + sy;
        const int w = 2 * sx + 1;
        const int h = 2 * sy + 1;
        if (fx < 0.0 || fy < 0.0 || fx > w - 1 || fy > h - 1) return 0.0;
        const int x0 = std::min(static_cast<int>(fx), w - 2);
        const int y0 = std::min(static_cast<int>(fy), h - 2);
        const double tx = fx - x0;
        const double ty = fy - y0;
        auto v = [&](int x, int y) { return table[static_cast<std::size_t>(y) * w + x]; };
        return (1 - tx) * (1 - ty) * v(x0, y0) + tx * (1 - ty) * v(x0 + 1, y0) + (1 - tx) * ty * v(x0, y0 + 1) +
               tx * ty * v(x0 + 1, y0 + 1);
    }
};

namespace {
std::mutex fftw_planner_mutex;
constexpr std::size_t kExactVertexLimit = 64;

std::size_t vertex_count(const Window& w) {
    std::size_t n = 0;
    for (const auto& p : w.polygons()) {
        n += p.outer.size();
        for (const auto& h : p.holes) n += h.size();
    }
    return n;
}
}  // namespace

TranslationWeights::TranslationWeights(const Window& window, double r_max) : window_(&window) {
    if (window.as_rectangle() || vertex_count(window) <= kExactVertexLimit) return;

    auto cov = std::make_unique<Covariogram>();
    const BBox& b = window.bbox();
    cov->cell = std::max(b.width(), b.height()) / 1024.0;
    const int nx = static_cast<int>(std::ceil(b.width() / cov->cell));
    const int ny = static_cast<int>(std::ceil(b.height() / cov->cell));
    cov->sx = std::min(nx, static_cast<int>(std::ceil(r_max / cov->cell)) + 2);
    cov->sy = std::min(ny, static_cast<int>(std::ceil(r_max / cov->cell)) + 2);
    const int px = nx + cov->sx + 1;
    const int py = ny + cov->sy + 1;
    const int pxc = px / 2 + 1;

    std::vector<double> mask(static_cast<std::size_t>(px) * py, 0.0);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix)
            if (window.contains({b.xmin + (ix + 0.5) * cov->cell, b.ymin + (iy + 0.5) * cov->cell}))
                mask[static_cast<std::size_t>(iy) * px + ix] = 1.0;

    auto* spectrum = fftw_alloc_complex(static_cast<std::size_t>(py) * pxc);
    std::vector<double> corr(mask.size());
    fftw_plan forward, backward;
    {
        std::lock_guard lock(fftw_planner_mutex);
        forward = fftw_plan_dft_r2c_2d(py, px, mask.data(), spectrum, FFTW_ESTIMATE);
        backward = fftw_plan_dft_c2r_2d(py, px, spectrum, corr.data(), FFTW_ESTIMATE);
    }
    fftw_execute(forward);
    for (std::size_t k = 0; k < static_cast<std::size_t>(py) * pxc; ++k) {
        const double re = spectrum[k][0];
        const double im = spectrum[k][1];
        spectrum[k][0] = re * re + im * im;
        spectrum[k][1] = 0.0;
    }
    fftw_execute(backward);
    {
        std::lock_guard lock(fftw_planner_mutex);
        fftw_destroy_plan(forward);
        fftw_destroy_plan(backward);
    }
    fftw_free(spectrum);

    const double scale = cov->cell * cov->cell / (static_cast<double>(px) * py);
    const int w = 2 * cov->sx + 1;
    cov->table.assign(static_cast<std::size_t>(w) * (2 * cov->sy + 1), 0.0);
    for (int oy = -cov->sy; oy <= cov->sy; ++oy) {
        for (int ox = -cov->sx; ox <= cov->sx; ++ox) {
            const int cx = (ox + px) % px;
            const int cy = (oy + py) % py;
            cov->table[static_cast<std::size_t>(oy + cov->sy) * w + (ox + cov->sx)] =
                std::max(0.0, corr[static_cast<std::size_t>(cy) * px + cx] * scale);
        }
    }
    cov->at_zero = cov->table[static_cast<std::size_t>(cov->sy) * w + cov->sx];
    table_ = std::move(cov);
}

TranslationWeights::~TranslationWeights() = default;
TranslationWeights::TranslationWeights(TranslationWeights&&) noexcept = default;
TranslationWeights& TranslationWeights::operator=(TranslationWeights&&) noexcept = default;

double TranslationWeights::operator()(Point u, Point v) const {
    const double dx = v.x - u.x;
    const double dy = v.y - u.y;
    if (table_) {
        const double overlap = table_->overlap(dx, dy);
        return overlap > 0.0 ? table_->at_zero / overlap : std::numeric_limits<double>::infinity();
    }
    const double overlap = window_->shifted_overlap_area(dx, dy);
    return overlap > 0.0 ? window_->area() / overlap : std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// K functions

namespace {

void check_curve_inputs(std::span<const double> rho, std::size_t n, std::span<const double> r) {
    if (rho.size() != n) {
        throw Error(ErrorCode::InvalidArgument, "intensity vector has " + std::to_string(rho.size()) +
                                                    " entries for " + std::to_string(n) + " points");
    }
    for (std::size_t k = 0; k < rho.size(); ++k) {
        if (!(rho[k] > 0.0) || !std::isfinite(rho[k])) {
            throw Error(ErrorCode::NonPositiveIntensityAtPoint,
                        "intensity at point " + std::to_string(k) + " is " + std::to_string(rho[k]));
        }
    }
    if (r.empty() || r[0] < 0.0) throw Error(ErrorCode::InvalidArgument, "r grid must be non-empty and start at >= 0");
    for (std::size_t t = 1; t < r.size(); ++t) {
        if (!(r[t] > r[t - 1])) throw Error(ErrorCode::InvalidArgument, "r grid must be strictly increasing");
    }
}

std::size_t bin_of(std::span<const double> r, double d) {
    return static_cast<std::size_t>(std::lower_bound(r.begin(), r.end(), d) - r.begin());
}

/// Sums weighted pair indicators per r bin. With `same` the pairs are
/// {(i, j): i < j} counted twice, otherwise all of a × b.
std::vector<double> translation_sums(const std::vector<Point>& a, const std::vector<Point>& b,
                                     std::span<const double> rho_a, std::span<const double> rho_b, bool same,
                                     std::span<const double> r, const TranslationWeights& weights) {
    const std::size_t T = r.size();
    const double r_max = r.back();
    const std::size_t chunks = reduction_chunks(a.size());
    std::vector<std::vector<double>> partial(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        std::vector<double> bins(T, 0.0);
        const std::size_t end = std::min(a.size(), (c + 1) * kReductionChunk);
        for (std::size_t i = c * kReductionChunk; i < end; ++i) {
            for (std::size_t j = same ? i + 1 : 0; j < b.size(); ++j) {
                const double dx = b[j].x - a[i].x;
                const double dy = b[j].y - a[i].y;
                const double d = std::sqrt(dx * dx + dy * dy);
                if (d > r_max) continue;
                const double w = weights(a[i], b[j]) / (rho_a[i] * rho_b[j]);
                bins[bin_of(r, d)] += same ? 2.0 * w : w;
            }
        }
        partial[c] = std::move(bins);
    });
    std::vector<double> total(T, 0.0);
    for (const auto& p : partial)
        for (std::size_t t = 0; t < T; ++t) total[t] += p[t];
    return total;
}

std::vector<double> border_estimate(const std::vector<Point>& a, const std::vector<Point>& b,
                                    std::span<const double> rho_a, std::span<const double> rho_b, bool same,
                                    std::span<const double> r, const Window& window) {
    const std::size_t T = r.size();
    const double r_max = r.back();
    const std::size_t chunks = reduction_chunks(a.size());
    std::vector<std::vector<double>> num_partial(chunks), den_partial(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        std::vector<double> num(T + 1, 0.0), den(T + 1, 0.0);
        const std::size_t end = std::min(a.size(), (c + 1) * kReductionChunk);
        for (std::size_t i = c * kReductionChunk; i < end; ++i) {
            const double bd = window.boundary_distance(a[i]);
            // r_t <= b(u) holds for t < last
            const std::size_t last = static_cast<std::size_t>(std::upper_bound(r.begin(), r.end(), bd) - r.begin());
            if (last == 0) continue;
            den[0] += 1.0 / rho_a[i];
            den[last] -= 1.0 / rho_a[i];
            for (std::size_t j = 0; j < b.size(); ++j) {
                if (same && j == i) continue;
                const double dx = b[j].x - a[i].x;
                const double dy = b[j].y - a[i].y;
                const double d = std::sqrt(dx * dx + dy * dy);
                if (d > r_max || d > bd) continue;
                const std::size_t t = bin_of(r, d);
                if (t >= last) continue;
                const double w = 1.0 / (rho_a[i] * rho_b[j]);
                num[t] += w;
                num[last] -= w;
            }
        }
        num_partial[c] = std::move(num);
        den_partial[c] = std::move(den);
    });
    std::vector<double> num(T + 1, 0.0), den(T + 1, 0.0);
    for (std::size_t c = 0; c < chunks; ++c) {
        for (std::size_t t = 0; t <= T; ++t) {
            num[t] += num_partial[c][t];
            den[t] += den_partial[c][t];
        }
    }
    std::vector<double> k(T);
    double cn = 0.0, cd = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        cn += num[t];
        cd += den[t];
        k[t] = cd > 0.0 ? cn / cd : std::numeric_limits<double>::quiet_NaN();
    }
    return k;
}

SummaryCurve k_curve(const MarkedPointPattern& pattern, const std::vector<Point>& a, const std::vector<Point>& b,
                     std::span<const double> rho_a, std::span<const double> rho_b, bool same,
                     std::span<const double> r, EdgeCorrection correction, const TranslationWeights* weights,
                     CurveKind kind) {
    SummaryCurve out{std::vector<double>(r.begin(), r.end()), {}, kind};
    if (correction == EdgeCorrection::Border) {
        out.value = border_estimate(a, b, rho_a, rho_b, same, r, pattern.window());
        return out;
    }
    std::optional<TranslationWeights> own;
    if (!weights) weights = &own.emplace(pattern.window(), r.back());
    auto bins = translation_sums(a, b, rho_a, rho_b, same, r, *weights);
    const double area = pattern.window().area();
    out.value.resize(r.size());
    double running = 0.0;
    for (std::size_t t = 0; t < r.size(); ++t) {
        running += bins[t];
        out.value[t] = running / area;
    }
    return out;
}

}  // namespace

SummaryCurve inhom_K(const MarkedPointPattern& pattern, int mark, std::span<const double> rho_at_points,
                     std::span<const double> r, EdgeCorrection correction) {
    check_mark(pattern, mark);
    const auto pts = pattern.points_of(mark);
    check_curve_inputs(rho_at_points, pts.size(), r);
    return k_curve(pattern, pts, pts, rho_at_points, rho_at_points, true, r, correction, nullptr, CurveKind::K);
}

SummaryCurve inhom_K(const MarkedPointPattern& pattern, int mark, std::span<const double> rho_at_points,
                     std::span<const double> r, EdgeCorrection correction, const TranslationWeights& weights) {
    check_mark(pattern, mark);
    const auto pts = pattern.points_of(mark);
    check_curve_inputs(rho_at_points, pts.size(), r);
    return k_curve(pattern, pts, pts, rho_at_points, rho_at_points, true, r, correction, &weights, CurveKind::K);
}

SummaryCurve inhom_cross_K(const MarkedPointPattern& pattern, int mark_a, int mark_b, std::span<const double> rho_a,
                           std::span<const double> rho_b, std::span<const double> r, EdgeCorrection correction) {
    if (mark_a == mark_b) {
        auto k = inhom_K(pattern, mark_a, rho_a, r, correction);
        k.kind = CurveKind::CrossK;
        return k;
    }
    check_mark(pattern, mark_a);
    check_mark(pattern, mark_b);
    const auto a = pattern.points_of(mark_a);
    const auto b = pattern.points_of(mark_b);
    check_curve_inputs(rho_a, a.size(), r);
    check_curve_inputs(rho_b, b.size(), r);
    return k_curve(pattern, a, b, rho_a, rho_b, false, r, correction, nullptr, CurveKind::CrossK);
}

SummaryCurve inhom_cross_K(const MarkedPointPattern& pattern, int mark_a, int mark_b, std::span<const double> rho_a,
                           std::span<const double> rho_b, std::span<const double> r, EdgeCorrection correction,
                           const TranslationWeights& weights) {
    if (mark_a == mark_b) {
        auto k = inhom_K(pattern, mark_a, rho_a, r, correction, weights);
        k.kind = CurveKind::CrossK;
        return k;
    }
    check_mark(pattern, mark_a);
    check_mark(pattern, mark_b);
    const auto a = pattern.points_of(mark_a);
    const auto b = pattern.points_of(mark_b);
    check_curve_inputs(rho_a, a.size(), r);
    check_curve_inputs(rho_b, b.size(), r);
    return k_curve(pattern, a, b, rho_a, rho_b, false, r, correction, &weights, CurveKind::CrossK);
}

SummaryCurve center_L(const SummaryCurve& curve) {
    SummaryCurve out{curve.r, std::vector<double>(curve.value.size()), CurveKind::LCentered};
    switch (curve.kind) {
        case CurveKind::K: out.kind = CurveKind::LCentered; break;
        case CurveKind::CrossK: out.kind = CurveKind::CrossLCentered; break;
        default: throw Error(ErrorCode::InvalidArgument, "center_L expects a K or cross-K curve");
    }
    for (std::size_t t = 0; t < curve.value.size(); ++t) {
        const double k = curve.value[t];
        if (k < 0.0) throw Error(ErrorCode::NegativeKValue, "K(" + std::to_string(curve.r[t]) + ") is negative");
        out.value[t] = std::sqrt(k / std::numbers::pi) - curve.r[t];
    }
    return out;
}

}  // namespace mtpp
