#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mtpp/geometry.hpp"
#include "mtpp/pattern.hpp"

namespace mtpp {

struct GridSize {
    int nx = 256;
    int ny = 256;
};

/// Regular raster over a bounding box; cell (ix, iy) is stored at iy*nx + ix.
class RasterGrid {
public:
    RasterGrid() = default;
    RasterGrid(BBox box, GridSize size);

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    double dx() const { return dx_; }
    double dy() const { return dy_; }
    double cell_area() const { return dx_ * dy_; }
    const BBox& box() const { return box_; }
    std::size_t cells() const { return static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_); }

    Point center(int ix, int iy) const { return {box_.xmin + (ix + 0.5) * dx_, box_.ymin + (iy + 0.5) * dy_}; }
    /// Cell holding p (points on the outer edge map to the last cell);
    /// -1 when p is outside the box.
    std::ptrdiff_t cell_of(Point p) const;

private:
    BBox box_{};
    int nx_ = 0;
    int ny_ = 0;
    double dx_ = 0.0;
    double dy_ = 0.0;
};

/// Piecewise-constant intensity raster; cells whose centre lies outside the
/// window are masked out and read as 0.
struct IntensitySurface {
    RasterGrid grid;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;

    double at(Point p) const;
    double integral() const;
    double max() const;
};

IntensitySurface make_surface(const Window& window, GridSize grid);

/// Mass of the Gaussian kernel centred at u that falls inside the window,
/// c_W(u) = ∫_W κ_h(u - v) dv. Closed form on axis-aligned rectangles;
/// otherwise the bounding-box mass minus that of the raster cells whose
/// centre lies outside the window.
class KernelMass {
public:
    explicit KernelMass(const Window& window, GridSize quadrature = {256, 256});
    double operator()(Point u, double h) const;

private:
    std::optional<BBox> rectangle_;
    RasterGrid grid_;
    std::vector<std::vector<std::pair<int, int>>> runs_;  ///< outside cells, [begin, end) per row
};

/// Gaussian kernel estimate with uniform edge correction,
/// ρ(u) = Σ_k κ_h(u - x_k) / c_W(u), c_W by midpoint rule on the raster.
IntensitySurface kernel_intensity(const MarkedPointPattern& pattern, int mark, double bandwidth,
                                  GridSize grid = {256, 256});

struct AdaptiveBandwidths {
    RasterGrid grid;                       ///< bandwidth raster (16 × 16 by default)
    std::vector<double> cell_bandwidth;    ///< h at each raster cell (inf where the pilot vanishes)
    std::vector<double> point_bandwidth;   ///< bandwidth used by each point of the mark
    std::vector<double> pilot_at_points;   ///< fixed-bandwidth pilot at the data points
    double geometric_mean = 0.0;           ///< γ
};

struct AdaptiveOptions {
    GridSize bandwidth_grid{16, 16};
    GridSize quadrature{256, 256};
    /// Bandwidths are capped at trim × pilot bandwidth.
    double trim = 5.0;
};

/// Abramson inverse-square-root bandwidths h(x) = h0 {ρ̃(x)/γ}^{-1/2},
/// discretized on the bandwidth raster.
AdaptiveBandwidths abramson_bandwidths(const MarkedPointPattern& pattern, int mark, double pilot_bandwidth,
                                       const AdaptiveOptions& options = {});

IntensitySurface adaptive_intensity(const MarkedPointPattern& pattern, int mark, double pilot_bandwidth,
                                    const AdaptiveOptions& options = {}, GridSize grid = {256, 256});

/// Scott-type rule of thumb: geometric mean of the coordinate standard
/// deviations times n^{-1/6}.
double scott_bandwidth(std::span<const Point> points);

enum class IntensityEstimator { Homogeneous, Kernel, Adaptive };

struct IntensityOptions {
    IntensityEstimator estimator = IntensityEstimator::Adaptive;
    double bandwidth = 0.0;  ///< fixed or pilot bandwidth; 0 selects scott_bandwidth
    bool leave_one_out = true;
    AdaptiveOptions adaptive{};
};

/// Intensity of `mark` evaluated at its own data points (pattern order).
std::vector<double> intensity_at_points(const MarkedPointPattern& pattern, int mark, const IntensityOptions& options);

enum class EdgeCorrection { Translation, Border };
enum class CurveKind { K, CrossK, LCentered, CrossLCentered };

struct SummaryCurve {
    std::vector<double> r;
    std::vector<double> value;
    CurveKind kind = CurveKind::K;
};

/// One quarter of the shorter side of the window's bounding box.
double default_r_max(const Window& window);
/// steps+1 equally spaced distances from 0 to r_max.
std::vector<double> make_r_grid(double r_max, std::size_t steps = 512);

/// |W| / |W ∩ W_{v-u}| for the translation edge correction. Exact for
/// rectangles and small polygons; larger polygons use a raster set
/// covariance interpolated bilinearly.
class TranslationWeights {
public:
    explicit TranslationWeights(const Window& window, double r_max);
    ~TranslationWeights();
    TranslationWeights(TranslationWeights&&) noexcept;
    TranslationWeights& operator=(TranslationWeights&&) noexcept;

    double operator()(Point u, Point v) const;

private:
    struct Covariogram;
    const Window* window_;
    std::unique_ptr<Covariogram> table_;
};

SummaryCurve inhom_K(const MarkedPointPattern& pattern, int mark, std::span<const double> rho_at_points,
                     std::span<const double> r, EdgeCorrection correction = EdgeCorrection::Translation);

SummaryCurve inhom_cross_K(const MarkedPointPattern& pattern, int mark_a, int mark_b, std::span<const double> rho_a,
                           std::span<const double> rho_b, std::span<const double> r,
                           EdgeCorrection correction = EdgeCorrection::Translation);

/// Overloads reusing precomputed translation weights (built for r_max >= r.back()).
SummaryCurve inhom_K(const MarkedPointPattern& pattern, int mark, std::span<const double> rho_at_points,
                     std::span<const double> r, EdgeCorrection correction, const TranslationWeights& weights);
SummaryCurve inhom_cross_K(const MarkedPointPattern& pattern, int mark_a, int mark_b, std::span<const double> rho_a,
                           std::span<const double> rho_b, std::span<const double> r, EdgeCorrection correction,
                           const TranslationWeights& weights);

/// sqrt(K(r)/π) - r.
SummaryCurve center_L(const SummaryCurve& curve);

}  // namespace mtpp
