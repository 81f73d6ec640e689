#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ilc {

/// Converts a time lag to its sample index; throws LagNotMultipleOfDt unless
/// lag / dt is an integer (to 1e-9 relative).
std::size_t lag_index(double lag, double dt);

/// Delay-embedded point cloud. Point i is
///   (s[i], s[i + n_1], ..., s[i + n_{E-1}])
/// with n_k the sample index of lag k, so there are N - max(n_k) points.
struct DelayVectorSet {
  std::size_t dim = 2;
  std::vector<double> lags;               // time units, one per extra axis
  std::vector<std::size_t> lag_indices;   // lags / dt
  std::vector<double> coords;             // row-major, size() * dim

  std::size_t size() const { return dim ? coords.size() / dim : 0; }
  std::span<const double> point(std::size_t i) const {
    return {coords.data() + i * dim, dim};
  }
  std::size_t max_lag_index() const;
};

DelayVectorSet embed(std::span<const double> signal, std::span<const double> lags, double dt);

struct GridAxis {
  double lower = 0.0;
  double upper = 1.0;
  std::size_t bins = 20;

  double width() const { return (upper - lower) / static_cast<double>(bins); }
  double center(std::size_t k) const { return lower + (static_cast<double>(k) + 0.5) * width(); }
  /// Bin holding v: half-open [low, high) cells, top edge closed, values
  /// outside the axis clamped to the edge bins.
  std::size_t index_of(double v) const;

  friend bool operator==(const GridAxis&, const GridAxis&) = default;
};

struct GridSpec {
  std::vector<GridAxis> axes;

  void validate() const;  // throws InvalidGrid
  std::size_t cell_count() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// 2D histogram on a GridSpec; counts are row-major over (axis0, axis1).
struct BinnedPdf {
  GridSpec grid;
  std::vector<double> counts;
  double total_mass = 0.0;

  double at(std::size_t i, std::size_t j) const { return counts[i * grid.axes[1].bins + j]; }
};

/// Histogram of a 2D delay embedding. Points off the grid are clamped into
/// the nearest edge bin, so total_mass always equals the point count.
BinnedPdf bin(const DelayVectorSet& points, const GridSpec& grid);

/// Number of points that bin() had to clamp.
std::size_t count_outside(const DelayVectorSet& points, const GridSpec& grid);

/// Grid spanning the reference cloud's extent, widened by `padding` times the
/// extent on each side. Throws DegenerateExtent on a zero-width axis unless
/// min_extent > 0, in which case narrower axes are widened to min_extent
/// about their midpoint before padding.
GridSpec shared_grid(const DelayVectorSet& reference, std::size_t bins, double padding,
                     double min_extent = 0.0);

}  // namespace ilc
