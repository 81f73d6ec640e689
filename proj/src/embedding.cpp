#include "ilc/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <fmt/format.h>

#include "ilc/errors.hpp"

namespace ilc {

std::size_t lag_index(double lag, double dt) {
  if (!(lag > 0.0) || !(dt > 0.0))
    throw LagNotMultipleOfDt(fmt::format("lag {} and dt {} must be positive", lag, dt));
  const double ratio = lag / dt;
  const double n = std::round(ratio);
  if (n < 1.0 || std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio))
    throw LagNotMultipleOfDt(fmt::format("lag {} is not an integer multiple of dt {}", lag, dt));
  return static_cast<std::size_t>(n);
}

std::size_t DelayVectorSet::max_lag_index() const {
  return lag_indices.empty() ? 0 : *std::max_element(lag_indices.begin(), lag_indices.end());
}

DelayVectorSet embed(std::span<const double> signal, std::span<const double> lags, double dt) {
  DelayVectorSet out;
  out.dim = lags.size() + 1;
  out.lags.assign(lags.begin(), lags.end());
  for (double lag : lags) out.lag_indices.push_back(lag_index(lag, dt));

  const std::size_t max_n = out.max_lag_index();
  if (signal.size() <= max_n)
    throw SignalTooShort(fmt::format("signal of {} samples is too short for lag index {}",
                                     signal.size(), max_n));
  const std::size_t count = signal.size() - max_n;
  out.coords.resize(count * out.dim);
  for (std::size_t i = 0; i < count; ++i) {
    double* row = out.coords.data() + i * out.dim;
    row[0] = signal[i];
    for (std::size_t k = 0; k < lags.size(); ++k) row[k + 1] = signal[i + out.lag_indices[k]];
  }
  return out;
}

std::size_t GridAxis::index_of(double v) const {
  const double scaled = (v - lower) * static_cast<double>(bins) / (upper - lower);
  if (!(scaled >= 0.0)) return 0;  // also catches NaN
  const double top = static_cast<double>(bins - 1);
  return static_cast<std::size_t>(std::min(std::floor(scaled), top));
}

void GridSpec::validate() const {
  if (axes.empty()) throw InvalidGrid("grid has no axes");
  for (std::size_t a = 0; a < axes.size(); ++a) {
    const GridAxis& ax = axes[a];
    if (!(ax.lower < ax.upper) || !std::isfinite(ax.lower) || !std::isfinite(ax.upper))
      throw InvalidGrid(fmt::format("axis {}: lower must be < upper", a));
    if (ax.bins < 1) throw InvalidGrid(fmt::format("axis {}: bins must be >= 1", a));
  }
}

std::size_t GridSpec::cell_count() const {
  std::size_t n = 1;
  for (const auto& ax : axes) n *= ax.bins;
  return n;
}

BinnedPdf bin(const DelayVectorSet& points, const GridSpec& grid) {
  grid.validate();
  if (points.dim != 2 || grid.axes.size() != 2)
    throw InvalidGrid("binning is defined for 2D embeddings on 2D grids");
  BinnedPdf pdf;
  pdf.grid = grid;
  pdf.counts.assign(grid.cell_count(), 0.0);
  const GridAxis& ax0 = grid.axes[0];
  const GridAxis& ax1 = grid.axes[1];
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto p = points.point(i);
    pdf.counts[ax0.index_of(p[0]) * ax1.bins + ax1.index_of(p[1])] += 1.0;
  }
  pdf.total_mass = static_cast<double>(points.size());
  return pdf;
}

std::size_t count_outside(const DelayVectorSet& points, const GridSpec& grid) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto p = points.point(i);
    for (std::size_t a = 0; a < std::min(points.dim, grid.axes.size()); ++a) {
      if (p[a] < grid.axes[a].lower || p[a] > grid.axes[a].upper) {
        ++n;
        break;
      }
    }
  }
  return n;
}

GridSpec shared_grid(const DelayVectorSet& reference, std::size_t bins, double padding,
                     double min_extent) {
  if (reference.size() == 0) throw SignalTooShort("reference embedding is empty");
  if (bins < 1) throw InvalidGrid("bins must be >= 1");
  if (padding < 0.0) throw InvalidGrid("padding must be >= 0");
  GridSpec grid;
  for (std::size_t a = 0; a < reference.dim; ++a) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < reference.size(); ++i) {
      const double v = reference.point(i)[a];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    double extent = hi - lo;
    if (extent < min_extent) {
      const double mid = 0.5 * (lo + hi);
      lo = mid - 0.5 * min_extent;
      hi = mid + 0.5 * min_extent;
      extent = hi - lo;
    }
    if (!(extent > 0.0))
      throw DegenerateExtent(fmt::format("reference has zero extent on axis {}", a));
    grid.axes.push_back({lo - padding * extent, hi + padding * extent, bins});
  }
  return grid;
}

}  // namespace ilc
