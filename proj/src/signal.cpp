#include "ilc/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <fftw3.h>
#include <fmt/format.h>

#include "ilc/embedding.hpp"
#include "ilc/errors.hpp"

namespace ilc {

namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(p);
  }
};
using Plan = std::unique_ptr<fftw_plan_s, PlanDeleter>;

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
template <typename T>
std::unique_ptr<T[], FftwFree> fftw_buffer(std::size_t n) {
  return std::unique_ptr<T[], FftwFree>(static_cast<T*>(fftw_malloc(sizeof(T) * n)));
}

}  // namespace

// ------------------------------------------------------------------ Welch

PowerSpectrum welch_psd(std::span<const double> signal, double dt, std::size_t segment_length,
                        std::size_t overlap) {
  if (!(dt > 0.0)) throw std::invalid_argument("welch_psd: dt must be > 0");
  if (segment_length < 2) throw SegmentTooLong("welch_psd: segment length must be >= 2");
  if (segment_length > signal.size())
    throw SegmentTooLong(fmt::format("segment length {} exceeds signal length {}", segment_length,
                                     signal.size()));
  if (overlap >= segment_length) throw std::invalid_argument("welch_psd: overlap must be < segment length");

  const std::size_t n = segment_length;
  const std::size_t hop = n - overlap;
  const std::size_t bins = n / 2 + 1;

  std::vector<double> window(n);
  double wss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    wss += window[i] * window[i];
  }

  auto in = fftw_buffer<double>(n);
  auto out = fftw_buffer<fftw_complex>(bins);
  Plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE));
  }

  PowerSpectrum psd;
  psd.segment_length = n;
  psd.overlap = overlap;
  psd.power.assign(bins, 0.0);
  const double fs = 1.0 / dt;
  const double scale = 1.0 / (fs * wss);
  for (std::size_t start = 0; start + n <= signal.size(); start += hop) {
    const double mean =
        std::accumulate(signal.begin() + static_cast<std::ptrdiff_t>(start),
                        signal.begin() + static_cast<std::ptrdiff_t>(start + n), 0.0) /
        static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) in[i] = (signal[start + i] - mean) * window[i];
    fftw_execute(plan.get());
    for (std::size_t k = 0; k < bins; ++k) {
      double p = (out[k][0] * out[k][0] + out[k][1] * out[k][1]) * scale;
      const bool nyquist = (n % 2 == 0) && k == n / 2;
      if (k != 0 && !nyquist) p *= 2.0;
      psd.power[k] += p;
    }
    ++psd.segments;
  }
  for (double& p : psd.power) p /= static_cast<double>(psd.segments);
  psd.frequencies.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) psd.frequencies[k] = static_cast<double>(k) * fs / static_cast<double>(n);
  return psd;
}

double broadband_level(const PowerSpectrum& psd, std::size_t bin, double half_window) {
  const double df = psd.df();
  const std::size_t w = df > 0.0 ? static_cast<std::size_t>(std::ceil(half_window / df)) : 1;
  const std::size_t lo = bin > w ? bin - w : 1;  // DC excluded
  const std::size_t hi = std::min(psd.power.size() - 1, bin + w);
  std::vector<double> vals(psd.power.begin() + static_cast<std::ptrdiff_t>(lo),
                           psd.power.begin() + static_cast<std::ptrdiff_t>(hi + 1));
  if (vals.empty()) return psd.power[bin];
  auto mid = vals.begin() + static_cast<std::ptrdiff_t>(vals.size() / 2);
  std::nth_element(vals.begin(), mid, vals.end());
  return *mid;
}

std::vector<SpectralPeak> find_peaks(const PowerSpectrum& psd, double f_min, double f_max,
                                     double min_separation, double half_window) {
  std::vector<SpectralPeak> peaks;
  for (std::size_t k = 1; k + 1 < psd.power.size(); ++k) {
    const double f = psd.frequencies[k];
    if (f < f_min || f > f_max) continue;
    if (psd.power[k] > psd.power[k - 1] && psd.power[k] >= psd.power[k + 1]) {
      const double level = broadband_level(psd, k, half_window);
      peaks.push_back({k, f, psd.power[k], level > 0.0 ? psd.power[k] / level : 0.0});
    }
  }
  std::sort(peaks.begin(), peaks.end(),
            [](const SpectralPeak& a, const SpectralPeak& b) { return a.power > b.power; });
  if (min_separation <= 0.0) return peaks;
  std::vector<SpectralPeak> kept;
  for (const auto& p : peaks) {
    const bool near = std::any_of(kept.begin(), kept.end(), [&](const SpectralPeak& q) {
      return std::abs(q.frequency - p.frequency) < min_separation;
    });
    if (!near) kept.push_back(p);
  }
  return kept;
}

// ---------------------------------------------------------------- Hilbert

std::vector<double> hilbert_phase(std::span<const double> signal) {
  const std::size_t n = signal.size();
  if (n < 4) throw TooShort("hilbert_phase needs at least 4 samples");
  const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / static_cast<double>(n);

  auto buf = fftw_buffer<fftw_complex>(n);
  Plan forward, inverse;
  {
    std::lock_guard lock(planner_mutex());
    forward.reset(fftw_plan_dft_1d(static_cast<int>(n), buf.get(), buf.get(), FFTW_FORWARD, FFTW_ESTIMATE));
    inverse.reset(fftw_plan_dft_1d(static_cast<int>(n), buf.get(), buf.get(), FFTW_BACKWARD, FFTW_ESTIMATE));
  }
  for (std::size_t i = 0; i < n; ++i) {
    buf[i][0] = signal[i] - mean;
    buf[i][1] = 0.0;
  }
  fftw_execute(forward.get());
  // Analytic signal: keep DC (and Nyquist), double positive, zero negative.
  for (std::size_t k = 1; k < n; ++k) {
    double gain = 0.0;
    if (2 * k < n) {
      gain = 2.0;
    } else if (2 * k == n) {
      gain = 1.0;
    }
    buf[k][0] *= gain;
    buf[k][1] *= gain;
  }
  fftw_execute(inverse.get());
  std::vector<double> phase(n);
  for (std::size_t i = 0; i < n; ++i) phase[i] = std::atan2(buf[i][1], buf[i][0]);
  return phase;
}

std::vector<double> unwrap_phase(std::span<const double> phase) {
  std::vector<double> out(phase.begin(), phase.end());
  double offset = 0.0;
  for (std::size_t i = 1; i < out.size(); ++i) {
    const double d = phase[i] - phase[i - 1];
    if (d > std::numbers::pi) {
      offset -= 2.0 * std::numbers::pi;
    } else if (d < -std::numbers::pi) {
      offset += 2.0 * std::numbers::pi;
    }
    out[i] = phase[i] + offset;
  }
  return out;
}

// ---------------------------------------------------------------- Pearson

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
  if (a.size() < 2) throw TooShort("pearson needs at least 2 samples");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw ZeroVariance("pearson: zero variance input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// -------------------------------------------------------------------- SMI

namespace {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

template <std::size_t D>
void smi_neighbors(std::span<const double> source, std::span<const double> target,
                   const std::vector<std::size_t>& lag_idx, std::size_t max_n, std::size_t k,
                   std::size_t exclusion, SmiResult& out) {
  using Point = bg::model::point<double, D, bg::cs::cartesian>;
  using Value = std::pair<Point, std::size_t>;

  const std::size_t n = source.size();
  auto make_point = [&](std::size_t t) {
    Point p;
    std::array<double, D> c{};
    c[0] = source[t];
    for (std::size_t a = 1; a < D; ++a) c[a] = source[t - lag_idx[a - 1]];
    [&]<std::size_t... I>(std::index_sequence<I...>) { (bg::set<I>(p, c[I]), ...); }
    (std::make_index_sequence<D>{});
    return p;
  };

  std::vector<Value> values;
  values.reserve(n - max_n);
  for (std::size_t t = max_n; t < n; ++t) values.emplace_back(make_point(t), t);
  const bgi::rtree<Value, bgi::rstar<16>> tree(values.begin(), values.end());

  std::vector<Value> found;
  out.times.reserve(values.size());
  for (const auto& [p, t] : values) {
    found.clear();
    const std::size_t self = t;
    tree.query(bgi::nearest(p, static_cast<unsigned>(k)) &&
                   bgi::satisfies([self, exclusion](const Value& v) {
                     const std::size_t d = v.second > self ? v.second - self : self - v.second;
                     return d > exclusion;
                   }),
               std::back_inserter(found));
    if (found.empty()) continue;

    std::vector<double> dist(found.size());
    for (std::size_t i = 0; i < found.size(); ++i) dist[i] = bg::distance(p, found[i].first);
    const double dmin = *std::min_element(dist.begin(), dist.end());
    double wsum = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < found.size(); ++i) {
      double w;
      if (dmin > 0.0) {
        w = std::exp(-dist[i] / dmin);
      } else {
        w = dist[i] == 0.0 ? 1.0 : 0.0;  // exact matches share the weight
      }
      wsum += w;
      acc += w * target[found[i].second];
    }
    out.times.push_back(t);
    out.reconstruction.push_back(acc / wsum);
    out.observed.push_back(target[t]);
  }
}

}  // namespace

SmiResult smi_reconstruct(std::span<const double> source, std::span<const double> target,
                          std::span<const double> lags, double dt, const SmiOptions& options) {
  if (source.size() != target.size()) throw std::invalid_argument("smi: source and target lengths differ");
  if (lags.empty() || lags.size() > 3)
    throw std::invalid_argument("smi: embedding dimension must be between 2 and 4");
  std::vector<std::size_t> lag_idx;
  for (double l : lags) lag_idx.push_back(lag_index(l, dt));
  const std::size_t max_n = *std::max_element(lag_idx.begin(), lag_idx.end());
  const std::size_t dim = lags.size() + 1;
  const std::size_t k = options.n_neighbors ? options.n_neighbors : dim + 1;
  const std::size_t exclusion = options.exclusion.value_or(max_n);
  if (source.size() < max_n + 2 * exclusion + k + 2)
    throw TooShort(fmt::format("smi: {} samples are too few for lag index {}", source.size(), max_n));

  SmiResult out;
  out.lags.assign(lags.begin(), lags.end());
  out.dim = dim;
  switch (dim) {
    case 2: smi_neighbors<2>(source, target, lag_idx, max_n, k, exclusion, out); break;
    case 3: smi_neighbors<3>(source, target, lag_idx, max_n, k, exclusion, out); break;
    default: smi_neighbors<4>(source, target, lag_idx, max_n, k, exclusion, out); break;
  }
  out.pearson = pearson(out.reconstruction, out.observed);
  return out;
}

std::vector<TauScanLevel> greedy_tau_scan(std::span<const double> source,
                                          std::span<const double> target, double dt,
                                          std::size_t max_dim, std::span<const double> tau_grid,
                                          const SmiOptions& options) {
  if (max_dim < 2 || max_dim > 4) throw std::invalid_argument("greedy_tau_scan: max_dim must be in [2, 4]");
  if (tau_grid.empty()) throw std::invalid_argument("greedy_tau_scan: empty tau grid");
  for (double tau : tau_grid) lag_index(tau, dt);

  std::vector<TauScanLevel> levels;
  std::vector<double> fixed;
  for (std::size_t dim = 2; dim <= max_dim; ++dim) {
    TauScanLevel level;
    level.dim = dim;
    level.fixed_lags = fixed;
    level.best_pearson = -2.0;
    for (double tau : tau_grid) {
      std::vector<double> lags = fixed;
      lags.push_back(tau);
      const double r = smi_reconstruct(source, target, lags, dt, options).pearson;
      level.taus.push_back(tau);
      level.pearson.push_back(r);
      if (r > level.best_pearson) {
        level.best_pearson = r;
        level.best_tau = tau;
      }
    }
    fixed.push_back(level.best_tau);
    levels.push_back(std::move(level));
  }
  return levels;
}

}  // namespace ilc
