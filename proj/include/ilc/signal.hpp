#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ilc {

/// One-sided power spectral density, averaged over windowed segments.
struct PowerSpectrum {
  std::vector<double> frequencies;  // k / (segment_length dt), ascending
  std::vector<double> power;        // density; sum(power) * df ~ variance
  std::size_t segment_length = 0;
  std::size_t overlap = 0;
  std::size_t segments = 0;
  std::string window = "hann";

  double df() const { return frequencies.size() > 1 ? frequencies[1] - frequencies[0] : 0.0; }
};

/// Welch estimate: Hann-windowed, mean-removed segments of segment_length
/// samples that overlap by `overlap` samples. Throws SegmentTooLong.
PowerSpectrum welch_psd(std::span<const double> signal, double dt, std::size_t segment_length,
                        std::size_t overlap = 0);

struct SpectralPeak {
  std::size_t bin = 0;
  double frequency = 0.0;
  double power = 0.0;
  double prominence = 0.0;  // power / local broadband level
};

/// Local maxima within [f_min, f_max], strongest first; a peak closer than
/// min_separation to a stronger one is dropped. The broadband level of a
/// bin is the median power over +-half_window (frequency units).
std::vector<SpectralPeak> find_peaks(const PowerSpectrum& psd, double f_min, double f_max,
                                     double min_separation = 0.0, double half_window = 0.25);
double broadband_level(const PowerSpectrum& psd, std::size_t bin, double half_window = 0.25);

/// Instantaneous phase (radians, wrapped to (-pi, pi]) of the analytic
/// signal of the mean-removed input.
std::vector<double> hilbert_phase(std::span<const double> signal);
std::vector<double> unwrap_phase(std::span<const double> phase);

/// Sample correlation coefficient. Throws TooShort, ZeroVariance.
double pearson(std::span<const double> a, std::span<const double> b);

/// Shadow-manifold interpolation of `target` from the delay embedding of
/// `source`. At time t the source vector is (s(t), s(t - lag_1), ...);
/// the target value z(t) is estimated from the n_neighbors nearest source
/// vectors (excluding times within +-exclusion samples of t) with weights
/// exp(-d / d_min).
struct SmiResult {
  std::vector<double> lags;
  std::size_t dim = 0;
  std::vector<std::size_t> times;       // sample index of each estimate
  std::vector<double> reconstruction;
  std::vector<double> observed;         // target at the same times
  double pearson = 0.0;
};

struct SmiOptions {
  std::size_t n_neighbors = 0;           // 0 -> E + 1
  std::optional<std::size_t> exclusion;  // default: largest lag index
};

SmiResult smi_reconstruct(std::span<const double> source, std::span<const double> target,
                          std::span<const double> lags, double dt, const SmiOptions& options = {});

/// Greedy lag selection: E = 2 scans the first lag over tau_grid; each
/// higher E keeps the earlier best lags and scans one more.
struct TauScanLevel {
  std::size_t dim = 0;
  std::vector<double> fixed_lags;
  std::vector<double> taus;
  std::vector<double> pearson;
  double best_tau = 0.0;
  double best_pearson = 0.0;
};

std::vector<TauScanLevel> greedy_tau_scan(std::span<const double> source,
                                          std::span<const double> target, double dt,
                                          std::size_t max_dim, std::span<const double> tau_grid,
                                          const SmiOptions& options = {});

}  // namespace ilc
