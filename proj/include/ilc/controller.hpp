#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ilc/embedding.hpp"
#include "ilc/plant.hpp"
#include "ilc/surrogate.hpp"

namespace ilc {

struct EmbeddingConfig {
  double tau1 = 0.17;
  std::size_t bins = 20;
  double padding = 0.25;
  double min_extent = 1e-6;  // keeps the grid defined for collapsed references
};

/// Everything a control campaign needs. `plant` carries dt, n_keep,
/// n_discard, tolerances and the first-iteration initial state; its params
/// field is ignored (parameters come from reference/hidden/candidates).
struct CampaignConfig {
  SystemParams reference;
  ParamSpace controlled;
  std::map<std::string, double> hidden;  // uncontrolled, unmeasured overrides
  std::size_t n_prior = 5;
  std::size_t n_iterations = 10;
  double xi = 0.1;
  EmbeddingConfig embedding;
  PlantRunSpec plant;
  std::uint64_t seed = 0;
  GpConfig gp;
  SearchConfig search;
  double emd_floor = 1.0;  // EMD values below this map to log10(emd_floor)
  /// Optional early stop: end once the posterior stddev at the model minimum
  /// falls below this value. Off when empty.
  std::optional<double> stop_stddev;

  void validate() const;  // throws ConfigError
  /// Reference values, overridden by hidden values, overridden by the
  /// candidate (ordered as `controlled`).
  SystemParams merged(std::span<const double> candidate) const;
};

std::shared_ptr<const Plant> default_plant();

struct Reference {
  BinnedPdf pdf;
  GridSpec grid;
  Trajectory trajectory;
  DelayVectorSet points;
};

/// Runs the plant at the reference parameters from the configured initial
/// state, embeds x(t), derives the campaign-wide grid and bins.
Reference build_reference(const CampaignConfig& config, const Plant& plant = *default_plant());

struct Evaluation {
  Observation observation;  // controlled values + log10(EMD)
  double emd = 0.0;
  State final_state;
};

/// One loop body: actuate, measure, fingerprint, compare.
Evaluation evaluate_condition(std::span<const double> candidate, const CampaignConfig& config,
                              const Reference& reference, const State& carry,
                              const Plant& plant = *default_plant());

/// Same as evaluate_condition for a fully specified parameter set.
Evaluation evaluate_params(const SystemParams& params, const CampaignConfig& config,
                           const Reference& reference, const State& carry,
                           const Plant& plant = *default_plant());

enum class SuggestionSource { Prior, Acquisition };

struct IterationRecord {
  std::size_t index = 0;
  std::vector<double> params;
  double emd = 0.0;
  double objective = 0.0;
  SuggestionSource source = SuggestionSource::Prior;
  State carry_state;  // plant state after this run
  bool failed = false;
};

struct CampaignResult {
  std::vector<IterationRecord> history;
  /// models[k] was fitted just before acquisition k; the last entry is the
  /// final model fitted on every successful observation.
  std::vector<GpModel> models;
  std::vector<double> best_guess;
  Observation best_observed;
  Reference reference;
  std::size_t actuations = 0;

  const GpModel& final_model() const { return models.back(); }
};

CampaignResult run_campaign(const CampaignConfig& config, const Plant& plant = *default_plant());

struct ConfidenceFloor {
  std::vector<double> samples;  // EMD per Monte Carlo run
  double mean = 0.0;
  double stddev = 0.0;  // maximum-likelihood Gaussian fit
  double floor = 0.0;   // mean + stddev

  double log10_floor() const;
};

/// Monte Carlo EMD noise floor: each run draws every reference parameter
/// from N(p, perturbation * p). Without carry-over every run starts from the
/// configured initial state (independent, parallel); with it runs chain
/// through the plant state.
ConfidenceFloor confidence_floor(const CampaignConfig& config, std::size_t n_runs,
                                 double perturbation, bool carry_over = false,
                                 const Plant& plant = *default_plant());
ConfidenceFloor confidence_floor(const CampaignConfig& config, const Reference& reference,
                                 std::size_t n_runs, double perturbation, bool carry_over = false,
                                 const Plant& plant = *default_plant());

/// log10(floor) + 0.1 k for k = 1 (tight) and k = 3 (loose).
struct SimilarityThresholds {
  double tight = 0.0;
  double loose = 0.0;
};
SimilarityThresholds similarity_thresholds(const ConfidenceFloor& floor);

struct SweepPoint {
  double value = 0.0;
  double emd = 0.0;
};

/// Evaluates `values` of one system parameter in order, carrying the plant
/// state from run to run (starting at the reference's final state).
std::vector<SweepPoint> parameter_sweep(const CampaignConfig& config, const Reference& reference,
                                        const std::string& parameter,
                                        std::span<const double> values,
                                        const Plant& plant = *default_plant());

/// Dense EMD map over a 2D controlled space; every cell starts from the
/// configured initial state, so cells are independent.
struct GridScan {
  std::vector<double> xs;   // axis 0 values
  std::vector<double> ys;   // axis 1 values
  std::vector<double> emd;  // row-major (xs.size() x ys.size())

  double at(std::size_t i, std::size_t j) const { return emd[i * ys.size() + j]; }
  double min() const;
  std::size_t nearest_x(double v) const;
  std::size_t nearest_y(double v) const;
};
GridScan grid_scan(const CampaignConfig& config, const Reference& reference, std::size_t nx,
                   std::size_t ny, const Plant& plant = *default_plant());

/// Connected (8-neighbour) set of cells with log10(EMD) < threshold that
/// contains the cell nearest `anchor`. Empty when that cell is above it.
std::vector<bool> similarity_region(const GridScan& scan, double log10_threshold,
                                    std::span<const double> anchor);
bool region_contains(const GridScan& scan, const std::vector<bool>& region,
                     std::span<const double> point);

}  // namespace ilc
