#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace ilc {

struct ParamAxis {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
};

/// Box of controllable parameters. The surrogate works in the unit cube;
/// each axis is mapped linearly onto [0, 1].
struct ParamSpace {
  std::vector<ParamAxis> axes;

  std::size_t dim() const { return axes.size(); }
  void validate() const;  // throws ConfigError
  std::vector<double> to_unit(std::span<const double> raw) const;
  std::vector<double> from_unit(std::span<const double> unit) const;
  bool contains(std::span<const double> raw) const;
};

/// One completed measurement: raw parameter values and log10(EMD).
struct Observation {
  std::vector<double> params;
  double objective = 0.0;
};

/// log10(max(emd, floor)); keeps the transform total at EMD = 0.
double objective_from_emd(double emd, double floor = 1.0);

/// Matern correlation for smoothness nu in {0.5, 1.5, 2.5} at scaled
/// distance r >= 0.
double matern(double r, double nu);

/// Kernel hyperparameters, in unit-cube inputs and standardized targets.
struct GpHyperparameters {
  std::vector<double> length_scales;
  double signal_variance = 1.0;
  double noise_variance = 1e-2;
};

struct GpConfig {
  double nu = 2.5;
  bool optimize = true;
  GpHyperparameters initial;  // empty length_scales -> 0.3 on every axis
  double length_scale_min = 1e-2;
  double length_scale_max = 1e2;
  double signal_variance_min = 1e-2;
  double signal_variance_max = 1e2;
  double noise_variance_min = 1e-4;
  double noise_variance_max = 1.0;
  std::size_t restarts = 4;
  std::uint64_t seed = 0;
  std::size_t min_observations = 2;
};

struct Prediction {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Fitted GP posterior. Targets are standardized internally (constant prior
/// mean at the sample mean); predictions are returned in objective units and
/// the stddev is that of the latent function, without observation noise.
/// Immutable after construction.
class GpModel {
 public:
  GpModel(std::vector<Observation> observations, ParamSpace space, double nu,
          GpHyperparameters hyper);

  const ParamSpace& space() const { return space_; }
  const std::vector<Observation>& observations() const { return observations_; }
  const GpHyperparameters& hyperparameters() const { return hyper_; }
  double nu() const { return nu_; }
  double target_mean() const { return y_mean_; }
  double target_scale() const { return y_scale_; }
  double best_objective() const { return best_; }
  double log_marginal_likelihood() const { return lml_; }
  double prior_stddev() const;

  /// Throws OutOfBounds when the query lies outside the parameter box.
  Prediction predict(std::span<const double> raw) const;
  Prediction predict_unit(std::span<const double> unit) const;

  double kernel_unit(std::span<const double> a, std::span<const double> b) const;

 private:
  std::vector<Observation> observations_;
  ParamSpace space_;
  double nu_;
  GpHyperparameters hyper_;
  Eigen::MatrixXd x_;  // unit-cube inputs, one row per observation
  Eigen::VectorXd alpha_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  double best_ = 0.0;
  double lml_ = 0.0;
};

/// Fits a GP to the observations; with config.optimize the hyperparameters
/// maximize the log marginal likelihood inside the configured bounds
/// (seeded multi-start Nelder-Mead in log space).
/// Throws TooFewObservations, OutOfBounds, IllConditioned.
GpModel fit(std::span<const Observation> observations, const ParamSpace& space,
            const GpConfig& config = {});

/// Expected improvement for minimization:
///   z = (f* - mu - xi) / s,  EI = (f* - mu - xi) Phi(z) + s phi(z),
/// with f* the best observed objective. Zero where s = 0.
double expected_improvement(const GpModel& model, std::span<const double> raw, double xi);
/// log(EI), finite far into the tail where EI itself underflows.
double log_expected_improvement(const GpModel& model, std::span<const double> raw, double xi);
double log_expected_improvement(const Prediction& p, double best, double xi);

struct SearchConfig {
  std::size_t candidates = 512;  // quasi-random (shifted Sobol) probes
  std::size_t refine = 8;        // best probes polished by local search
  std::size_t max_iterations = 200;
  double exclusion_radius = 0.02;  // unit-cube distance around excluded points
};

/// Argmax of EI over the space, in raw units. Deterministic given the seed.
/// Points within search.exclusion_radius of any `exclude` entry (raw units)
/// are never returned.
std::vector<double> suggest_next(const GpModel& model, const ParamSpace& space, double xi,
                                 std::uint64_t seed, const SearchConfig& search = {},
                                 std::span<const std::vector<double>> exclude = {});

/// Argmin of the posterior mean over the space, in raw units. Training
/// inputs are always among the starting points and ties keep the earlier
/// point, so a flat mean returns the first observation.
std::vector<double> model_minimum(const GpModel& model, const ParamSpace& space,
                                  std::uint64_t seed = 0, const SearchConfig& search = {});

}  // namespace ilc
