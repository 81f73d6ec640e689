#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace ilc {

/// Lorenz control parameters. All three must be strictly positive.
struct SystemParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;

  bool valid() const;
  /// Access by name ("sigma", "rho", "beta"); throws ConfigError otherwise.
  double get(const std::string& name) const;
  void set(const std::string& name, double value);

  friend bool operator==(const SystemParams&, const SystemParams&) = default;
};

inline const std::array<std::string, 3> kParamNames{"sigma", "rho", "beta"};
bool is_param_name(const std::string& name);

struct State {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool finite() const;
  friend bool operator==(const State&, const State&) = default;
};

using StateDerivative = State;

/// Uniformly sampled plant output. samples[k] is the state at t0 + k * dt.
struct Trajectory {
  double dt = 0.0;
  double t0 = 0.0;
  std::vector<State> samples;

  std::size_t size() const { return samples.size(); }
  const State& back() const { return samples.back(); }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }

  std::vector<double> component(char axis) const;  // 'x', 'y' or 'z'
};

/// Adaptive-step error tolerances of the Dormand-Prince integrator.
struct SolverTolerances {
  double rtol = 1e-6;
  double atol = 1e-9;
};

/// Integration request. Starting from `initial` at t_start, the plant
/// produces n_discard + n_keep uniform output points at t_start + k dt,
/// k = 1, 2, ..., drops the first n_discard and returns the rest. One run
/// therefore spans exactly (n_discard + n_keep) dt of plant time.
struct PlantRunSpec {
  SystemParams params;
  State initial{0.1, 0.2, 0.3};
  double dt = 0.01;
  std::size_t n_keep = 100000;
  std::size_t n_discard = 100000;
  SolverTolerances tolerances;
  double t_start = 0.0;

  /// Throws InvalidRunSpec naming the first violated invariant.
  void validate() const;
};

StateDerivative lorenz_rhs(const State& state, const SystemParams& params);

/// Integrates the Lorenz system with adaptive RK45 (Dormand-Prince) and
/// samples its dense-output interpolant on the uniform output grid.
/// The last sample is the carry-over initial condition for the next run.
Trajectory integrate(const PlantRunSpec& spec);

/// A plant turns a run specification into a measured trajectory. The
/// controller only talks to plants through this interface.
class Plant {
 public:
  virtual ~Plant() = default;
  virtual Trajectory run(const PlantRunSpec& spec) const = 0;
  virtual std::string name() const = 0;
};

class LorenzPlant final : public Plant {
 public:
  Trajectory run(const PlantRunSpec& spec) const override { return integrate(spec); }
  std::string name() const override { return "lorenz"; }
};

}  // namespace ilc
