#include "ilc/plant.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

#include <boost/numeric/odeint.hpp>

#include "ilc/errors.hpp"

namespace ilc {

namespace odeint = boost::numeric::odeint;

bool SystemParams::valid() const {
  return sigma > 0.0 && rho > 0.0 && beta > 0.0 && std::isfinite(sigma) &&
         std::isfinite(rho) && std::isfinite(beta);
}

double SystemParams::get(const std::string& name) const {
  if (name == "sigma") return sigma;
  if (name == "rho") return rho;
  if (name == "beta") return beta;
  throw ConfigError("unknown system parameter '" + name + "'");
}

void SystemParams::set(const std::string& name, double value) {
  if (name == "sigma") {
    sigma = value;
  } else if (name == "rho") {
    rho = value;
  } else if (name == "beta") {
    beta = value;
  } else {
    throw ConfigError("unknown system parameter '" + name + "'");
  }
}

bool is_param_name(const std::string& name) {
  return std::find(kParamNames.begin(), kParamNames.end(), name) != kParamNames.end();
}

bool State::finite() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
}

std::vector<double> Trajectory::component(char axis) const {
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const State& s = samples[i];
    switch (axis) {
      case 'x': out[i] = s.x; break;
      case 'y': out[i] = s.y; break;
      case 'z': out[i] = s.z; break;
      default: throw std::invalid_argument(std::string("unknown state axis: ") + axis);
    }
  }
  return out;
}

void PlantRunSpec::validate() const {
  if (!params.valid()) throw InvalidRunSpec("system parameters must be finite and > 0");
  if (!initial.finite()) throw InvalidRunSpec("initial state must be finite");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidRunSpec("dt must be > 0");
  if (n_keep < 1) throw InvalidRunSpec("n_keep must be >= 1");
  if (!(tolerances.rtol > 0.0) || !(tolerances.atol > 0.0))
    throw InvalidRunSpec("solver tolerances must be > 0");
}

StateDerivative lorenz_rhs(const State& s, const SystemParams& p) {
  return {p.sigma * (s.y - s.x), s.x * (p.rho - s.z) - s.y, s.x * s.y - p.beta * s.z};
}

namespace {

using OdeState = std::array<double, 3>;

struct NonFinite {};

}  // namespace

Trajectory integrate(const PlantRunSpec& spec) {
  spec.validate();

  const SystemParams p = spec.params;
  auto rhs = [p](const OdeState& u, OdeState& du, double /*t*/) {
    const StateDerivative d = lorenz_rhs({u[0], u[1], u[2]}, p);
    du = {d.x, d.y, d.z};
  };

  const std::size_t total = spec.n_discard + spec.n_keep;
  Trajectory out;
  out.dt = spec.dt;
  out.t0 = spec.t_start + static_cast<double>(spec.n_discard + 1) * spec.dt;
  out.samples.reserve(spec.n_keep);

  auto stepper = odeint::make_dense_output(
      spec.tolerances.atol, spec.tolerances.rtol, odeint::runge_kutta_dopri5<OdeState>());
  const State& ic = spec.initial;
  stepper.initialize(OdeState{ic.x, ic.y, ic.z}, spec.t_start, spec.dt);

  // Output sample k sits at t_start + (k + 1) dt; times come from the index,
  // never from accumulation.
  auto grid_time = [&](std::size_t k) {
    return spec.t_start + static_cast<double>(k + 1) * spec.dt;
  };
  const std::size_t max_steps = 1000 * total + 1000;

  try {
    std::size_t k = 0;
    std::size_t steps = 0;
    OdeState v;
    while (k < total) {
      while (k < total && grid_time(k) <= stepper.current_time()) {
        stepper.calc_state(grid_time(k), v);
        if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2]))
          throw NonFinite{};
        if (k >= spec.n_discard) out.samples.push_back({v[0], v[1], v[2]});
        ++k;
      }
      if (k >= total) break;
      stepper.do_step(rhs);
      const OdeState& cur = stepper.current_state();
      if (!std::isfinite(cur[0]) || !std::isfinite(cur[1]) || !std::isfinite(cur[2]))
        throw NonFinite{};
      if (++steps > max_steps) throw IntegrationFailure("step budget exhausted");
    }
  } catch (const NonFinite&) {
    throw IntegrationFailure("state became non-finite");
  } catch (const IntegrationFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw IntegrationFailure(std::string("adaptive solver failed: ") + e.what());
  }
  return out;
}

}  // namespace ilc
