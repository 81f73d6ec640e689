#include "ilc/controller.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "ilc/errors.hpp"
#include "ilc/parallel.hpp"
#include "ilc/rng.hpp"
#include "ilc/transport.hpp"

namespace ilc {

void CampaignConfig::validate() const {
  if (!reference.valid()) throw ConfigError("reference parameters must be positive");
  controlled.validate();
  for (const auto& ax : controlled.axes) {
    if (!is_param_name(ax.name))
      throw ConfigError(fmt::format("controlled parameter '{}' is not a system parameter", ax.name));
    if (hidden.count(ax.name))
      throw ConfigError(fmt::format("parameter '{}' is both controlled and hidden", ax.name));
    if (!(ax.lower > 0.0)) throw ConfigError(fmt::format("bounds of '{}' must be positive", ax.name));
  }
  for (std::size_t i = 0; i < controlled.axes.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (controlled.axes[i].name == controlled.axes[j].name)
        throw ConfigError(fmt::format("parameter '{}' is controlled twice", controlled.axes[i].name));
  for (const auto& [name, value] : hidden) {
    if (!is_param_name(name))
      throw ConfigError(fmt::format("hidden parameter '{}' is not a system parameter", name));
    if (!(value > 0.0)) throw ConfigError(fmt::format("hidden parameter '{}' must be positive", name));
  }
  if (n_prior < 2) throw ConfigError("n_prior must be >= 2");
  if (!(xi >= 0.0)) throw ConfigError("xi must be >= 0");
  if (embedding.bins < 1) throw ConfigError("embedding.bins must be >= 1");
  if (!(embedding.padding >= 0.0)) throw ConfigError("embedding.padding must be >= 0");
  try {
    lag_index(embedding.tau1, plant.dt);
  } catch (const LagNotMultipleOfDt& e) {
    throw ConfigError(std::string("embedding.tau1: ") + e.what());
  }
  PlantRunSpec probe = plant;
  probe.params = reference;
  try {
    probe.validate();
  } catch (const InvalidRunSpec& e) {
    throw ConfigError(std::string("plant: ") + e.what());
  }
  if (plant.n_keep <= lag_index(embedding.tau1, plant.dt))
    throw ConfigError("plant.n_keep must exceed the embedding lag");
}

SystemParams CampaignConfig::merged(std::span<const double> candidate) const {
  SystemParams p = reference;
  for (const auto& [name, value] : hidden) p.set(name, value);
  for (std::size_t i = 0; i < controlled.axes.size() && i < candidate.size(); ++i)
    p.set(controlled.axes[i].name, candidate[i]);
  return p;
}

std::shared_ptr<const Plant> default_plant() {
  static const auto plant = std::make_shared<const LorenzPlant>();
  return plant;
}

namespace {

DelayVectorSet embed_x(const Trajectory& tr, const EmbeddingConfig& cfg) {
  const std::vector<double> x = tr.component('x');
  const double lags[] = {cfg.tau1};
  return embed(x, lags, tr.dt);
}

PlantRunSpec run_spec(const CampaignConfig& config, const SystemParams& params,
                      const State& initial) {
  PlantRunSpec spec = config.plant;
  spec.params = params;
  spec.initial = initial;
  return spec;
}

}  // namespace

Reference build_reference(const CampaignConfig& config, const Plant& plant) {
  Reference ref;
  ref.trajectory = plant.run(run_spec(config, config.reference, config.plant.initial));
  ref.points = embed_x(ref.trajectory, config.embedding);
  ref.grid = shared_grid(ref.points, config.embedding.bins, config.embedding.padding,
                         config.embedding.min_extent);
  ref.pdf = bin(ref.points, ref.grid);
  return ref;
}

Evaluation evaluate_params(const SystemParams& params, const CampaignConfig& config,
                           const Reference& reference, const State& carry, const Plant& plant) {
  const Trajectory tr = plant.run(run_spec(config, params, carry));
  const BinnedPdf pdf = bin(embed_x(tr, config.embedding), reference.grid);
  Evaluation ev;
  ev.emd = emd(reference.pdf, pdf);
  ev.observation.objective = objective_from_emd(ev.emd, config.emd_floor);
  for (const auto& ax : config.controlled.axes) ev.observation.params.push_back(params.get(ax.name));
  ev.final_state = tr.back();
  return ev;
}

Evaluation evaluate_condition(std::span<const double> candidate, const CampaignConfig& config,
                              const Reference& reference, const State& carry, const Plant& plant) {
  if (candidate.size() != config.controlled.dim())
    throw ConfigError("candidate dimension does not match the controlled parameters");
  Evaluation ev = evaluate_params(config.merged(candidate), config, reference, carry, plant);
  ev.observation.params.assign(candidate.begin(), candidate.end());
  return ev;
}

// ------------------------------------------------------------- campaign

CampaignResult run_campaign(const CampaignConfig& config, const Plant& plant) {
  config.validate();
  CampaignResult result;
  result.reference = build_reference(config, plant);
  State carry = result.reference.trajectory.back();
  ++result.actuations;

  const ParamSpace& space = config.controlled;
  std::vector<Observation> observations;
  std::vector<std::vector<double>> failed_points;

  auto attempt = [&](const std::vector<double>& candidate, SuggestionSource source) {
    IterationRecord rec;
    rec.index = result.history.size();
    rec.params = candidate;
    rec.source = source;
    ++result.actuations;
    try {
      Evaluation ev = evaluate_condition(candidate, config, result.reference, carry, plant);
      rec.emd = ev.emd;
      rec.objective = ev.observation.objective;
      rec.carry_state = ev.final_state;
      carry = ev.final_state;
      observations.push_back(std::move(ev.observation));
    } catch (const IntegrationFailure&) {
      rec.failed = true;
      failed_points.push_back(candidate);
      rec.emd = std::numeric_limits<double>::quiet_NaN();
      rec.objective = std::numeric_limits<double>::quiet_NaN();
      rec.carry_state = carry;
    }
    result.history.push_back(rec);
    return !rec.failed;
  };

  Rng prior_rng = make_rng(config.seed, "prior");
  auto draw_prior = [&] {
    std::vector<double> p(space.dim());
    for (std::size_t d = 0; d < space.dim(); ++d) {
      std::uniform_real_distribution<double> u(space.axes[d].lower, space.axes[d].upper);
      p[d] = u(prior_rng);
    }
    return p;
  };
  for (std::size_t k = 0; k < config.n_prior; ++k) {
    if (!attempt(draw_prior(), SuggestionSource::Prior)) attempt(draw_prior(), SuggestionSource::Prior);
  }

  auto fit_model = [&](std::uint64_t counter) {
    GpConfig gp = config.gp;
    gp.seed = derive_seed(config.seed, "gp", counter);
    return fit(observations, space, gp);
  };

  for (std::size_t it = 0; it < config.n_iterations; ++it) {
    GpModel model = fit_model(it);
    result.models.push_back(model);
    if (config.stop_stddev) {
      const auto at_min = model_minimum(model, space, derive_seed(config.seed, "stop", it), config.search);
      if (model.predict(at_min).stddev < *config.stop_stddev) break;
    }
    auto next = suggest_next(model, space, config.xi, derive_seed(config.seed, "acquisition", it),
                             config.search, failed_points);
    if (!attempt(next, SuggestionSource::Acquisition)) {
      next = suggest_next(model, space, config.xi,
                          derive_seed(config.seed, "acquisition-retry", it), config.search,
                          failed_points);
      attempt(next, SuggestionSource::Acquisition);
    }
  }

  GpModel final_model = fit_model(config.n_iterations);
  result.best_guess = model_minimum(final_model, space, derive_seed(config.seed, "minimum"),
                                    config.search);
  result.models.push_back(std::move(final_model));
  result.best_observed = *std::min_element(
      observations.begin(), observations.end(),
      [](const Observation& a, const Observation& b) { return a.objective < b.objective; });
  return result;
}

// ------------------------------------------------------ confidence floor

double ConfidenceFloor::log10_floor() const { return std::log10(std::max(floor, 1e-300)); }

ConfidenceFloor confidence_floor(const CampaignConfig& config, std::size_t n_runs,
                                 double perturbation, bool carry_over, const Plant& plant) {
  return confidence_floor(config, build_reference(config, plant), n_runs, perturbation, carry_over,
                          plant);
}

ConfidenceFloor confidence_floor(const CampaignConfig& config, const Reference& reference,
                                 std::size_t n_runs, double perturbation, bool carry_over,
                                 const Plant& plant) {
  if (n_runs < 2) throw ConfigError("confidence floor needs at least 2 runs");
  if (!(perturbation >= 0.0)) throw ConfigError("perturbation must be >= 0");

  auto draw = [&](std::size_t run) {
    Rng rng = make_rng(config.seed, "floor", run);
    SystemParams p = config.reference;
    for (const auto& name : kParamNames) {
      const double nominal = p.get(name);
      std::normal_distribution<double> n(nominal, perturbation * nominal);
      p.set(name, perturbation > 0.0 ? std::max(n(rng), 1e-6 * nominal) : nominal);
    }
    return p;
  };

  ConfidenceFloor out;
  out.samples.resize(n_runs);
  if (carry_over) {
    State carry = reference.trajectory.back();
    for (std::size_t r = 0; r < n_runs; ++r) {
      Evaluation ev = evaluate_params(draw(r), config, reference, carry, plant);
      carry = ev.final_state;
      out.samples[r] = ev.emd;
    }
  } else {
    parallel_for(n_runs, [&](std::size_t r) {
      out.samples[r] = evaluate_params(draw(r), config, reference, config.plant.initial, plant).emd;
    });
  }
  const double n = static_cast<double>(n_runs);
  out.mean = std::accumulate(out.samples.begin(), out.samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : out.samples) ss += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(ss / n);
  out.floor = out.mean + out.stddev;
  return out;
}

SimilarityThresholds similarity_thresholds(const ConfidenceFloor& floor) {
  const double base = floor.log10_floor();
  return {base + 0.1, base + 0.3};
}

// ------------------------------------------------------------ sweeps

std::vector<SweepPoint> parameter_sweep(const CampaignConfig& config, const Reference& reference,
                                        const std::string& parameter,
                                        std::span<const double> values, const Plant& plant) {
  if (!is_param_name(parameter))
    throw ConfigError(fmt::format("unknown sweep parameter '{}'", parameter));
  SystemParams base = config.merged({});
  State carry = reference.trajectory.back();
  std::vector<SweepPoint> out;
  out.reserve(values.size());
  for (double v : values) {
    if (!(v > 0.0)) throw ConfigError(fmt::format("sweep value {} must be positive", v));
    SystemParams p = base;
    p.set(parameter, v);
    Evaluation ev = evaluate_params(p, config, reference, carry, plant);
    carry = ev.final_state;
    out.push_back({v, ev.emd});
  }
  return out;
}

double GridScan::min() const { return *std::min_element(emd.begin(), emd.end()); }

namespace {

std::size_t nearest(const std::vector<double>& axis, double v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < axis.size(); ++i)
    if (std::abs(axis[i] - v) < std::abs(axis[best] - v)) best = i;
  return best;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

}  // namespace

std::size_t GridScan::nearest_x(double v) const { return nearest(xs, v); }
std::size_t GridScan::nearest_y(double v) const { return nearest(ys, v); }

GridScan grid_scan(const CampaignConfig& config, const Reference& reference, std::size_t nx,
                   std::size_t ny, const Plant& plant) {
  if (config.controlled.dim() != 2) throw ConfigError("grid scan needs exactly two controlled parameters");
  GridScan scan;
  scan.xs = linspace(config.controlled.axes[0].lower, config.controlled.axes[0].upper, nx);
  scan.ys = linspace(config.controlled.axes[1].lower, config.controlled.axes[1].upper, ny);
  scan.emd.resize(nx * ny);
  parallel_for(nx * ny, [&](std::size_t k) {
    const double cand[] = {scan.xs[k / ny], scan.ys[k % ny]};
    scan.emd[k] = evaluate_condition(cand, config, reference, config.plant.initial, plant).emd;
  });
  return scan;
}

std::vector<bool> similarity_region(const GridScan& scan, double log10_threshold,
                                    std::span<const double> anchor) {
  const std::size_t nx = scan.xs.size(), ny = scan.ys.size();
  std::vector<bool> region(nx * ny, false);
  auto below = [&](std::size_t i, std::size_t j) {
    return std::log10(std::max(scan.at(i, j), 1e-300)) < log10_threshold;
  };
  const std::size_t i0 = scan.nearest_x(anchor[0]), j0 = scan.nearest_y(anchor[1]);
  if (!below(i0, j0)) return region;
  std::deque<std::pair<std::size_t, std::size_t>> queue{{i0, j0}};
  region[i0 * ny + j0] = true;
  while (!queue.empty()) {
    const auto [i, j] = queue.front();
    queue.pop_front();
    for (int di = -1; di <= 1; ++di) {
      for (int dj = -1; dj <= 1; ++dj) {
        const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
        if (ii < 0 || jj < 0 || ii >= static_cast<long>(nx) || jj >= static_cast<long>(ny)) continue;
        const std::size_t k = static_cast<std::size_t>(ii) * ny + static_cast<std::size_t>(jj);
        if (region[k] || !below(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj))) continue;
        region[k] = true;
        queue.emplace_back(ii, jj);
      }
    }
  }
  return region;
}

bool region_contains(const GridScan& scan, const std::vector<bool>& region,
                     std::span<const double> point) {
  return region[scan.nearest_x(point[0]) * scan.ys.size() + scan.nearest_y(point[1])];
}

}  // namespace ilc
