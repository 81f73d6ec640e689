#include "ilc/experiment.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/version.hpp>
#include <Eigen/Core>
#include <fftw3.h>
#include <fmt/format.h>
#include <gsl/gsl_version.h>
#include <yaml-cpp/yaml.h>

#include "ilc/errors.hpp"
#include "ilc/parallel.hpp"
#include "ilc/rng.hpp"
#include "ilc/signal.hpp"

namespace ilc {

// ---------------------------------------------------------------- kinds

namespace {

constexpr std::array<std::pair<ExperimentKind, std::string_view>, 9> kKindNames{{
    {ExperimentKind::Trajectory, "trajectory"},
    {ExperimentKind::Sweep, "sweep"},
    {ExperimentKind::Floor, "floor"},
    {ExperimentKind::Campaign1d, "campaign-1d"},
    {ExperimentKind::Campaign2d, "campaign-2d"},
    {ExperimentKind::CampaignRobust, "campaign-robust"},
    {ExperimentKind::Psd, "psd"},
    {ExperimentKind::Phase, "phase"},
    {ExperimentKind::SmiScan, "smi-scan"},
}};

constexpr std::array<FigureInfo, 20> kCoverage{{
    {"fig2", ExperimentKind::Trajectory, "fig2.yaml", "time series across a rho 28 -> 22.3 switch"},
    {"fig4a", ExperimentKind::Trajectory, "fig4.yaml", "unbinned reference TLPP of x(t)"},
    {"fig4b", ExperimentKind::Trajectory, "fig4.yaml", "binned reference TLPP on the shared grid"},
    {"fig5a", ExperimentKind::Sweep, "fig5a.yaml", "EMD landscape over rho"},
    {"fig6", ExperimentKind::Floor, "fig6.yaml", "Monte Carlo EMD histogram and Gaussian fit"},
    {"fig7a", ExperimentKind::Campaign1d, "fig7.yaml", "rho campaign GP after the priors"},
    {"fig7b", ExperimentKind::Campaign1d, "fig7.yaml", "rho campaign GP after iteration 1"},
    {"fig7c", ExperimentKind::Campaign1d, "fig7.yaml", "rho campaign GP after iteration 2"},
    {"fig7d", ExperimentKind::Campaign1d, "fig7.yaml", "rho campaign GP after iteration 3"},
    {"fig8a", ExperimentKind::Campaign1d, "fig8a.yaml", "final GP of the sigma campaign"},
    {"fig8b", ExperimentKind::Campaign1d, "fig8b.yaml", "final GP of the rho campaign"},
    {"fig8c", ExperimentKind::Campaign1d, "fig8c.yaml", "final GP of the beta campaign"},
    {"fig9", ExperimentKind::Campaign2d, "fig9.yaml", "(sigma, beta) campaign GP mean"},
    {"fig9_grid", ExperimentKind::Campaign2d, "fig9.yaml", "(sigma, beta) dense EMD grid"},
    {"fig10", ExperimentKind::CampaignRobust, "fig10.yaml", "(sigma, beta) campaign GP mean, rho = 40"},
    {"fig10_grid", ExperimentKind::CampaignRobust, "fig10.yaml", "(sigma, beta) dense EMD grid, rho = 40"},
    {"fig11a", ExperimentKind::Psd, "fig11a.yaml", "Welch PSD of x, y, z, |x|, |y|"},
    {"fig11b", ExperimentKind::Phase, "fig11b.yaml", "Hilbert phase of x(t)"},
    {"fig12a", ExperimentKind::SmiScan, "fig12.yaml", "greedy SMI lag scan per E"},
    {"fig12b", ExperimentKind::SmiScan, "fig12.yaml", "observed vs reconstructed z(t)"},
}};

const std::set<std::string> kComponents{"x", "y", "z", "abs_x", "abs_y", "abs_z"};

std::vector<double> component_signal(const Trajectory& t, const std::string& name) {
  const bool rectify = name.starts_with("abs_");
  std::vector<double> s = t.component(rectify ? name[4] : name[0]);
  if (rectify)
    for (double& v : s) v = std::abs(v);
  return s;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

/// Lag grid as exact multiples of dt.
std::vector<double> tau_grid(const SmiSettings& s, double dt) {
  std::vector<double> out;
  const auto first = static_cast<long>(std::llround(s.tau_min / dt));
  const auto last = static_cast<long>(std::llround(s.tau_max / dt));
  const auto step = std::max(1L, static_cast<long>(std::llround(s.tau_step / dt)));
  for (long k = first; k <= last; k += step) out.push_back(static_cast<double>(k) * dt);
  return out;
}

bool is_lag_multiple(double lag, double dt) {
  const double r = lag / dt;
  return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, std::abs(r));
}

}  // namespace

std::string_view kind_name(ExperimentKind kind) {
  for (const auto& [k, n] : kKindNames)
    if (k == kind) return n;
  return "unknown";
}

std::optional<ExperimentKind> kind_from_name(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  return std::nullopt;
}

std::span<const FigureInfo> coverage() { return kCoverage; }

const FigureInfo* find_figure(std::string_view id) {
  for (const auto& f : kCoverage)
    if (f.id == id) return &f;
  return nullptr;
}

std::string_view library_version() { return ILC_VERSION; }

// ------------------------------------------------------------- manifest

std::vector<std::string> Manifest::panels() const {
  if (!figures.empty()) return figures;
  std::vector<std::string> out;
  for (const auto& f : kCoverage)
    if (f.kind == kind) out.emplace_back(f.id);
  if (kind == ExperimentKind::Campaign1d) {
    // The final-model panel depends on which parameter is controlled.
    std::erase_if(out, [](const std::string& id) { return id.starts_with("fig8"); });
    if (campaign.controlled.size() == 1) {
      const std::string& p = campaign.controlled[0].name;
      if (p == "sigma") out.emplace_back("fig8a");
      if (p == "rho") out.emplace_back("fig8b");
      if (p == "beta") out.emplace_back("fig8c");
    }
  }
  return out;
}

CampaignConfig Manifest::campaign_config() const {
  CampaignConfig c;
  c.reference = plant.params;
  c.controlled.axes = campaign.controlled;
  c.hidden = campaign.hidden;
  c.n_prior = campaign.n_prior;
  c.n_iterations = campaign.n_iterations;
  c.xi = campaign.xi;
  c.embedding = embedding;
  c.plant = plant;
  c.seed = derive_seed(seed, "campaign");
  c.gp.nu = campaign.nu;
  c.gp.restarts = campaign.restarts;
  c.search.candidates = campaign.candidates;
  c.search.refine = campaign.refine;
  c.emd_floor = campaign.emd_floor;
  c.stop_stddev = campaign.stop_stddev;
  return c;
}

namespace {

std::string num(double v) { return fmt::format("{}", v); }

void emit_params(YAML::Emitter& out, const std::map<std::string, double>& m) {
  out << YAML::BeginMap;
  for (const auto& [k, v] : m) out << YAML::Key << k << YAML::Value << num(v);
  out << YAML::EndMap;
}

void emit_snapshot(YAML::Emitter& out, const Manifest& m) {
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << m.name;
  out << YAML::Key << "kind" << YAML::Value << std::string(kind_name(m.kind));
  out << YAML::Key << "figures" << YAML::Value << YAML::Flow << m.panels();
  out << YAML::Key << "seed" << YAML::Value << m.seed;

  out << YAML::Key << "plant" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "sigma" << YAML::Value << num(m.plant.params.sigma);
  out << YAML::Key << "rho" << YAML::Value << num(m.plant.params.rho);
  out << YAML::Key << "beta" << YAML::Value << num(m.plant.params.beta);
  out << YAML::Key << "initial" << YAML::Value << YAML::Flow << YAML::BeginSeq
      << num(m.plant.initial.x) << num(m.plant.initial.y) << num(m.plant.initial.z) << YAML::EndSeq;
  out << YAML::Key << "dt" << YAML::Value << num(m.plant.dt);
  out << YAML::Key << "n_keep" << YAML::Value << m.plant.n_keep;
  out << YAML::Key << "n_discard" << YAML::Value << m.plant.n_discard;
  out << YAML::Key << "rtol" << YAML::Value << num(m.plant.tolerances.rtol);
  out << YAML::Key << "atol" << YAML::Value << num(m.plant.tolerances.atol);
  out << YAML::EndMap;

  out << YAML::Key << "embedding" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "tau1" << YAML::Value << num(m.embedding.tau1);
  out << YAML::Key << "bins" << YAML::Value << m.embedding.bins;
  out << YAML::Key << "padding" << YAML::Value << num(m.embedding.padding);
  out << YAML::Key << "min_extent" << YAML::Value << num(m.embedding.min_extent);
  out << YAML::EndMap;

  switch (m.kind) {
    case ExperimentKind::Trajectory:
      out << YAML::Key << "trajectory" << YAML::Value << YAML::BeginMap;
      out << YAML::Key << "stride" << YAML::Value << m.trajectory.stride;
      out << YAML::Key << "switch_params" << YAML::Value;
      emit_params(out, m.trajectory.switch_params);
      out << YAML::Key << "time_before" << YAML::Value << num(m.trajectory.time_before);
      out << YAML::Key << "settle_tolerance" << YAML::Value << num(m.trajectory.settle_tolerance);
      out << YAML::EndMap;
      break;
    case ExperimentKind::Sweep:
      out << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap;
      out << YAML::Key << "parameter" << YAML::Value << m.sweep.parameter;
      out << YAML::Key << "lower" << YAML::Value << num(m.sweep.lower);
      out << YAML::Key << "upper" << YAML::Value << num(m.sweep.upper);
      out << YAML::Key << "points" << YAML::Value << m.sweep.points;
      out << YAML::EndMap;
      break;
    case ExperimentKind::Floor:
      out << YAML::Key << "floor" << YAML::Value << YAML::BeginMap;
      out << YAML::Key << "runs" << YAML::Value << m.floor.runs;
      out << YAML::Key << "perturbation" << YAML::Value << num(m.floor.perturbation);
      out << YAML::Key << "carry_over" << YAML::Value << m.floor.carry_over;
      out << YAML::Key << "histogram_bins" << YAML::Value << m.floor.histogram_bins;
      out << YAML::EndMap;
      break;
    case ExperimentKind::Campaign1d:
    case ExperimentKind::Campaign2d:
    case ExperimentKind::CampaignRobust: {
      const auto& c = m.campaign;
      out << YAML::Key << "campaign" << YAML::Value << YAML::BeginMap;
      out << YAML::Key << "controlled" << YAML::Value << YAML::BeginSeq;
      for (const auto& a : c.controlled) {
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "name" << YAML::Value << a.name
            << YAML::Key << "lower" << YAML::Value << num(a.lower) << YAML::Key << "upper"
            << YAML::Value << num(a.upper) << YAML::EndMap;
      }
      out << YAML::EndSeq;
      out << YAML::Key << "hidden" << YAML::Value;
      emit_params(out, c.hidden);
      out << YAML::Key << "n_prior" << YAML::Value << c.n_prior;
      out << YAML::Key << "n_iterations" << YAML::Value << c.n_iterations;
      out << YAML::Key << "xi" << YAML::Value << num(c.xi);
      out << YAML::Key << "nu" << YAML::Value << num(c.nu);
      out << YAML::Key << "restarts" << YAML::Value << c.restarts;
      out << YAML::Key << "candidates" << YAML::Value << c.candidates;
      out << YAML::Key << "refine" << YAML::Value << c.refine;
      out << YAML::Key << "emd_floor" << YAML::Value << num(c.emd_floor);
      out << YAML::Key << "stop_stddev" << YAML::Value;
      if (c.stop_stddev) {
        out << num(*c.stop_stddev);
      } else {
        out << YAML::Null;
      }
      out << YAML::Key << "curve_points" << YAML::Value << c.curve_points;
      out << YAML::Key << "true_points" << YAML::Value << c.true_points;
      out << YAML::Key << "grid" << YAML::Value << c.grid;
      out << YAML::Key << "floor_runs" << YAML::Value << c.floor_runs;
      out << YAML::Key << "floor_perturbation" << YAML::Value << num(c.floor_perturbation);
      out << YAML::EndMap;
      break;
    }
    case ExperimentKind::Psd:
    case ExperimentKind::Phase:
      out << YAML::Key << "signal" << YAML::Value << YAML::BeginMap;
      out << YAML::Key << "components" << YAML::Value << YAML::Flow << m.signal.components;
      out << YAML::Key << "segment_length" << YAML::Value << m.signal.segment_length;
      out << YAML::Key << "overlap" << YAML::Value << m.signal.overlap;
      out << YAML::Key << "f_max" << YAML::Value << num(m.signal.f_max);
      out << YAML::Key << "peak_separation" << YAML::Value << num(m.signal.peak_separation);
      out << YAML::Key << "window" << YAML::Value << num(m.signal.window);
      out << YAML::EndMap;
      break;
    case ExperimentKind::SmiScan:
      out << YAML::Key << "smi" << YAML::Value << YAML::BeginMap;
      out << YAML::Key << "source" << YAML::Value << m.smi.source;
      out << YAML::Key << "target" << YAML::Value << m.smi.target;
      out << YAML::Key << "max_dim" << YAML::Value << m.smi.max_dim;
      out << YAML::Key << "tau_min" << YAML::Value << num(m.smi.tau_min);
      out << YAML::Key << "tau_max" << YAML::Value << num(m.smi.tau_max);
      out << YAML::Key << "tau_step" << YAML::Value << num(m.smi.tau_step);
      out << YAML::Key << "neighbors" << YAML::Value << m.smi.neighbors;
      out << YAML::Key << "reconstruction_rows" << YAML::Value << m.smi.reconstruction_rows;
      out << YAML::EndMap;
      break;
  }
  out << YAML::EndMap;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string Manifest::snapshot() const {
  YAML::Emitter out;
  emit_snapshot(out, *this);
  return std::string(out.c_str()) + "\n";
}

std::uint64_t Manifest::hash() const { return fnv1a(snapshot()); }

// --------------------------------------------------------------- parsing

namespace {

class Reader {
 public:
  Reader(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsMap()) throw ConfigError(fmt::format("'{}' must be a mapping", path_));
  }

  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() || !node_) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.contains(key)) throw ConfigError(fmt::format("unknown key '{}'", field(key)));
    }
  }

  template <typename T>
  void get(const std::string& key, T& value) {
    seen_.insert(key);
    if (!node_ || !node_[key] || node_[key].IsNull()) return;
    try {
      value = node_[key].as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(fmt::format("'{}' has the wrong type", field(key)));
    }
  }

  void get(const std::string& key, std::optional<double>& value) {
    seen_.insert(key);
    if (!node_ || !node_[key] || node_[key].IsNull()) return;
    double v = 0.0;
    get(key, v);
    value = v;
  }

  YAML::Node child(const std::string& key) {
    seen_.insert(key);
    return node_ ? node_[key] : YAML::Node();
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_manifest(const YAML::Node& node, Manifest& m) {
  Reader r(node, "");
  r.get("name", m.name);
  std::string kind;
  r.get("kind", kind);
  if (kind.empty()) throw ConfigError("'kind' is required");
  const auto k = kind_from_name(kind);
  if (!k) throw ConfigError(fmt::format("'kind' has unknown value '{}'", kind));
  m.kind = *k;
  r.get("figures", m.figures);
  r.get("seed", m.seed);
  if (m.name.empty()) m.name = std::string(kind_name(m.kind));

  {
    Reader p(r.child("plant"), "plant");
    p.get("sigma", m.plant.params.sigma);
    p.get("rho", m.plant.params.rho);
    p.get("beta", m.plant.params.beta);
    std::vector<double> init{m.plant.initial.x, m.plant.initial.y, m.plant.initial.z};
    p.get("initial", init);
    if (init.size() != 3) throw ConfigError("'plant.initial' must have three entries");
    m.plant.initial = {init[0], init[1], init[2]};
    p.get("dt", m.plant.dt);
    p.get("n_keep", m.plant.n_keep);
    p.get("n_discard", m.plant.n_discard);
    p.get("rtol", m.plant.tolerances.rtol);
    p.get("atol", m.plant.tolerances.atol);
  }
  {
    Reader e(r.child("embedding"), "embedding");
    e.get("tau1", m.embedding.tau1);
    e.get("bins", m.embedding.bins);
    e.get("padding", m.embedding.padding);
    e.get("min_extent", m.embedding.min_extent);
  }
  {
    Reader t(r.child("trajectory"), "trajectory");
    t.get("stride", m.trajectory.stride);
    t.get("switch_params", m.trajectory.switch_params);
    t.get("time_before", m.trajectory.time_before);
    t.get("settle_tolerance", m.trajectory.settle_tolerance);
  }
  {
    Reader s(r.child("sweep"), "sweep");
    s.get("parameter", m.sweep.parameter);
    s.get("lower", m.sweep.lower);
    s.get("upper", m.sweep.upper);
    s.get("points", m.sweep.points);
  }
  {
    Reader f(r.child("floor"), "floor");
    f.get("runs", m.floor.runs);
    f.get("perturbation", m.floor.perturbation);
    f.get("carry_over", m.floor.carry_over);
    f.get("histogram_bins", m.floor.histogram_bins);
  }
  {
    auto& c = m.campaign;
    Reader cr(r.child("campaign"), "campaign");
    const YAML::Node axes = cr.child("controlled");
    if (axes && !axes.IsNull()) {
      if (!axes.IsSequence()) throw ConfigError("'campaign.controlled' must be a list");
      c.controlled.clear();
      for (std::size_t i = 0; i < axes.size(); ++i) {
        Reader a(axes[i], fmt::format("campaign.controlled[{}]", i));
        ParamAxis axis;
        a.get("name", axis.name);
        a.get("lower", axis.lower);
        a.get("upper", axis.upper);
        c.controlled.push_back(axis);
      }
    }
    cr.get("hidden", c.hidden);
    cr.get("n_prior", c.n_prior);
    cr.get("n_iterations", c.n_iterations);
    cr.get("xi", c.xi);
    cr.get("nu", c.nu);
    cr.get("restarts", c.restarts);
    cr.get("candidates", c.candidates);
    cr.get("refine", c.refine);
    cr.get("emd_floor", c.emd_floor);
    cr.get("stop_stddev", c.stop_stddev);
    cr.get("curve_points", c.curve_points);
    cr.get("true_points", c.true_points);
    cr.get("grid", c.grid);
    cr.get("floor_runs", c.floor_runs);
    cr.get("floor_perturbation", c.floor_perturbation);
  }
  {
    Reader s(r.child("signal"), "signal");
    s.get("components", m.signal.components);
    s.get("segment_length", m.signal.segment_length);
    s.get("overlap", m.signal.overlap);
    s.get("f_max", m.signal.f_max);
    s.get("peak_separation", m.signal.peak_separation);
    s.get("window", m.signal.window);
  }
  {
    Reader s(r.child("smi"), "smi");
    s.get("source", m.smi.source);
    s.get("target", m.smi.target);
    s.get("max_dim", m.smi.max_dim);
    s.get("tau_min", m.smi.tau_min);
    s.get("tau_max", m.smi.tau_max);
    s.get("tau_step", m.smi.tau_step);
    s.get("neighbors", m.smi.neighbors);
    s.get("reconstruction_rows", m.smi.reconstruction_rows);
  }
}

Manifest manifest_from_node(const YAML::Node& node) {
  if (!node || !node.IsMap()) throw ConfigError("manifest must be a mapping");
  Manifest m;
  read_manifest(node["manifest"] ? node["manifest"] : node, m);
  return m;
}

YAML::Node load_yaml(std::string_view text) {
  try {
    return YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("manifest is not valid YAML: {}", e.what()));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Manifest parse_manifest(std::string_view text) { return manifest_from_node(load_yaml(text)); }

std::vector<Manifest> load_manifests(const std::filesystem::path& path) {
  const YAML::Node root = load_yaml(read_file(path));
  std::vector<Manifest> out;
  if (root.IsMap() && root["experiments"]) {
    const YAML::Node list = root["experiments"];
    if (!list.IsSequence()) throw ConfigError("'experiments' must be a list");
    if (root.size() != 1) throw ConfigError("a manifest list holds only 'experiments'");
    for (const auto& item : list) out.push_back(manifest_from_node(item));
    std::set<std::string> names;
    for (const auto& m : out)
      if (!names.insert(m.name).second) throw ConfigError(fmt::format("duplicate experiment name '{}'", m.name));
  } else {
    out.push_back(manifest_from_node(root));
  }
  return out;
}

// ------------------------------------------------------------ validation

std::vector<std::string> validate(const Manifest& m) {
  std::vector<std::string> errors;
  auto err = [&]<typename... Args>(fmt::format_string<Args...> f, Args&&... args) {
    errors.push_back(fmt::format(f, std::forward<Args>(args)...));
  };

  if (m.name.empty() || m.name.find_first_of("/\\") != std::string::npos || m.name.starts_with("."))
    err("'name' must be a plain file name");

  try {
    m.plant.validate();
  } catch (const std::exception& e) {
    err("plant: {}", e.what());
  }
  const double dt = m.plant.dt;
  const bool dt_ok = dt > 0.0 && std::isfinite(dt);
  if (!(m.embedding.tau1 > 0.0)) {
    err("'embedding.tau1' must be > 0");
  } else if (dt_ok && !is_lag_multiple(m.embedding.tau1, dt)) {
    err("'embedding.tau1' = {} is not a multiple of plant.dt = {}", m.embedding.tau1, dt);
  } else if (dt_ok && std::llround(m.embedding.tau1 / dt) >= static_cast<long long>(m.plant.n_keep)) {
    err("'embedding.tau1' spans more than plant.n_keep samples");
  }
  if (m.embedding.bins < 1) err("'embedding.bins' must be >= 1");
  if (!(m.embedding.padding >= 0.0)) err("'embedding.padding' must be >= 0");

  for (const auto& fig : m.figures) {
    const FigureInfo* info = find_figure(fig);
    if (!info) {
      err("'figures' names unknown figure '{}'", fig);
    } else if (info->kind != m.kind) {
      err("figure '{}' is produced by kind '{}', not '{}'", fig, kind_name(info->kind), kind_name(m.kind));
    }
  }

  auto check_params = [&](const std::map<std::string, double>& params, const std::string& field) {
    for (const auto& [k, v] : params) {
      if (!is_param_name(k)) err("'{}' names unknown parameter '{}'", field, k);
      if (!(v > 0.0) || !std::isfinite(v)) err("'{}.{}' must be positive", field, k);
    }
  };

  switch (m.kind) {
    case ExperimentKind::Trajectory:
      if (m.trajectory.stride < 1) err("'trajectory.stride' must be >= 1");
      check_params(m.trajectory.switch_params, "trajectory.switch_params");
      if (!(m.trajectory.time_before >= 0.0)) err("'trajectory.time_before' must be >= 0");
      if (!(m.trajectory.settle_tolerance > 0.0)) err("'trajectory.settle_tolerance' must be > 0");
      break;
    case ExperimentKind::Sweep:
      if (!is_param_name(m.sweep.parameter)) err("'sweep.parameter' names unknown parameter '{}'", m.sweep.parameter);
      if (!(m.sweep.lower > 0.0) || !(m.sweep.upper > m.sweep.lower))
        err("'sweep' bounds must satisfy 0 < lower < upper");
      if (m.sweep.points < 2) err("'sweep.points' must be >= 2");
      break;
    case ExperimentKind::Floor:
      if (m.floor.runs < 2) err("'floor.runs' must be >= 2");
      if (!(m.floor.perturbation >= 0.0)) err("'floor.perturbation' must be >= 0");
      if (m.floor.histogram_bins < 1) err("'floor.histogram_bins' must be >= 1");
      break;
    case ExperimentKind::Campaign1d:
    case ExperimentKind::Campaign2d:
    case ExperimentKind::CampaignRobust: {
      const auto& c = m.campaign;
      const std::size_t want = m.kind == ExperimentKind::Campaign1d ? 1 : 2;
      if (c.controlled.size() != want)
        err("'campaign.controlled' must list {} parameter(s) for kind '{}'", want, kind_name(m.kind));
      std::set<std::string> names;
      for (const auto& a : c.controlled) {
        if (!is_param_name(a.name)) err("'campaign.controlled' names unknown parameter '{}'", a.name);
        if (!names.insert(a.name).second) err("'campaign.controlled' repeats '{}'", a.name);
        if (!(a.lower > 0.0) || !(a.upper > a.lower))
          err("'campaign.controlled.{}' bounds must satisfy 0 < lower < upper", a.name);
        if (c.hidden.contains(a.name))
          err("'{}' is both controlled and in 'campaign.hidden'", a.name);
      }
      check_params(c.hidden, "campaign.hidden");
      if (m.kind == ExperimentKind::CampaignRobust && c.hidden.empty())
        err("kind 'campaign-robust' needs at least one 'campaign.hidden' override");
      if (c.n_prior < 2) err("'campaign.n_prior' must be >= 2");
      if (!(c.xi >= 0.0)) err("'campaign.xi' must be >= 0");
      if (c.nu != 0.5 && c.nu != 1.5 && c.nu != 2.5) err("'campaign.nu' must be 0.5, 1.5 or 2.5");
      if (c.candidates < 1) err("'campaign.candidates' must be >= 1");
      if (!(c.emd_floor > 0.0)) err("'campaign.emd_floor' must be > 0");
      if (c.curve_points < 2) err("'campaign.curve_points' must be >= 2");
      if (c.true_points == 1) err("'campaign.true_points' must be 0 or >= 2");
      if (c.grid == 1) err("'campaign.grid' must be 0 or >= 2");
      if (c.floor_runs == 1) err("'campaign.floor_runs' must be 0 or >= 2");
      if (want == 1 && (c.grid || c.floor_runs)) err("'campaign.grid' and 'floor_runs' apply to 2D kinds only");
      if (want == 2 && c.true_points) err("'campaign.true_points' applies to kind 'campaign-1d' only");
      for (const auto& fig : m.panels()) {
        if (fig.starts_with("fig7") && fig.size() == 5) {
          const std::size_t k = static_cast<std::size_t>(fig[4] - 'a');
          if (k > c.n_iterations) err("figure '{}' needs campaign.n_iterations >= {}", fig, k);
        }
        if (fig.starts_with("fig8") && c.controlled.size() == 1) {
          const std::string want_param = fig == "fig8a" ? "sigma" : fig == "fig8b" ? "rho" : "beta";
          if (c.controlled[0].name != want_param)
            err("figure '{}' needs '{}' as the controlled parameter", fig, want_param);
        }
        if (fig.ends_with("_grid") && c.grid == 0) err("figure '{}' needs campaign.grid > 0", fig);
      }
      break;
    }
    case ExperimentKind::Psd:
    case ExperimentKind::Phase:
      if (m.signal.components.empty()) err("'signal.components' must not be empty");
      for (const auto& comp : m.signal.components)
        if (!kComponents.contains(comp)) err("'signal.components' has unknown component '{}'", comp);
      if (m.kind == ExperimentKind::Psd) {
        if (m.signal.segment_length < 2) err("'signal.segment_length' must be >= 2");
        if (m.signal.segment_length > m.plant.n_keep)
          err("'signal.segment_length' exceeds plant.n_keep");
        if (m.signal.overlap >= m.signal.segment_length) err("'signal.overlap' must be < segment_length");
        if (!(m.signal.f_max > 0.0)) err("'signal.f_max' must be > 0");
      } else if (!(m.signal.window > 0.0)) {
        err("'signal.window' must be > 0");
      }
      break;
    case ExperimentKind::SmiScan:
      if (!kComponents.contains(m.smi.source)) err("'smi.source' has unknown component '{}'", m.smi.source);
      if (!kComponents.contains(m.smi.target)) err("'smi.target' has unknown component '{}'", m.smi.target);
      if (m.smi.max_dim < 2 || m.smi.max_dim > 4) err("'smi.max_dim' must be in [2, 4]");
      if (!(m.smi.tau_min > 0.0) || !(m.smi.tau_max >= m.smi.tau_min) || !(m.smi.tau_step > 0.0)) {
        err("'smi' lag range must satisfy 0 < tau_min <= tau_max and tau_step > 0");
      } else if (dt_ok) {
        if (!is_lag_multiple(m.smi.tau_min, dt)) err("'smi.tau_min' = {} is not a multiple of plant.dt", m.smi.tau_min);
        if (!is_lag_multiple(m.smi.tau_max, dt)) err("'smi.tau_max' = {} is not a multiple of plant.dt", m.smi.tau_max);
        if (!is_lag_multiple(m.smi.tau_step, dt)) err("'smi.tau_step' = {} is not a multiple of plant.dt", m.smi.tau_step);
      }
      break;
  }
  return errors;
}

std::vector<std::string> validate_file(const std::filesystem::path& path) {
  std::vector<Manifest> manifests;
  try {
    manifests = load_manifests(path);
  } catch (const std::exception& e) {
    return {e.what()};
  }
  std::vector<std::string> errors;
  for (const auto& m : manifests) {
    for (auto& e : validate(m)) errors.push_back(manifests.size() > 1 ? m.name + ": " + e : e);
  }
  return errors;
}

// ---------------------------------------------------------------- tables

void Table::add(std::vector<Cell> row) {
  if (row.size() != columns.size()) throw std::logic_error("table row width mismatch");
  rows.push_back(std::move(row));
}

std::string Table::csv() const {
  std::string out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) out += ',';
    out += columns[c];
  }
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) {
              out += fmt::format("{:.17g}", v);
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
              out += fmt::format("{}", v);
            } else {
              out += v;
            }
          },
          row[c]);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------- timing

Timing loop_timing(const PlantRunSpec& plant, const Trajectory& reference) {
  Timing t;
  t.actuation_interval = static_cast<double>(plant.n_discard + plant.n_keep) * plant.dt;
  const std::vector<double> z = reference.component('z');
  const std::size_t seg = std::min(z.size(), std::max<std::size_t>(1024, z.size() / 10));
  const PowerSpectrum psd = welch_psd(z, reference.dt, seg);
  const auto peaks = find_peaks(psd, psd.df(), psd.frequencies.back());
  if (!peaks.empty()) {
    t.plant_frequency = peaks.front().frequency;
    t.plant_period = 1.0 / t.plant_frequency;
    t.ratio = t.actuation_interval / t.plant_period;
  }
  return t;
}

// -------------------------------------------------------------- running

namespace {

using Summary = Table;

Summary make_summary() { return Table{{"quantity", "value"}, {}}; }
void put(Summary& s, const std::string& key, Cell v) { s.add({key, std::move(v)}); }
Cell count(std::size_t n) { return static_cast<std::int64_t>(n); }

bool wants(const Manifest& m, std::string_view fig) {
  const auto p = m.panels();
  return std::find(p.begin(), p.end(), fig) != p.end();
}

// Trajectory

void run_trajectory(const Manifest& m, RunOutput& out) {
  const LorenzPlant plant;
  const auto& ts = m.trajectory;
  Trajectory traj;
  std::vector<double> times;
  std::optional<std::size_t> switch_index;
  if (ts.switch_params.empty()) {
    traj = plant.run(m.plant);
    for (std::size_t k = 0; k < traj.size(); ++k) times.push_back(traj.time(k));
  } else {
    PlantRunSpec before = m.plant;
    before.n_keep = static_cast<std::size_t>(std::llround(ts.time_before / m.plant.dt));
    PlantRunSpec after = m.plant;
    after.n_discard = 0;
    for (const auto& [k, v] : ts.switch_params) after.params.set(k, v);
    if (before.n_keep > 0) {
      traj = plant.run(before);
      after.initial = traj.back();
    } else {
      after.initial = plant.run([&] {
        PlantRunSpec s = before;
        s.n_keep = 1;
        return s;
      }()).back();
    }
    const Trajectory tail = plant.run(after);
    const auto nb = static_cast<double>(traj.size());
    for (std::size_t k = 0; k < traj.size(); ++k)
      times.push_back((static_cast<double>(k) + 1.0 - nb) * m.plant.dt);
    switch_index = traj.size();
    for (std::size_t k = 0; k < tail.size(); ++k) times.push_back(static_cast<double>(k + 1) * m.plant.dt);
    traj.samples.insert(traj.samples.end(), tail.samples.begin(), tail.samples.end());
    traj.dt = m.plant.dt;
  }

  out.results = Table{{"component", "mean", "stddev", "min", "max"}, {}};
  for (char c : {'x', 'y', 'z'}) {
    const auto s = traj.component(c);
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    out.results.add({std::string(1, c), mean, std::sqrt(var / static_cast<double>(s.size())), *lo, *hi});
  }

  out.summary = make_summary();
  put(out.summary, "samples", count(traj.size()));
  if (switch_index) {
    // Commitment: last lobe change of x; settling: distance to the final
    // state stays within the tolerance afterwards.
    const State fin = traj.back();
    const double scale = std::sqrt(fin.x * fin.x + fin.y * fin.y + fin.z * fin.z);
    double commit = 0.0, settle = 0.0;
    for (std::size_t k = *switch_index + 1; k < traj.size(); ++k)
      if ((traj.samples[k].x > 0.0) != (traj.samples[k - 1].x > 0.0)) commit = times[k];
    for (std::size_t k = traj.size(); k-- > *switch_index;) {
      const auto& s = traj.samples[k];
      const double d = std::sqrt((s.x - fin.x) * (s.x - fin.x) + (s.y - fin.y) * (s.y - fin.y) +
                                 (s.z - fin.z) * (s.z - fin.z));
      if (d > ts.settle_tolerance * scale) {
        settle = times[k];
        break;
      }
    }
    put(out.summary, "commit_time", commit);
    put(out.summary, "settle_time", settle);
    put(out.summary, "final_x", fin.x);
    put(out.summary, "final_y", fin.y);
    put(out.summary, "final_z", fin.z);
  }

  if (wants(m, "fig2")) {
    Table t{{"t", "x", "y", "z"}, {}};
    for (std::size_t k = 0; k < traj.size(); k += ts.stride)
      t.add({times[k], traj.samples[k].x, traj.samples[k].y, traj.samples[k].z});
    out.panels["fig2"] = std::move(t);
  }
  if (wants(m, "fig4a") || wants(m, "fig4b")) {
    // The embedding uses the post-switch (or whole) retained record.
    const std::size_t first = switch_index.value_or(0);
    std::vector<double> x;
    for (std::size_t k = first; k < traj.size(); ++k) x.push_back(traj.samples[k].x);
    const double lags[] = {m.embedding.tau1};
    const DelayVectorSet pts = embed(x, lags, m.plant.dt);
    if (wants(m, "fig4a")) {
      Table t{{"x_t", "x_t_plus_tau1"}, {}};
      for (std::size_t i = 0; i < pts.size(); i += ts.stride) t.add({pts.point(i)[0], pts.point(i)[1]});
      out.panels["fig4a"] = std::move(t);
    }
    if (wants(m, "fig4b")) {
      const GridSpec grid = shared_grid(pts, m.embedding.bins, m.embedding.padding, m.embedding.min_extent);
      const BinnedPdf pdf = bin(pts, grid);
      Table t{{"x_center", "x_lag_center", "count"}, {}};
      for (std::size_t i = 0; i < grid.axes[0].bins; ++i)
        for (std::size_t j = 0; j < grid.axes[1].bins; ++j)
          t.add({grid.axes[0].center(i), grid.axes[1].center(j), pdf.at(i, j)});
      out.panels["fig4b"] = std::move(t);
      put(out.summary, "tlpp_mass", pdf.total_mass);
    }
  }
}

// Sweep

void run_sweep(const Manifest& m, RunOutput& out) {
  const CampaignConfig config = m.campaign_config();
  const Reference ref = build_reference(config);
  out.timing = loop_timing(m.plant, ref.trajectory);
  const auto values = linspace(m.sweep.lower, m.sweep.upper, m.sweep.points);
  const auto sweep = parameter_sweep(config, ref, m.sweep.parameter, values);

  out.results = Table{{m.sweep.parameter, "emd", "log10_emd"}, {}};
  for (const auto& p : sweep) out.results.add({p.value, p.emd, objective_from_emd(p.emd)});
  if (wants(m, "fig5a")) out.panels["fig5a"] = out.results;

  std::vector<std::size_t> order(sweep.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sweep[a].emd < sweep[b].emd; });
  const std::size_t decile = std::max<std::size_t>(1, sweep.size() / 10);
  double lo = sweep[order[0]].value, hi = lo;
  for (std::size_t i = 0; i < decile; ++i) {
    lo = std::min(lo, sweep[order[i]].value);
    hi = std::max(hi, sweep[order[i]].value);
  }
  out.summary = make_summary();
  put(out.summary, "argmin", sweep[order[0]].value);
  put(out.summary, "min_emd", sweep[order[0]].emd);
  put(out.summary, "min_decile_lower", lo);
  put(out.summary, "min_decile_upper", hi);
}

// Floor

void run_floor(const Manifest& m, RunOutput& out) {
  CampaignConfig config = m.campaign_config();
  config.seed = derive_seed(m.seed, "floor");
  const Reference ref = build_reference(config);
  out.timing = loop_timing(m.plant, ref.trajectory);
  const ConfidenceFloor fl = confidence_floor(config, ref, m.floor.runs, m.floor.perturbation, m.floor.carry_over);

  out.results = Table{{"run", "emd"}, {}};
  for (std::size_t i = 0; i < fl.samples.size(); ++i) out.results.add({count(i), fl.samples[i]});

  out.summary = make_summary();
  put(out.summary, "runs", count(fl.samples.size()));
  put(out.summary, "mean", fl.mean);
  put(out.summary, "stddev", fl.stddev);
  put(out.summary, "cv", fl.mean > 0.0 ? fl.stddev / fl.mean : 0.0);
  put(out.summary, "floor", fl.floor);
  put(out.summary, "log10_floor", fl.log10_floor());
  const auto thr = similarity_thresholds(fl);
  put(out.summary, "threshold_tight", thr.tight);
  put(out.summary, "threshold_loose", thr.loose);

  if (wants(m, "fig6")) {
    const auto [lo_it, hi_it] = std::minmax_element(fl.samples.begin(), fl.samples.end());
    const std::size_t nb = m.floor.histogram_bins;
    const double lo = *lo_it, width = (*hi_it > lo ? *hi_it - lo : 1.0) / static_cast<double>(nb);
    std::vector<std::size_t> counts(nb, 0);
    for (double v : fl.samples)
      ++counts[std::min(nb - 1, static_cast<std::size_t>((v - lo) / width))];
    Table t{{"bin_lower", "bin_upper", "count", "gaussian"}, {}};
    for (std::size_t b = 0; b < nb; ++b) {
      const double a = lo + width * static_cast<double>(b), c = a + width;
      double expected = 0.0;
      if (fl.stddev > 0.0) {
        const double s = fl.stddev * std::sqrt(2.0);
        expected = static_cast<double>(fl.samples.size()) * 0.5 *
                   (std::erf((c - fl.mean) / s) - std::erf((a - fl.mean) / s));
      }
      t.add({a, c, count(counts[b]), expected});
    }
    out.panels["fig6"] = std::move(t);
  }
}

// Campaigns

Table history_table(const CampaignResult& r, const ParamSpace& space) {
  Table t{{"iteration", "source"}, {}};
  for (const auto& a : space.axes) t.columns.push_back(a.name);
  for (const char* c : {"emd", "objective", "failed"}) t.columns.emplace_back(c);
  for (const auto& h : r.history) {
    std::vector<Cell> row{count(h.index),
                          std::string(h.source == SuggestionSource::Prior ? "prior" : "acquisition")};
    for (double p : h.params) row.emplace_back(p);
    row.emplace_back(h.emd);
    row.emplace_back(h.objective);
    row.emplace_back(count(h.failed ? 1 : 0));
    t.add(std::move(row));
  }
  return t;
}

void put_campaign_summary(Summary& s, const CampaignResult& r, const ParamSpace& space) {
  for (std::size_t d = 0; d < space.dim(); ++d) put(s, "best_guess_" + space.axes[d].name, r.best_guess[d]);
  for (std::size_t d = 0; d < space.dim(); ++d)
    put(s, "best_observed_" + space.axes[d].name, r.best_observed.params[d]);
  put(s, "best_observed_objective", r.best_observed.objective);
  put(s, "best_observed_emd", std::pow(10.0, r.best_observed.objective));
  put(s, "actuations", count(r.actuations));
  put(s, "failed_runs",
      count(static_cast<std::size_t>(std::count_if(r.history.begin(), r.history.end(),
                                                   [](const auto& h) { return h.failed; }))));
  const auto& hp = r.final_model().hyperparameters();
  for (std::size_t d = 0; d < hp.length_scales.size(); ++d)
    put(s, "length_scale_" + space.axes[d].name, hp.length_scales[d]);
  put(s, "signal_variance", hp.signal_variance);
  put(s, "noise_variance", hp.noise_variance);
}

void run_campaign_1d(const Manifest& m, RunOutput& out) {
  const CampaignConfig config = m.campaign_config();
  const CampaignResult r = run_campaign(config);
  out.timing = loop_timing(m.plant, r.reference.trajectory);
  const ParamAxis& axis = config.controlled.axes[0];
  out.results = history_table(r, config.controlled);
  out.summary = make_summary();
  put_campaign_summary(out.summary, r, config.controlled);

  const auto xs = linspace(axis.lower, axis.upper, m.campaign.curve_points);
  std::optional<GpModel> truth;
  if (m.campaign.true_points) {
    const auto values = linspace(axis.lower, axis.upper, m.campaign.true_points);
    const auto sweep = parameter_sweep(config, r.reference, axis.name, values);
    std::vector<Observation> obs;
    for (const auto& p : sweep) obs.push_back({{p.value}, objective_from_emd(p.emd, config.emd_floor)});
    GpConfig gp = config.gp;
    gp.seed = derive_seed(config.seed, "true-gp");
    truth = fit(obs, config.controlled, gp);
    const auto tmin = model_minimum(*truth, config.controlled, derive_seed(config.seed, "true-minimum"));
    put(out.summary, "true_minimum_" + axis.name, tmin[0]);
  }

  auto curve = [&](const GpModel& model, bool with_ei) {
    Table t{{axis.name, "mean", "stddev"}, {}};
    if (with_ei) t.columns.emplace_back("ei");
    if (truth) t.columns.emplace_back("true_mean");
    for (double x : xs) {
      const double q[] = {x};
      const Prediction p = model.predict(q);
      std::vector<Cell> row{x, p.mean, p.stddev};
      if (with_ei) row.emplace_back(expected_improvement(model, q, config.xi));
      if (truth) row.emplace_back(truth->predict(q).mean);
      t.add(std::move(row));
    }
    return t;
  };
  for (const auto& fig : m.panels()) {
    if (fig.starts_with("fig7")) {
      const std::size_t k = static_cast<std::size_t>(fig[4] - 'a');
      // Early stopping may leave fewer models than requested panels.
      if (k < r.models.size()) out.panels[fig] = curve(r.models[k], k + 1 < r.models.size());
    } else if (fig.starts_with("fig8")) {
      out.panels[fig] = curve(r.final_model(), false);
    }
  }
}

void run_campaign_2d(const Manifest& m, RunOutput& out) {
  const CampaignConfig config = m.campaign_config();
  const CampaignResult r = run_campaign(config);
  out.timing = loop_timing(m.plant, r.reference.trajectory);
  const ParamSpace& space = config.controlled;
  out.results = history_table(r, space);
  out.summary = make_summary();
  put_campaign_summary(out.summary, r, space);

  const std::string fig = m.kind == ExperimentKind::Campaign2d ? "fig9" : "fig10";
  if (wants(m, fig)) {
    const auto xs = linspace(space.axes[0].lower, space.axes[0].upper, m.campaign.curve_points);
    const auto ys = linspace(space.axes[1].lower, space.axes[1].upper, m.campaign.curve_points);
    Table t{{space.axes[0].name, space.axes[1].name, "mean", "stddev"}, {}};
    for (double x : xs) {
      for (double y : ys) {
        const double q[] = {x, y};
        const Prediction p = r.final_model().predict(q);
        t.add({x, y, p.mean, p.stddev});
      }
    }
    out.panels[fig] = std::move(t);
  }

  std::optional<ConfidenceFloor> fl;
  if (m.campaign.floor_runs) {
    CampaignConfig fc = config;
    fc.seed = derive_seed(m.seed, "floor");
    fl = confidence_floor(fc, r.reference, m.campaign.floor_runs, m.campaign.floor_perturbation);
    const auto thr = similarity_thresholds(*fl);
    put(out.summary, "floor_mean", fl->mean);
    put(out.summary, "floor_stddev", fl->stddev);
    put(out.summary, "log10_floor", fl->log10_floor());
    put(out.summary, "threshold_tight", thr.tight);
    put(out.summary, "threshold_loose", thr.loose);
  }
  if (m.campaign.grid) {
    const GridScan scan = grid_scan(config, r.reference, m.campaign.grid, m.campaign.grid);
    put(out.summary, "grid_min_emd", scan.min());
    put(out.summary, "best_observed_to_grid_min",
        std::pow(10.0, r.best_observed.objective) / scan.min());
    Table t{{space.axes[0].name, space.axes[1].name, "emd", "log10_emd"}, {}};
    for (std::size_t i = 0; i < scan.xs.size(); ++i)
      for (std::size_t j = 0; j < scan.ys.size(); ++j)
        t.add({scan.xs[i], scan.ys[j], scan.at(i, j), objective_from_emd(scan.at(i, j))});
    if (wants(m, fig + "_grid")) out.panels[fig + "_grid"] = std::move(t);
    if (fl) {
      const std::vector<double> anchor{config.reference.get(space.axes[0].name),
                                       config.reference.get(space.axes[1].name)};
      const auto thr = similarity_thresholds(*fl);
      const auto tight = similarity_region(scan, thr.tight, anchor);
      const auto loose = similarity_region(scan, thr.loose, anchor);
      put(out.summary, "best_guess_in_tight_region", count(region_contains(scan, tight, r.best_guess)));
      put(out.summary, "best_guess_in_loose_region", count(region_contains(scan, loose, r.best_guess)));
    }
  }
}

// Signals

void run_psd(const Manifest& m, RunOutput& out) {
  const Trajectory traj = LorenzPlant().run(m.plant);
  const auto& s = m.signal;
  out.results = Table{{"component", "rank", "frequency", "power", "prominence"}, {}};
  out.summary = make_summary();
  std::vector<PowerSpectrum> spectra;
  for (const auto& comp : s.components) {
    const auto sig = component_signal(traj, comp);
    spectra.push_back(welch_psd(sig, m.plant.dt, s.segment_length, s.overlap));
    const auto peaks = find_peaks(spectra.back(), spectra.back().df(), s.f_max, s.peak_separation);
    for (std::size_t i = 0; i < std::min<std::size_t>(5, peaks.size()); ++i)
      out.results.add({comp, count(i + 1), peaks[i].frequency, peaks[i].power, peaks[i].prominence});
    double best_prom = 0.0;
    for (const auto& p : peaks) best_prom = std::max(best_prom, p.prominence);
    if (!peaks.empty()) put(out.summary, comp + "_primary_peak", peaks[0].frequency);
    if (peaks.size() > 1) put(out.summary, comp + "_secondary_peak", peaks[1].frequency);
    put(out.summary, comp + "_max_prominence", best_prom);
    if (comp == "z" && !peaks.empty()) put(out.summary, "tau_heuristic", 0.25 / peaks[0].frequency);
  }
  if (wants(m, "fig11a")) {
    Table t{{"frequency"}, {}};
    for (const auto& comp : s.components) t.columns.push_back(comp);
    const auto& f = spectra.front().frequencies;
    for (std::size_t k = 0; k < f.size() && f[k] <= s.f_max; ++k) {
      std::vector<Cell> row{f[k]};
      for (const auto& sp : spectra) row.emplace_back(sp.power[k]);
      t.add(std::move(row));
    }
    out.panels["fig11a"] = std::move(t);
  }
}

void run_phase(const Manifest& m, RunOutput& out) {
  const Trajectory traj = LorenzPlant().run(m.plant);
  const auto x = traj.component('x');
  std::vector<double> ax(x.size());
  std::transform(x.begin(), x.end(), ax.begin(), [](double v) { return std::abs(v); });
  const auto phase = hilbert_phase(x);
  const auto phase_abs = hilbert_phase(ax);

  // On the positive lobe x and |x| share a phase; on the negative lobe they
  // are half a cycle apart.
  std::size_t agree = 0, transitions = 0;
  std::vector<double> diff(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    diff[k] = std::remainder(phase[k] - phase_abs[k], 2.0 * std::numbers::pi);
    if ((std::abs(diff[k]) > std::numbers::pi / 2) == (x[k] < 0.0)) ++agree;
    if (k && (x[k] > 0.0) != (x[k - 1] > 0.0)) ++transitions;
  }
  const auto rows = std::min(x.size(), static_cast<std::size_t>(std::llround(m.signal.window / m.plant.dt)));
  out.results = Table{{"t", "x", "phase", "phase_abs_x", "phase_difference"}, {}};
  for (std::size_t k = 0; k < rows; ++k) out.results.add({traj.time(k), x[k], phase[k], phase_abs[k], diff[k]});
  if (wants(m, "fig11b")) out.panels["fig11b"] = out.results;
  out.summary = make_summary();
  put(out.summary, "samples", count(x.size()));
  put(out.summary, "sign_changes", count(transitions));
  put(out.summary, "lobe_phase_agreement", static_cast<double>(agree) / static_cast<double>(x.size()));
}

void run_smi(const Manifest& m, RunOutput& out) {
  const Trajectory traj = LorenzPlant().run(m.plant);
  const auto src = component_signal(traj, m.smi.source);
  const auto tgt = component_signal(traj, m.smi.target);
  const auto grid = tau_grid(m.smi, m.plant.dt);
  SmiOptions opts;
  opts.n_neighbors = m.smi.neighbors;
  const auto levels = greedy_tau_scan(src, tgt, m.plant.dt, m.smi.max_dim, grid, opts);

  out.results = Table{{"dim", "lags", "best_tau", "pearson"}, {}};
  out.summary = make_summary();
  for (const auto& l : levels) {
    std::string lags;
    for (double v : l.fixed_lags) lags += fmt::format("{} ", v);
    lags += fmt::format("{}", l.best_tau);
    out.results.add({count(l.dim), lags, l.best_tau, l.best_pearson});
    put(out.summary, fmt::format("pearson_e{}", l.dim), l.best_pearson);
    put(out.summary, fmt::format("tau_e{}", l.dim), l.best_tau);
  }
  const auto z = traj.component('z');
  const std::size_t seg = std::min(m.signal.segment_length, z.size() / 4);
  if (seg >= 16) {
    const auto psd = welch_psd(z, m.plant.dt, seg);
    const auto peaks = find_peaks(psd, psd.df(), psd.frequencies.back());
    if (!peaks.empty()) put(out.summary, "tau_heuristic", 0.25 / peaks[0].frequency);
  }

  if (wants(m, "fig12a")) {
    Table t{{"dim", "tau", "pearson"}, {}};
    for (const auto& l : levels)
      for (std::size_t i = 0; i < l.taus.size(); ++i) t.add({count(l.dim), l.taus[i], l.pearson[i]});
    out.panels["fig12a"] = std::move(t);
  }
  if (wants(m, "fig12b")) {
    const double lag2[] = {levels.front().best_tau};
    std::vector<double> best_lags = levels.back().fixed_lags;
    best_lags.push_back(levels.back().best_tau);
    const auto r2 = smi_reconstruct(src, tgt, lag2, m.plant.dt, opts);
    const auto rb = smi_reconstruct(src, tgt, best_lags, m.plant.dt, opts);
    // Align both reconstructions on the later start time.
    const std::size_t offset = rb.times.front() - r2.times.front();
    Table t{{"t", "observed", "reconstructed_e2", fmt::format("reconstructed_e{}", levels.back().dim)}, {}};
    for (std::size_t i = 0; i < std::min(m.smi.reconstruction_rows, rb.times.size()); ++i)
      t.add({traj.time(rb.times[i]), rb.observed[i], r2.reconstruction[i + offset], rb.reconstruction[i]});
    out.panels["fig12b"] = std::move(t);
  }
}

}  // namespace

RunOutput execute(const Manifest& manifest) {
  const auto errors = validate(manifest);
  if (!errors.empty()) throw ConfigError(errors.front());
  const auto start = std::chrono::steady_clock::now();
  RunOutput out;
  switch (manifest.kind) {
    case ExperimentKind::Trajectory: run_trajectory(manifest, out); break;
    case ExperimentKind::Sweep: run_sweep(manifest, out); break;
    case ExperimentKind::Floor: run_floor(manifest, out); break;
    case ExperimentKind::Campaign1d: run_campaign_1d(manifest, out); break;
    case ExperimentKind::Campaign2d:
    case ExperimentKind::CampaignRobust: run_campaign_2d(manifest, out); break;
    case ExperimentKind::Psd: run_psd(manifest, out); break;
    case ExperimentKind::Phase: run_phase(manifest, out); break;
    case ExperimentKind::SmiScan: run_smi(manifest, out); break;
  }
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---------------------------------------------------------------- output

std::string metadata_yaml(const Manifest& m, const RunOutput& output) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << m.name;
  out << YAML::Key << "kind" << YAML::Value << std::string(kind_name(m.kind));
  out << YAML::Key << "seed" << YAML::Value << m.seed;
  out << YAML::Key << "config_hash" << YAML::Value << fmt::format("{:016x}", m.hash());
  out << YAML::Key << "version" << YAML::Value << std::string(library_version());
  out << YAML::Key << "libraries" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "boost" << YAML::Value
      << fmt::format("{}.{}.{}", BOOST_VERSION / 100000, BOOST_VERSION / 100 % 1000, BOOST_VERSION % 100);
  out << YAML::Key << "eigen" << YAML::Value
      << fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION);
  out << YAML::Key << "gsl" << YAML::Value << std::string(GSL_VERSION);
  out << YAML::Key << "fftw" << YAML::Value << std::string(fftw_version);
  out << YAML::Key << "fmt" << YAML::Value << FMT_VERSION;
  out << YAML::EndMap;
  out << YAML::Key << "wall_time_s" << YAML::Value << num(output.wall_time);
  out << YAML::Key << "outputs" << YAML::Value << YAML::BeginSeq << "results.csv" << "summary.csv";
  for (const auto& [fig, table] : output.panels) out << fig + ".csv";
  out << YAML::EndSeq;
  if (output.timing) {
    const Timing& t = *output.timing;
    out << YAML::Key << "timing" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "actuation_interval" << YAML::Value << num(t.actuation_interval);
    out << YAML::Key << "plant_frequency" << YAML::Value << num(t.plant_frequency);
    out << YAML::Key << "plant_period" << YAML::Value << num(t.plant_period);
    out << YAML::Key << "ratio" << YAML::Value << num(t.ratio);
    out << YAML::EndMap;
  }
  out << YAML::Key << "manifest" << YAML::Value;
  emit_snapshot(out, m);
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::filesystem::path write_outputs(const Manifest& manifest, const RunOutput& output,
                                    const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path target = out_dir / manifest.name;
  const fs::path staging = out_dir / ("." + manifest.name + ".staging");
  fs::remove_all(staging);
  fs::create_directories(staging);
  auto write = [&](const std::string& file, const std::string& text) {
    std::ofstream f(staging / file, std::ios::binary);
    f << text;
    if (!f) throw std::runtime_error(fmt::format("failed to write {}", (staging / file).string()));
  };
  try {
    write("results.csv", output.results.csv());
    write("summary.csv", output.summary.csv());
    for (const auto& [fig, table] : output.panels) write(fig + ".csv", table.csv());
    write("metadata.yaml", metadata_yaml(manifest, output));
    fs::remove_all(target);
    fs::rename(staging, target);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  return target;
}

}  // namespace ilc
