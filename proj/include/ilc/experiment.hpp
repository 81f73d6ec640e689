#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ilc/controller.hpp"

namespace ilc {

enum class ExperimentKind {
  Trajectory,
  Sweep,
  Floor,
  Campaign1d,
  Campaign2d,
  CampaignRobust,
  Psd,
  Phase,
  SmiScan,
};

std::string_view kind_name(ExperimentKind kind);
std::optional<ExperimentKind> kind_from_name(std::string_view name);

/// One row of the coverage matrix: a figure panel and the kind producing it.
struct FigureInfo {
  std::string_view id;
  ExperimentKind kind;
  std::string_view manifest;  // file under manifests/
  std::string_view content;
};
std::span<const FigureInfo> coverage();
const FigureInfo* find_figure(std::string_view id);

struct TrajectorySettings {
  std::size_t stride = 1;  // output decimation
  /// Optional mid-run parameter change (t = 0 at the change).
  std::map<std::string, double> switch_params;
  double time_before = 20.0;
  double settle_tolerance = 0.1;  // relative distance to the final state
};

struct SweepSettings {
  std::string parameter = "rho";
  double lower = 15.0;
  double upper = 50.0;
  std::size_t points = 1000;
};

struct FloorSettings {
  std::size_t runs = 1000;
  double perturbation = 0.01;
  bool carry_over = false;
  std::size_t histogram_bins = 30;
};

struct CampaignSettings {
  std::vector<ParamAxis> controlled{{"rho", 15.0, 50.0}};
  std::map<std::string, double> hidden;
  std::size_t n_prior = 5;
  std::size_t n_iterations = 10;
  double xi = 0.1;
  double nu = 2.5;
  std::size_t restarts = 4;
  std::size_t candidates = 512;
  std::size_t refine = 8;
  double emd_floor = 1.0;
  std::optional<double> stop_stddev;
  std::size_t curve_points = 200;  // per axis
  std::size_t true_points = 0;     // 1D: dense sweep behind the "true" curve
  std::size_t grid = 0;            // 2D: dense grid oracle per axis
  std::size_t floor_runs = 0;      // 2D: Monte Carlo runs for similarity thresholds
  double floor_perturbation = 0.01;
};

struct SignalSettings {
  std::vector<std::string> components{"z", "x", "y", "abs_x", "abs_y"};
  std::size_t segment_length = 100000;
  std::size_t overlap = 0;
  double f_max = 5.0;
  double peak_separation = 0.1;
  double window = 30.0;  // phase: length of the emitted time window
};

struct SmiSettings {
  std::string source = "x";
  std::string target = "z";
  std::size_t max_dim = 4;
  double tau_min = 0.01;
  double tau_max = 0.5;
  double tau_step = 0.01;
  std::size_t neighbors = 0;
  std::size_t reconstruction_rows = 2000;
};

/// A fully resolved experiment description. Every field has a default, so a
/// manifest only needs `kind`; the snapshot written next to the results
/// lists every value actually used.
struct Manifest {
  std::string name;
  ExperimentKind kind = ExperimentKind::Trajectory;
  std::vector<std::string> figures;  // empty -> every figure of the kind
  std::uint64_t seed = 0;
  PlantRunSpec plant;
  EmbeddingConfig embedding;
  TrajectorySettings trajectory;
  SweepSettings sweep;
  FloorSettings floor;
  CampaignSettings campaign;
  SignalSettings signal;
  SmiSettings smi;

  std::vector<std::string> panels() const;
  std::string snapshot() const;  // canonical YAML
  std::uint64_t hash() const;    // FNV-1a of snapshot()
  CampaignConfig campaign_config() const;
};

/// Parses one manifest, or a metadata record carrying one under `manifest`.
/// Throws ConfigError on syntax or type errors.
Manifest parse_manifest(std::string_view text);
/// A file holds either a single manifest or `experiments: [...]`.
std::vector<Manifest> load_manifests(const std::filesystem::path& path);

/// Semantic checks; never throws.
std::vector<std::string> validate(const Manifest& manifest);
/// Parse plus validate, with every problem reported as data.
std::vector<std::string> validate_file(const std::filesystem::path& path);

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row);
  std::string csv() const;
};

struct Timing {
  double actuation_interval = 0.0;  // simulated time per loop iteration
  double plant_frequency = 0.0;     // dominant PSD peak of reference z(t)
  double plant_period = 0.0;
  double ratio = 0.0;
};

struct RunOutput {
  Table results;
  Table summary;                        // quantity,value
  std::map<std::string, Table> panels;  // figure id -> plot data
  std::optional<Timing> timing;
  double wall_time = 0.0;
};

/// Runs the experiment entirely in memory.
RunOutput execute(const Manifest& manifest);

/// Writes results.csv, summary.csv, one CSV per panel and metadata.yaml into
/// out_dir/<name>. Files are staged and moved into place together.
std::filesystem::path write_outputs(const Manifest& manifest, const RunOutput& output,
                                    const std::filesystem::path& out_dir);

std::string metadata_yaml(const Manifest& manifest, const RunOutput& output);

Timing loop_timing(const PlantRunSpec& plant, const Trajectory& reference);

std::string_view library_version();

}  // namespace ilc
