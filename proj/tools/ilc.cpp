#include <atomic>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ilc/experiment.hpp"
#include "ilc/parallel.hpp"

namespace {

void print_coverage() {
  fmt::print("{:<11} {:<16} {:<12} {}\n", "figure", "kind", "manifest", "content");
  for (const auto& f : ilc::coverage())
    fmt::print("{:<11} {:<16} {:<12} {}\n", f.id, ilc::kind_name(f.kind), f.manifest, f.content);
}

int run(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out_dir,
        unsigned jobs) {
  std::vector<ilc::Manifest> manifests;
  try {
    manifests = ilc::load_manifests(path);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  bool invalid = false;
  for (auto& m : manifests) {
    if (seed) m.seed = *seed;
    for (const auto& e : ilc::validate(m)) {
      fmt::print(stderr, "error: {}: {}\n", m.name, e);
      invalid = true;
    }
  }
  if (invalid) return 2;

  std::atomic<int> failures = 0;
  ilc::parallel_for(
      manifests.size(),
      [&](std::size_t i) {
        const auto& m = manifests[i];
        try {
          const auto output = ilc::execute(m);
          const auto dir = ilc::write_outputs(m, output, out_dir);
          fmt::print("{}: {} in {:.1f}s -> {}\n", m.name, ilc::kind_name(m.kind), output.wall_time,
                     dir.string());
        } catch (const std::exception& e) {
          fmt::print(stderr, "error: {}: {}\n", m.name, e.what());
          ++failures;
        }
      },
      jobs);
  return failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative learning control of the Lorenz system: experiment runner"};
  app.set_version_flag("--version", std::string(ilc::library_version()));
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "Run a manifest and write its tables");
  std::string manifest;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "results";
  bool list = false;
  unsigned jobs = 0;
  run_cmd->add_option("manifest", manifest, "Manifest or metadata.yaml from an earlier run");
  run_cmd->add_option("--seed", seed, "Override the manifest seed");
  run_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run_cmd->add_option("--jobs", jobs, "Experiments run concurrently (0 = all cores)");
  run_cmd->add_flag("--list", list, "Print the figure coverage matrix");

  auto* validate_cmd = app.add_subcommand("validate", "Check a manifest without running it");
  std::string to_check;
  validate_cmd->add_option("manifest", to_check, "Manifest file")->required();

  CLI11_PARSE(app, argc, argv);

  if (run_cmd->parsed()) {
    if (list) {
      print_coverage();
      return 0;
    }
    if (manifest.empty()) {
      fmt::print(stderr, "error: run needs a manifest (or --list)\n");
      return 2;
    }
    return run(manifest, seed, out_dir, jobs);
  }

  const auto errors = ilc::validate_file(to_check);
  if (errors.empty()) {
    fmt::print("ok\n");
    return 0;
  }
  for (const auto& e : errors) fmt::print("error: {}\n", e);
  return 1;
}
