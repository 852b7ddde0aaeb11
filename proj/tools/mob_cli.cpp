// Copyright 2026 The mob Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment driver: run, sweep, dsic-check, inspect-data, report.

#include <unistd.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mob/auction.hpp"
#include "mob/data.hpp"
#include "mob/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kVerification = 3 };

struct CommonFlags {
  std::string config_path;
  std::string data_dir;
  std::string out;
  std::string eval_routing;
  bool full_data = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "Run configuration JSON");
  cmd->add_option("--data-dir", f.data_dir, "Directory with the MNIST IDX files (default $MOB_DATA_DIR)");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--eval-routing", f.eval_routing, "labelfree (default), labelfree_raw or oracle")
      ->check(CLI::IsMember({"labelfree", "labelfree_raw", "oracle"}));
  cmd->add_flag("--full-data", f.full_data, "Use every MNIST example instead of the desk-scale subsample");
}

mob::RunConfig resolve_config(const CommonFlags& f) {
  mob::RunConfig c = f.config_path.empty() ? mob::RunConfig{} : mob::load_run_config(f.config_path);
  if (!f.data_dir.empty()) c.data.data_dir = f.data_dir;
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.full_data) c.data.full_data = true;
  if (f.eval_routing == "oracle") c.eval_routing = mob::EvalRouting::oracle;
  if (f.eval_routing == "labelfree") c.eval_routing = mob::EvalRouting::label_free;
  if (f.eval_routing == "labelfree_raw") c.eval_routing = mob::EvalRouting::label_free_raw;
  return c;
}

mob::MnistData load_data(const mob::RunConfig& c) {
  const auto dir = mob::resolve_data_dir(c.data.data_dir.empty() ? std::nullopt
                                                                  : std::optional(c.data.data_dir));
  if (!dir)
    throw mob::DataError(
        "no MNIST directory given: pass --data-dir or set MOB_DATA_DIR to a directory containing "
        "train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte and "
        "t10k-labels-idx1-ubyte (optionally .gz)");
  return mob::load_mnist(*dir);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = std::stoull(text.substr(0, dots));
    const auto hi = std::stoull(text.substr(dots + 2));
    if (hi < lo) throw CLI::ValidationError("--seeds", "range end precedes start");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) seeds.push_back(std::stoull(item));
  return seeds;
}

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string hostname() {
  char buf[256] = {};
  if (gethostname(buf, sizeof buf - 1) != 0) return "unknown";
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Runs one cell and writes summary, step log and metadata files.
mob::RunSummary run_cell(const mob::RunConfig& config, const mob::TaskStream& stream) {
  fs::create_directories(config.output_dir);
  const fs::path dir(config.output_dir);
  const auto stem = mob::run_stem(config.method, config.mob.seed);
  const auto hash = mob::config_hash(config);

  std::ofstream steps(dir / (stem + ".steps.jsonl"), std::ios::binary);
  const auto started = now_utc();
  const auto t0 = std::chrono::steady_clock::now();
  const auto summary = mob::run_method(config, stream, [&](const mob::StepLog& log) {
    steps << mob::to_json(log, hash, config.mob.seed).dump() << '\n';
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_text(dir / (stem + ".summary.json"), mob::to_json(summary).dump(2) + "\n");
  json cfg = mob::to_json(config);
  cfg["config_hash"] = hash;
  write_text(dir / (stem + ".config.json"), cfg.dump(2) + "\n");
  json meta{{"config_hash", hash}, {"seed", config.mob.seed}, {"started_utc", started},
            {"hostname", hostname()}, {"wall_seconds", seconds}};
  write_text(dir / (stem + ".meta.json"), meta.dump(2) + "\n");
  return summary;
}

void print_summary(const mob::RunSummary& s) {
  std::cout << s.method << " seed " << s.seed << ": avg_accuracy=" << s.avg_accuracy;
  if (s.forgetting) std::cout << " forgetting=" << *s.forgetting;
  std::cout << " final=[";
  for (std::size_t k = 0; k < s.final_accuracies.size(); ++k)
    std::cout << (k ? ", " : "") << s.final_accuracies[k];
  std::cout << "]\n";
}

std::vector<mob::RunSummary> read_summaries(const fs::path& dir) {
  std::vector<mob::RunSummary> runs;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.size() > 13 && name.ends_with(".summary.json")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f);
    runs.push_back(mob::run_summary_from_json(json::parse(in)));
  }
  return runs;
}

int write_report(const fs::path& dir, const std::vector<mob::RunSummary>& runs) {
  if (runs.empty()) {
    std::cerr << "no summaries found in " << dir << "\n";
    return kData;
  }
  const auto report = mob::build_report(runs);
  write_text(dir / "report.md", report.markdown);
  write_text(dir / "report.csv", report.csv);
  std::cout << report.markdown;
  return kOk;
}

int cmd_inspect(const std::string& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path))
      if (e.path().filename().string().find("idx") != std::string::npos) files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    files.emplace_back(path);
  }
  if (files.empty()) {
    std::cerr << "no IDX files under " << path << "\n";
    return kData;
  }
  int status = kOk;
  for (const auto& f : files) {
    try {
      const auto idx = mob::read_idx(f);
      std::ostringstream dims;
      for (std::size_t k = 0; k < idx.dims.size(); ++k) dims << (k ? "," : "") << idx.dims[k];
      char magic[16];
      std::snprintf(magic, sizeof magic, "0x%08x", idx.magic);
      std::cout << f.filename().string() << ": magic=" << magic << " dims=[" << dims.str()
                << "] count=" << idx.count() << "\n";
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      status = kData;
    }
  }

  // Optional "<sha256>  <filename>" manifest next to the data.
  const fs::path dir = fs::is_directory(path) ? fs::path(path) : fs::path(path).parent_path();
  const fs::path manifest = dir / "SHA256SUMS";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    for (std::string line; std::getline(in, line);) {
      std::istringstream ls(line);
      std::string digest;
      std::string name;
      if (!(ls >> digest >> name)) continue;
      if (!name.empty() && name.front() == '*') name.erase(0, 1);
      if (!fs::is_directory(path) && fs::path(path).filename() != name) continue;
      const fs::path file = dir / name;
      if (!fs::exists(file)) {
        std::cerr << "checksum: missing " << name << "\n";
        status = kData;
        continue;
      }
      std::ifstream bin(file, std::ios::binary);
      std::string bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
      const bool ok = mob::sha256_hex(bytes) == digest;
      std::cout << "checksum " << name << ": " << (ok ? "OK" : "MISMATCH") << "\n";
      if (!ok) status = kData;
    }
  }
  return status;
}

int cmd_dsic(const std::vector<int>& experts, std::int64_t trials, std::uint64_t seed, bool grid) {
  if (trials == 0) std::cerr << "warning: 0 trials requested; the random check is vacuous\n";
  std::int64_t violations = 0;
  for (int n : experts) {
    mob::Rng rng(mob::derive_seed(seed, static_cast<std::uint64_t>(n)));
    const auto r = mob::check_dsic(n, trials, rng);
    std::cout << "dsic random N=" << n << " trials=" << r.trials << " violations=" << r.violations << "\n";
    violations += r.violations;
  }
  if (grid) {
    std::vector<double> values;
    for (int v = 0; v < 10; ++v) values.push_back(v);
    const auto r = mob::check_dsic_grid(2, values, seed);
    std::cout << "dsic grid N=2 costs={0..9} trials=" << r.trials << " violations=" << r.violations << "\n";
    violations += r.violations;
  }
  std::cout << (violations == 0 ? "DSIC: no profitable deviation found\n"
                                : "DSIC: VIOLATIONS FOUND\n");
  return violations == 0 ? kOk : kVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture of Bidders: auction-routed continual learning experiments"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  std::string run_method = "mob";
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "Train and evaluate one method on one seed");
  add_common(run, run_flags);
  run->add_option("--method", run_method, "mob, random, monolithic_ewc, gated_moe or naive")
      ->check(CLI::IsMember(mob::method_names()));
  run->add_option("--seed", run_seed, "Run seed (overrides the config)");

  CommonFlags sweep_flags;
  std::vector<std::string> sweep_methods = mob::method_names();
  std::string sweep_seeds = "0..4";
  auto* sweep = app.add_subcommand("sweep", "Run every (method, seed) pair and write a report");
  add_common(sweep, sweep_flags);
  sweep->add_option("--methods", sweep_methods, "Methods to run")->delimiter(',')
      ->check(CLI::IsMember(mob::method_names()));
  sweep->add_option("--seeds", sweep_seeds, "Seed range A..B or list a,b,c");

  std::vector<int> dsic_experts{2, 3, 4, 8};
  std::int64_t dsic_trials = 10000;
  std::uint64_t dsic_seed = 0;
  bool dsic_grid = true;
  auto* dsic = app.add_subcommand("dsic-check", "Verify that truthful bidding is a dominant strategy");
  dsic->add_option("--experts", dsic_experts, "Expert counts to test")->delimiter(',')
      ->check(CLI::Range(2, 1 << 16));
  dsic->add_option("--trials", dsic_trials, "Random trials per expert count")->check(CLI::NonNegativeNumber);
  dsic->add_option("--seed", dsic_seed, "Seed");
  dsic->add_flag("!--no-grid", dsic_grid, "Skip the exhaustive two-bidder grid");

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect-data", "Print IDX headers and verify checksums");
  inspect->add_option("path", inspect_path, "IDX file or directory")->required();

  std::string report_dir = "runs";
  auto* report = app.add_subcommand("report", "Aggregate existing summaries into report.md/report.csv");
  report->add_option("--out", report_dir, "Directory holding *.summary.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*run) {
      auto config = resolve_config(run_flags);
      config.method = run_method;
      if (run_seed) config.mob.seed = *run_seed;
      config.mob.validate();
      const auto data = load_data(config);
      const auto stream = mob::build_split_mnist(data, mob::split_options(config));
      print_summary(run_cell(config, stream));
      return kOk;
    }
    if (*sweep) {
      auto base = resolve_config(sweep_flags);
      base.mob.validate();
      const auto seeds = parse_seeds(sweep_seeds);
      const auto data = load_data(base);
      std::vector<mob::RunSummary> runs;
      int failures = 0;
      for (auto seed : seeds) {
        auto seeded = base;
        seeded.mob.seed = seed;
        const auto stream = mob::build_split_mnist(data, mob::split_options(seeded));
        for (const auto& method : sweep_methods) {
          auto cell = seeded;
          cell.method = method;
          try {
            runs.push_back(run_cell(cell, stream));
            print_summary(runs.back());
          } catch (const std::exception& e) {
            ++failures;
            std::cerr << "cell " << mob::run_stem(method, seed) << " failed: " << e.what() << "\n";
          }
        }
      }
      const int status = write_report(base.output_dir, runs);
      if (failures) std::cerr << failures << " cell(s) failed\n";
      return status != kOk ? status : (failures ? kVerification : kOk);
    }
    if (*dsic) return cmd_dsic(dsic_experts, dsic_trials, dsic_seed, dsic_grid);
    if (*inspect) return cmd_inspect(inspect_path);
    if (*report) return write_report(report_dir, read_summaries(report_dir));
  } catch (const mob::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const mob::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kOk;
}
