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

#pragma once

// Experiment configuration files, method dispatch and machine-readable outputs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "mob/baselines.hpp"
#include "mob/data.hpp"
#include "mob/harness.hpp"

namespace mob {

inline constexpr int kSchemaVersion = 1;

/// Every method name accepted by `run` and `sweep`, MoB first.
const std::vector<std::string>& method_names();

struct DataSettings {
  std::string data_dir;  // empty: fall back to $MOB_DATA_DIR
  std::size_t per_task_train = 2000;
  std::size_t per_task_eval = 500;
  std::size_t epochs_per_task = 1;
  bool full_data = false;
};

struct RunConfig {
  std::string method = "mob";
  MobConfig mob;
  DataSettings data;
  EvalRouting eval_routing = EvalRouting::label_free;
  GatedMoeOptions gated;
  std::string output_dir = "runs";
};

nlohmann::json to_json(const RunConfig& config);
/// Strict: unknown keys and a wrong schema_version are errors.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Hex SHA-256 of the canonical JSON of everything that affects results
/// (method, seed and all hyperparameters; not paths).
std::string config_hash(const RunConfig& config);

SplitMnistOptions split_options(const RunConfig& config);

/// Builds the learner for `config.method`.
std::unique_ptr<Learner> make_learner(const RunConfig& config, std::size_t input_dim,
                                      std::size_t num_classes);

/// Runs one (method, seed) cell on an already built stream.
RunSummary run_method(const RunConfig& config, const TaskStream& stream,
                      const std::function<void(const StepLog&)>& on_step = {});

nlohmann::json to_json(const RunSummary& summary);
RunSummary run_summary_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StepLog& log, const std::string& config_hash, std::uint64_t seed);

struct Report {
  std::vector<MethodAggregate> rows;  // sorted by mean avg_accuracy, best first
  std::string markdown;
  std::string csv;
};

/// Table of mean +- std per method, plus Welch tests against the best method.
Report build_report(const std::vector<RunSummary>& runs);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);

/// File stem `<method>-seed<seed>`.
std::string run_stem(const std::string& method, std::uint64_t seed);

}  // namespace mob
