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

// Common interface for every continual learner, evaluation, and the task loop.

#include <functional>
#include <string>
#include <vector>

#include "mob/data.hpp"
#include "mob/engine.hpp"
#include "mob/metrics.hpp"

namespace mob {

class Learner {
 public:
  virtual ~Learner() = default;

  /// Consume one stream batch. Never sees the task id.
  virtual StepLog train(const Examples& batch) = 0;
  /// The harness announces a task boundary.
  virtual std::vector<ConsolidationEvent> end_task() = 0;
  /// Class predictions for one evaluation batch. Labels are only read in oracle mode.
  virtual std::vector<int> predict(const Examples& batch, EvalRouting routing) const = 0;
  virtual int n_experts() const = 0;
  /// Hook for method-specific diagnostics after task `task` has been evaluated.
  virtual void after_task(std::size_t /*task*/, const TaskStream& /*stream*/,
                          RunSummary& /*summary*/) {}
};

/// MoB (auction routing) or Random Assignment (uniform routing) over the same agents.
class MobLearner : public Learner {
 public:
  MobLearner(const MobConfig& config, std::size_t input_dim, std::size_t num_classes,
             Routing routing = Routing::auction);

  StepLog train(const Examples& batch) override;
  std::vector<ConsolidationEvent> end_task() override;
  std::vector<int> predict(const Examples& batch, EvalRouting routing) const override;
  int n_experts() const override { return engine_.config().n_experts; }

  const MobEngine& engine() const { return engine_; }
  MobEngine& engine() { return engine_; }

 private:
  MobEngine engine_;
};

/// Per-task accuracy, predicting each task's eval set in chunks of `batch_size`.
std::vector<double> evaluate(const Learner& learner, const TaskStream& stream,
                             std::size_t batch_size, EvalRouting routing);

struct RunOptions {
  std::string method;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::size_t eval_batch_size = 32;
  EvalRouting eval_routing = EvalRouting::label_free;
  std::function<void(const StepLog&)> on_step;
};

/// Trains through every task, evaluating all tasks after each one.
RunSummary run_learner(Learner& learner, const TaskStream& stream, const RunOptions& options);

}  // namespace mob
