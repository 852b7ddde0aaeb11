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

// The comparison systems: naive fine-tuning, monolithic EWC, random
// assignment and a gated mixture of experts. They reuse the MoB agents and
// training step so that only the routing differs.

#include <optional>
#include <string>
#include <vector>

#include "mob/harness.hpp"

namespace mob {

enum class BaselineKind { naive_finetune, random_assignment, monolithic_ewc, gated_moe };

const char* to_string(BaselineKind k);
std::optional<BaselineKind> parse_baseline(const std::string& name);

/// One network trained on every batch. With EWC it consolidates at each task
/// boundary from a reservoir of that task's batches.
class SingleModelLearner : public Learner {
 public:
  SingleModelLearner(const MobConfig& config, std::size_t input_dim, std::size_t num_classes,
                     bool use_ewc);

  StepLog train(const Examples& batch) override;
  std::vector<ConsolidationEvent> end_task() override;
  std::vector<int> predict(const Examples& batch, EvalRouting routing) const override;
  int n_experts() const override { return 1; }

  const ExpertAgent& agent() const { return agent_; }

 private:
  MobConfig config_;
  bool use_ewc_;
  ExpertAgent agent_;
  std::size_t steps_ = 0;
};

enum class GatingMode { dense, top1 };

/// Linear gate over the raw input followed by a softmax over experts.
struct GaterSpec {
  std::size_t input_dim = 784;
  std::size_t n_experts = 4;
  std::size_t param_count() const { return n_experts * input_dim + n_experts; }
};

struct GatedMoeOptions {
  GatingMode gating = GatingMode::dense;
  bool experts_use_ewc = false;
};

/// N experts mixed by a learned gate, everything trained jointly by SGD on the
/// task loss. The output distribution is sum_i g_i(x) p_i(y|x).
class GatedMoeLearner : public Learner {
 public:
  GatedMoeLearner(const MobConfig& config, std::size_t input_dim, std::size_t num_classes,
                  GatedMoeOptions options = {});

  StepLog train(const Examples& batch) override;
  std::vector<ConsolidationEvent> end_task() override;
  std::vector<int> predict(const Examples& batch, EvalRouting routing) const override;
  int n_experts() const override { return config_.n_experts; }
  void after_task(std::size_t task, const TaskStream& stream, RunSummary& summary) override;

  /// Gate probabilities, one row per input.
  Matrix gate(const Matrix& inputs) const;
  /// Gate probabilities averaged over the rows.
  std::vector<double> mean_gate(const Matrix& inputs) const;
  /// Mixture negative log-likelihood and its gradient w.r.t. gate + expert parameters.
  struct JointGrad {
    double loss;
    ParamVector gater;
    std::vector<ParamVector> experts;
  };
  JointGrad loss_and_grad(const Examples& batch) const;

  const ParamVector& gater_params() const { return gater_; }
  ParamVector& mutable_gater_params() { return gater_; }
  std::vector<ExpertAgent>& mutable_experts() { return experts_; }
  const std::vector<ExpertAgent>& experts() const { return experts_; }

 private:
  MobConfig config_;
  GatedMoeOptions options_;
  GaterSpec gater_spec_;
  ParamVector gater_;
  std::vector<ExpertAgent> experts_;
  std::vector<double> first_task_gate_;
  std::size_t steps_ = 0;
};

/// Total-variation distance between two discrete distributions.
double total_variation(const std::vector<double>& p, const std::vector<double>& q);

}  // namespace mob
