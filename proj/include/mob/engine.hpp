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

// Expert agents that bid for batches, and the auction-routed training loop.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "mob/auction.hpp"
#include "mob/ewc.hpp"
#include "mob/nn.hpp"

namespace mob {

enum class BoundaryMode { explicit_boundary, self_monitor };

/// How the winner applies the combined task + EWC gradient.
///  explicit: params - lr * grad.
///  implicit: per-coordinate step lr / (1 + lr * lambda * F_j), which is the
///            exact minimiser of the linearised task loss plus the quadratic
///            penalty and a proximal term. Stable for any lambda; identical to
///            explicit while the Fisher is zero.
enum class EwcStep { explicit_gradient, implicit };

struct MobConfig {
  int n_experts = 4;
  double alpha = 1.0;         // weight on execution cost
  double beta = 1.0;          // weight on forgetting cost
  double forget_scale = 1e-4; // multiplies the Fisher magnitude in the bid
  double lambda_ewc = 2e6;
  double lr = 0.05;
  EwcStep ewc_step = EwcStep::implicit;
  std::size_t batch_size = 32;
  BoundaryMode boundary_mode = BoundaryMode::explicit_boundary;
  std::size_t window_size = 50;
  double tau_commit = 0.05;
  double ema_decay = 0.99;
  double spike_factor = 3.0;
  std::size_t reservoir_capacity = 64;  // batches
  // In self_monitor mode, losers also watch the execution cost of their own
  // bid. Otherwise only the winner's training loss is monitored.
  bool monitor_all_experts = true;
  std::size_t fisher_examples = 512;
  std::vector<std::size_t> hidden_layers{256};
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;

  void validate() const;
  ModelSpec model_spec(std::size_t input_dim, std::size_t num_classes, int expert_id) const;
};

enum class Trigger { cv_commit, ema_spike, explicit_boundary };
const char* to_string(Trigger t);

struct ConsolidationEvent {
  int expert = 0;
  Trigger reason = Trigger::explicit_boundary;
};

/// Bounded uniform sample of the batches an agent has won (Algorithm R).
class BatchReservoir {
 public:
  explicit BatchReservoir(std::size_t capacity = 1) : capacity_(capacity) {}

  /// Returns the slot the batch landed in, or nothing if it was not kept.
  std::optional<std::size_t> offer(const Examples& batch, Rng& rng);
  void clear();

  const std::vector<Examples>& batches() const { return batches_; }
  std::size_t size() const { return batches_.size(); }
  bool empty() const { return batches_.empty(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t seen() const { return seen_; }

 private:
  std::size_t capacity_;
  std::uint64_t seen_ = 0;
  std::vector<Examples> batches_;
};

struct ExpertAgent {
  int id = 0;
  ModelSpec spec;
  ParamVector params;
  EwcState ewc;
  std::deque<double> loss_window;  // losses of batches this agent won, newest last
  std::optional<double> ema_loss;
  // median confidence cost on the most recent won batches, measured after each update;
  // never cleared, so it describes whatever the expert last specialized on
  std::deque<double> confidence_window;
  std::optional<double> confidence_baseline() const;
  std::optional<double> ema_before_update;  // EMA the latest loss is judged against
  BatchReservoir reservoir;
  std::optional<std::size_t> last_reservoir_slot;
  int wins_this_task = 0;
  int lifetime_wins = 0;
  int wins_since_consolidation = 0;
  Rng rng;

  static ExpertAgent create(int id, const ModelSpec& spec, const MobConfig& config);
};

/// alpha * mean batch cross-entropy + beta * forget_scale * fisher magnitude.
/// Reads the agent only.
Bid compute_bid(const ExpertAgent& agent, const Examples& batch, const MobConfig& config);

struct TrainingGrad {
  double task_loss;
  double penalty;
  ParamVector grad;  // task gradient + penalty gradient
};

/// Gradient of the winner's total loss: task cross-entropy plus EWC penalty.
TrainingGrad combined_loss_and_grad(const ExpertAgent& agent, const Examples& batch);

/// One SGD step on task loss + EWC penalty, then the bookkeeping (loss window,
/// EMA, reservoir, win counters). Returns the task loss before the step.
/// Strong guarantee: the agent is untouched if the step throws.
double train_winner(ExpertAgent& agent, const Examples& batch, const MobConfig& config);

/// Pushes an observed execution cost into the loss window and the EMA.
void observe_cost(ExpertAgent& agent, double cost, const MobConfig& config);

enum class ConsolidationDecision { none, commit, spike };

/// Coefficient of variation of the loss window; 0 when the mean is 0.
double window_cv(const std::deque<double>& window);

ConsolidationDecision self_monitor(const ExpertAgent& agent, double loss_before,
                                   const MobConfig& config);

/// Consolidates from the agent's reservoir, optionally skipping one slot.
/// Returns false (and changes nothing) when no data is left to consolidate.
bool consolidate_agent(ExpertAgent& agent, const MobConfig& config,
                       std::optional<std::size_t> exclude_slot = std::nullopt);

struct StepLog {
  std::size_t step = 0;
  std::vector<Bid> bids;
  int winner = 0;
  std::optional<double> payment;
  bool tie_broken = false;
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::vector<ConsolidationEvent> events;
};

enum class Routing { auction, random };
// label_free: median confidence cost normalized by each expert's own recent
// in-training median. label_free_raw: plain mean confidence cost. oracle: labelled
// cross-entropy, an upper bound for diagnostics.
enum class EvalRouting { label_free, label_free_raw, oracle };

class MobEngine {
 public:
  MobEngine(const MobConfig& config, std::size_t input_dim, std::size_t num_classes,
            Routing routing = Routing::auction);

  /// Collect bids, run the auction, train the winner, self-monitor.
  StepLog step(const Examples& batch);

  /// Consolidate every agent that won this task; reset per-task counters.
  std::vector<ConsolidationEvent> explicit_boundary();

  /// Every agent's bid for `batch`; agents are not modified.
  std::vector<Bid> collect_bids(const Examples& batch) const;

  /// Expert chosen to answer `batch` at evaluation time. The label-free modes
  /// never read the labels.
  int route_for_eval(const Examples& batch, EvalRouting mode) const;

  const std::vector<ExpertAgent>& agents() const { return agents_; }
  std::vector<ExpertAgent>& mutable_agents() { return agents_; }
  const MobConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }

 private:
  void apply_decision(ExpertAgent& agent, ConsolidationDecision decision,
                      std::optional<std::size_t> exclude_slot, StepLog& log);

  MobConfig config_;
  Routing routing_;
  std::vector<ExpertAgent> agents_;
  Rng auction_rng_;
  Rng routing_rng_;
  std::uint64_t eval_seed_;
  std::size_t steps_ = 0;
};

}  // namespace mob
