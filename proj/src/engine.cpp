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

#include "mob/engine.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

namespace mob {

void MobConfig::validate() const {
  if (n_experts < 2) throw ContractError("n_experts must be at least 2");
  if (alpha < 0.0 || beta < 0.0) throw ContractError("alpha and beta must be non-negative");
  if (!(alpha + beta > 0.0)) throw ContractError("alpha + beta must be positive");
  if (forget_scale < 0.0) throw ContractError("forget_scale must be non-negative");
  if (lambda_ewc < 0.0) throw ContractError("lambda_ewc must be non-negative");
  if (!(lr > 0.0)) throw ContractError("lr must be positive");
  if (batch_size == 0) throw ContractError("batch_size must be positive");
  if (window_size < 2) throw ContractError("window_size must be at least 2");
  if (!(tau_commit > 0.0)) throw ContractError("tau_commit must be positive");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ContractError("ema_decay must lie in (0,1)");
  if (!(spike_factor > 1.0)) throw ContractError("spike_factor must exceed 1");
  if (reservoir_capacity == 0) throw ContractError("reservoir_capacity must be at least 1");
  if (fisher_examples == 0) throw ContractError("fisher_examples must be positive");
  if (hidden_layers.empty()) throw ContractError("at least one hidden layer is required");
}

ModelSpec MobConfig::model_spec(std::size_t input_dim, std::size_t num_classes,
                                int expert_id) const {
  ModelSpec spec;
  spec.layer_sizes.clear();
  spec.layer_sizes.push_back(input_dim);
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden_layers.begin(), hidden_layers.end());
  spec.layer_sizes.push_back(num_classes);
  spec.activation = activation;
  spec.init_seed = seed ^ static_cast<std::uint64_t>(expert_id);
  spec.validate();
  return spec;
}

const char* to_string(Trigger t) {
  switch (t) {
    case Trigger::cv_commit: return "cv_commit";
    case Trigger::ema_spike: return "ema_spike";
    case Trigger::explicit_boundary: return "explicit_boundary";
  }
  return "unknown";
}

std::optional<std::size_t> BatchReservoir::offer(const Examples& batch, Rng& rng) {
  ++seen_;
  if (batches_.size() < capacity_) {
    batches_.push_back(batch);
    return batches_.size() - 1;
  }
  std::uniform_int_distribution<std::uint64_t> pick(0, seen_ - 1);
  const auto j = pick(rng);
  if (j >= capacity_) return std::nullopt;
  batches_[j] = batch;
  return static_cast<std::size_t>(j);
}

void BatchReservoir::clear() {
  batches_.clear();
  seen_ = 0;
}

ExpertAgent ExpertAgent::create(int id, const ModelSpec& spec, const MobConfig& config) {
  ExpertAgent a;
  a.id = id;
  a.spec = spec;
  a.params = init_params(spec);
  a.ewc = EwcState::fresh(spec.param_count(), config.lambda_ewc);
  a.reservoir = BatchReservoir(config.reservoir_capacity);
  a.rng.seed(derive_seed(config.seed, 0x100 + static_cast<std::uint64_t>(id)));
  return a;
}

Bid compute_bid(const ExpertAgent& agent, const Examples& batch, const MobConfig& config) {
  const double exec = mean_cross_entropy(agent.spec, agent.params, batch);
  const double forget = config.forget_scale * fisher_magnitude(agent.ewc);
  return Bid::make(agent.id, exec, forget, config.alpha, config.beta);
}

namespace {
constexpr double kConfidenceFloor = 1e-6;
}  // namespace

std::optional<double> ExpertAgent::confidence_baseline() const {
  if (confidence_window.empty()) return std::nullopt;
  return std::accumulate(confidence_window.begin(), confidence_window.end(), 0.0) /
         static_cast<double>(confidence_window.size());
}

TrainingGrad combined_loss_and_grad(const ExpertAgent& agent, const Examples& batch) {
  LossGrad task = loss_and_grad(agent.spec, agent.params, batch);
  const PenaltyGrad pen = ewc_penalty_and_grad(agent.ewc, agent.params);
  for (std::size_t k = 0; k < task.grad.size(); ++k) task.grad.values[k] += pen.grad.values[k];
  return TrainingGrad{task.loss, pen.penalty, std::move(task.grad)};
}

double train_winner(ExpertAgent& agent, const Examples& batch, const MobConfig& config) {
  const TrainingGrad g = combined_loss_and_grad(agent, batch);
  ParamVector next = config.ewc_step == EwcStep::implicit
                         ? implicit_ewc_step(agent.params, g.grad, agent.ewc, config.lr)
                         : sgd_step(agent.params, g.grad, config.lr);
  for (double v : next.values)
    if (!std::isfinite(v)) throw NumericError("non-finite parameter after update", 0);

  const double conf = median_confidence_cost(agent.spec, next, batch.inputs);

  // nothing below throws except allocation
  agent.params = std::move(next);
  agent.confidence_window.push_back(conf);
  while (agent.confidence_window.size() > config.window_size) agent.confidence_window.pop_front();
  observe_cost(agent, g.task_loss, config);
  agent.last_reservoir_slot = agent.reservoir.offer(batch, agent.rng);
  ++agent.wins_this_task;
  ++agent.lifetime_wins;
  ++agent.wins_since_consolidation;
  return g.task_loss;
}

void observe_cost(ExpertAgent& agent, double cost, const MobConfig& config) {
  agent.loss_window.push_back(cost);
  while (agent.loss_window.size() > config.window_size) agent.loss_window.pop_front();
  agent.ema_before_update = agent.ema_loss;
  agent.ema_loss =
      agent.ema_loss ? config.ema_decay * *agent.ema_loss + (1.0 - config.ema_decay) * cost : cost;
}

double window_cv(const std::deque<double>& window) {
  if (window.empty()) return 0.0;
  const auto n = static_cast<double>(window.size());
  const double mean = std::accumulate(window.begin(), window.end(), 0.0) / n;
  if (mean == 0.0) return 0.0;
  double ss = 0.0;
  for (double v : window) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n) / std::abs(mean);
}

ConsolidationDecision self_monitor(const ExpertAgent& agent, double loss_before,
                                   const MobConfig& config) {
  const std::size_t w = config.window_size;
  if (agent.ema_before_update && agent.loss_window.size() * 2 >= w &&
      loss_before > config.spike_factor * *agent.ema_before_update)
    return ConsolidationDecision::spike;
  if (agent.loss_window.size() >= w &&
      agent.wins_since_consolidation >= static_cast<int>(w) &&
      window_cv(agent.loss_window) < config.tau_commit)
    return ConsolidationDecision::commit;
  return ConsolidationDecision::none;
}

bool consolidate_agent(ExpertAgent& agent, const MobConfig& config,
                       std::optional<std::size_t> exclude_slot) {
  const auto& all = agent.reservoir.batches();
  std::vector<Examples> kept;
  const std::vector<Examples>* source = &all;
  if (exclude_slot && *exclude_slot < all.size()) {
    kept.reserve(all.size() - 1);
    for (std::size_t k = 0; k < all.size(); ++k)
      if (k != *exclude_slot) kept.push_back(all[k]);
    source = &kept;
  }
  if (source->empty()) return false;
  agent.ewc = consolidate(agent.ewc, agent.spec, agent.params, *source, config.fisher_examples,
                          agent.rng);
  agent.wins_since_consolidation = 0;
  return true;
}

MobEngine::MobEngine(const MobConfig& config, std::size_t input_dim, std::size_t num_classes,
                     Routing routing)
    : config_(config),
      routing_(routing),
      auction_rng_(derive_seed(config.seed, 1)),
      routing_rng_(derive_seed(config.seed, 2)),
      eval_seed_(derive_seed(config.seed, 3)) {
  config_.validate();
  agents_.reserve(static_cast<std::size_t>(config_.n_experts));
  for (int i = 0; i < config_.n_experts; ++i)
    agents_.push_back(ExpertAgent::create(i, config_.model_spec(input_dim, num_classes, i), config_));
}

std::vector<Bid> MobEngine::collect_bids(const Examples& batch) const {
  std::vector<Bid> bids(agents_.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::int64_t>(agents_.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      bids[static_cast<std::size_t>(i)] =
          compute_bid(agents_[static_cast<std::size_t>(i)], batch, config_);
    } catch (...) {
#pragma omp critical(mob_bid_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return bids;
}

StepLog MobEngine::step(const Examples& batch) {
  StepLog log;
  log.step = steps_;
  if (routing_ == Routing::auction) {
    log.bids = collect_bids(batch);
    const AuctionResult result = run_auction(log.bids, auction_rng_);
    log.winner = result.winner;
    log.payment = result.payment;
    log.tie_broken = result.tie_broken;
    log.bids = result.all_bids;
  } else {
    std::uniform_int_distribution<int> pick(0, config_.n_experts - 1);
    log.winner = pick(routing_rng_);
  }

  ExpertAgent& winner = agents_[static_cast<std::size_t>(log.winner)];
  log.loss_before = train_winner(winner, batch, config_);
  log.loss_after = mean_cross_entropy(winner.spec, winner.params, batch);

  if (config_.boundary_mode == BoundaryMode::self_monitor) {
    for (ExpertAgent& a : agents_) {
      if (a.id == winner.id) {
        // the batch that triggered a spike belongs to the new regime
        apply_decision(a, self_monitor(a, log.loss_before, config_), a.last_reservoir_slot, log);
      } else if (config_.monitor_all_experts && !log.bids.empty()) {
        const double cost = log.bids[static_cast<std::size_t>(a.id)].exec_cost;
        observe_cost(a, cost, config_);
        apply_decision(a, self_monitor(a, cost, config_), std::nullopt, log);
      }
    }
  }
  ++steps_;
  return log;
}

void MobEngine::apply_decision(ExpertAgent& agent, ConsolidationDecision decision,
                               std::optional<std::size_t> exclude_slot, StepLog& log) {
  switch (decision) {
    case ConsolidationDecision::commit:
      if (consolidate_agent(agent, config_)) log.events.push_back({agent.id, Trigger::cv_commit});
      agent.loss_window.clear();
      break;
    case ConsolidationDecision::spike:
      if (consolidate_agent(agent, config_, exclude_slot))
        log.events.push_back({agent.id, Trigger::ema_spike});
      agent.loss_window.clear();
      agent.reservoir.clear();
      agent.last_reservoir_slot.reset();
      agent.ema_loss.reset();
      agent.ema_before_update.reset();
      agent.wins_since_consolidation = 0;
      break;
    case ConsolidationDecision::none:
      break;
  }
}

std::vector<ConsolidationEvent> MobEngine::explicit_boundary() {
  std::vector<ConsolidationEvent> events;
  for (ExpertAgent& a : agents_) {
    if (a.wins_this_task > 0 && !a.reservoir.empty()) {
      if (consolidate_agent(a, config_)) events.push_back({a.id, Trigger::explicit_boundary});
      a.reservoir.clear();
      a.last_reservoir_slot.reset();
    }
    a.wins_this_task = 0;
    a.loss_window.clear();
  }
  return events;
}

int MobEngine::route_for_eval(const Examples& batch, EvalRouting mode) const {
  // Calibrated label-free routing divides each expert's median confidence cost
  // by its own recent median confidence cost on batches it won, so an expert
  // that is overconfident everywhere does not capture foreign batches. Experts
  // that never won are only used when nobody has won yet.
  const bool calibrated = mode == EvalRouting::label_free &&
                          std::any_of(agents_.begin(), agents_.end(),
                                      [](const ExpertAgent& a) { return !a.confidence_window.empty(); });
  std::vector<Bid> bids;
  bids.reserve(agents_.size());
  for (const ExpertAgent& a : agents_) {
    double cost;
    if (mode == EvalRouting::oracle) {
      cost = mean_cross_entropy(a.spec, a.params, batch);
    } else if (calibrated) {
      const auto baseline = a.confidence_baseline();
      if (!baseline) continue;
      cost = median_confidence_cost(a.spec, a.params, batch.inputs) /
             std::max(*baseline, kConfidenceFloor);
    } else {
      cost = mean_confidence_cost(a.spec, a.params, batch.inputs);
    }
    bids.push_back(Bid::make(a.id, cost, 0.0, 1.0, 0.0));
  }
  Rng rng(eval_seed_);
  return run_auction(bids, rng).winner;
}

}  // namespace mob
