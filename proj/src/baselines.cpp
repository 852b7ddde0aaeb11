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

#include "mob/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "mob/kernels.hpp"

namespace mob {

const char* to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::naive_finetune: return "naive";
    case BaselineKind::random_assignment: return "random";
    case BaselineKind::monolithic_ewc: return "monolithic_ewc";
    case BaselineKind::gated_moe: return "gated_moe";
  }
  return "unknown";
}

std::optional<BaselineKind> parse_baseline(const std::string& name) {
  for (auto k : {BaselineKind::naive_finetune, BaselineKind::random_assignment,
                 BaselineKind::monolithic_ewc, BaselineKind::gated_moe})
    if (name == to_string(k)) return k;
  return std::nullopt;
}

SingleModelLearner::SingleModelLearner(const MobConfig& config, std::size_t input_dim,
                                       std::size_t num_classes, bool use_ewc)
    : config_(config), use_ewc_(use_ewc) {
  config_.validate();
  agent_ = ExpertAgent::create(0, config_.model_spec(input_dim, num_classes, 0), config_);
}

StepLog SingleModelLearner::train(const Examples& batch) {
  StepLog log;
  log.step = steps_++;
  log.winner = 0;
  log.loss_before = train_winner(agent_, batch, config_);
  log.loss_after = mean_cross_entropy(agent_.spec, agent_.params, batch);
  return log;
}

std::vector<ConsolidationEvent> SingleModelLearner::end_task() {
  std::vector<ConsolidationEvent> events;
  if (use_ewc_ && consolidate_agent(agent_, config_))
    events.push_back({0, Trigger::explicit_boundary});
  agent_.reservoir.clear();
  agent_.last_reservoir_slot.reset();
  agent_.wins_this_task = 0;
  agent_.loss_window.clear();
  return events;
}

std::vector<int> SingleModelLearner::predict(const Examples& batch, EvalRouting) const {
  return mob::predict(agent_.spec, agent_.params, batch.inputs);
}

GatedMoeLearner::GatedMoeLearner(const MobConfig& config, std::size_t input_dim,
                                 std::size_t num_classes, GatedMoeOptions options)
    : config_(config), options_(options) {
  config_.validate();
  gater_spec_ = GaterSpec{input_dim, static_cast<std::size_t>(config_.n_experts)};
  gater_.values.assign(gater_spec_.param_count(), 0.0);
  Rng rng(derive_seed(config_.seed, 0x6a7e));
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (std::size_t k = 0; k < gater_spec_.n_experts * input_dim; ++k) gater_.values[k] = u(rng);
  for (int i = 0; i < config_.n_experts; ++i)
    experts_.push_back(
        ExpertAgent::create(i, config_.model_spec(input_dim, num_classes, i), config_));
}

namespace {

Matrix gate_logits(const GaterSpec& spec, const ParamVector& gater, const Matrix& inputs) {
  if (inputs.cols != spec.input_dim) throw ContractError("gate input width mismatch");
  const kernels::DenseShape shape{inputs.rows, spec.input_dim, spec.n_experts};
  Matrix z(inputs.rows, spec.n_experts);
  std::span<const double> all(gater.values);
  kernels::parallel::dense_forward(shape, inputs.data, all.first(spec.n_experts * spec.input_dim),
                                   all.subspan(spec.n_experts * spec.input_dim), z.data);
  return z;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

Matrix GatedMoeLearner::gate(const Matrix& inputs) const {
  Matrix g = log_softmax(gate_logits(gater_spec_, gater_, inputs));
  for (double& v : g.data) v = std::exp(v);
  return g;
}

std::vector<double> GatedMoeLearner::mean_gate(const Matrix& inputs) const {
  const Matrix g = gate(inputs);
  std::vector<double> mean(g.cols, 0.0);
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t i = 0; i < g.cols; ++i) mean[i] += g(r, i);
  for (double& m : mean) m /= static_cast<double>(g.rows);
  return mean;
}

GatedMoeLearner::JointGrad GatedMoeLearner::loss_and_grad(const Examples& batch) const {
  const std::size_t n = experts_.size();
  batch.validate(gater_spec_.input_dim, experts_.front().spec.num_classes());
  const std::size_t rows = batch.size();
  const auto inv_b = 1.0 / static_cast<double>(rows);

  std::vector<Matrix> logp;
  logp.reserve(n);
  for (const auto& e : experts_) logp.push_back(log_softmax(forward(e.spec, e.params, batch.inputs)));
  const Matrix log_g = log_softmax(gate_logits(gater_spec_, gater_, batch.inputs));

  std::vector<Matrix> dlogits(n, Matrix(rows, logp.front().cols));
  Matrix dz(rows, n);
  double loss = 0.0;
  std::vector<double> s(n);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto y = static_cast<std::size_t>(batch.labels[r]);
    for (std::size_t i = 0; i < n; ++i) s[i] = log_g(r, i) + logp[i](r, y);
    const double mx = *std::max_element(s.begin(), s.end());
    double acc = 0.0;
    for (double v : s) acc += std::exp(v - mx);
    const double log_mix = mx + std::log(acc);

    const std::size_t top = argmax(log_g.row(r));
    loss -= options_.gating == GatingMode::dense ? log_mix : logp[top](r, y);
    for (std::size_t i = 0; i < n; ++i) {
      const double resp = std::exp(s[i] - log_mix);
      dz(r, i) = (std::exp(log_g(r, i)) - resp) * inv_b;
      double weight = resp;
      if (options_.gating == GatingMode::top1) weight = i == top ? 1.0 : 0.0;
      if (weight == 0.0) continue;
      for (std::size_t c = 0; c < logp[i].cols; ++c)
        dlogits[i](r, c) = weight * (std::exp(logp[i](r, c)) - (c == y ? 1.0 : 0.0)) * inv_b;
    }
  }
  if (!std::isfinite(loss)) throw NumericError("non-finite mixture loss", 0);

  JointGrad out{loss * inv_b, ParamVector{std::vector<double>(gater_.size())}, {}};
  const kernels::DenseShape shape{rows, gater_spec_.input_dim, gater_spec_.n_experts};
  std::span<double> g(out.gater.values);
  kernels::parallel::dense_weight_grad(shape, dz.data, batch.inputs.data,
                                       g.first(shape.out * shape.in), g.subspan(shape.out * shape.in));
  for (std::size_t i = 0; i < n; ++i)
    out.experts.push_back(backprop(experts_[i].spec, experts_[i].params, batch.inputs, dlogits[i]));
  return out;
}

StepLog GatedMoeLearner::train(const Examples& batch) {
  JointGrad jg = loss_and_grad(batch);
  StepLog log;
  log.step = steps_++;
  log.loss_before = jg.loss;
  const auto mean = mean_gate(batch.inputs);
  log.winner = static_cast<int>(argmax(mean));

  ParamVector next_gater = sgd_step(gater_, jg.gater, config_.lr);
  std::vector<ParamVector> next_experts;
  for (std::size_t i = 0; i < experts_.size(); ++i) {
    if (options_.experts_use_ewc) {
      const auto pen = ewc_penalty_and_grad(experts_[i].ewc, experts_[i].params);
      for (std::size_t k = 0; k < pen.grad.size(); ++k) jg.experts[i].values[k] += pen.grad.values[k];
    }
    next_experts.push_back(sgd_step(experts_[i].params, jg.experts[i], config_.lr));
  }
  gater_ = std::move(next_gater);
  for (std::size_t i = 0; i < experts_.size(); ++i) {
    experts_[i].params = std::move(next_experts[i]);
    if (options_.experts_use_ewc) experts_[i].reservoir.offer(batch, experts_[i].rng);
  }
  log.loss_after = loss_and_grad(batch).loss;
  return log;
}

std::vector<ConsolidationEvent> GatedMoeLearner::end_task() {
  std::vector<ConsolidationEvent> events;
  if (!options_.experts_use_ewc) return events;
  for (auto& e : experts_) {
    if (consolidate_agent(e, config_)) events.push_back({e.id, Trigger::explicit_boundary});
    e.reservoir.clear();
  }
  return events;
}

std::vector<int> GatedMoeLearner::predict(const Examples& batch, EvalRouting) const {
  const Matrix g = gate(batch.inputs);
  std::vector<Matrix> probs;
  for (const auto& e : experts_) {
    Matrix p = log_softmax(forward(e.spec, e.params, batch.inputs));
    for (double& v : p.data) v = std::exp(v);
    probs.push_back(std::move(p));
  }
  std::vector<int> out(batch.inputs.rows);
  std::vector<double> mix(probs.front().cols);
  for (std::size_t r = 0; r < batch.inputs.rows; ++r) {
    if (options_.gating == GatingMode::top1) {
      out[r] = static_cast<int>(argmax(probs[argmax(g.row(r))].row(r)));
      continue;
    }
    std::fill(mix.begin(), mix.end(), 0.0);
    for (std::size_t i = 0; i < probs.size(); ++i)
      for (std::size_t c = 0; c < mix.size(); ++c) mix[c] += g(r, i) * probs[i](r, c);
    out[r] = static_cast<int>(argmax(mix));
  }
  return out;
}

void GatedMoeLearner::after_task(std::size_t task, const TaskStream& stream, RunSummary& summary) {
  const Matrix& first_eval = stream.tasks.front().eval.inputs;
  if (task == 0) first_task_gate_ = mean_gate(first_eval);
  if (task + 1 == stream.tasks.size() && !first_task_gate_.empty())
    summary.diagnostics["gate_tv_task0"] = total_variation(first_task_gate_, mean_gate(first_eval));
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ContractError("distributions differ in support size");
  double d = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) d += std::abs(p[k] - q[k]);
  return 0.5 * d;
}

}  // namespace mob
