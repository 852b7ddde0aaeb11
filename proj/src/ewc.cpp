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

#include "mob/ewc.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace mob {

EwcState EwcState::fresh(std::size_t param_count, double lambda_ewc) {
  if (lambda_ewc < 0.0) throw ContractError("lambda_ewc must be non-negative");
  return EwcState{FisherDiag{std::vector<double>(param_count, 0.0)}, std::nullopt, lambda_ewc, 0};
}

FisherDiag estimate_fisher(const ModelSpec& spec, const ParamVector& params,
                           std::span<const Examples> samples, std::size_t max_examples, Rng& rng) {
  // (batch, row) addresses of every available example
  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (std::size_t b = 0; b < samples.size(); ++b)
    for (std::size_t r = 0; r < samples[b].size(); ++r) pool.emplace_back(b, r);
  if (pool.empty() || max_examples == 0) throw DataError("no consolidation data");

  if (pool.size() > max_examples) {
    // partial Fisher-Yates: the first max_examples slots become a uniform sample
    for (std::size_t k = 0; k < max_examples; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    pool.resize(max_examples);
  }

  FisherDiag fisher{std::vector<double>(spec.param_count(), 0.0)};
  for (const auto& [b, r] : pool) {
    const Examples& ex = samples[b];
    const ParamVector g = per_example_logprob_grad(spec, params, ex.inputs.row(r), ex.labels[r]);
    for (std::size_t k = 0; k < g.size(); ++k) fisher.values[k] += g.values[k] * g.values[k];
  }
  const auto n = static_cast<double>(pool.size());
  for (double& f : fisher.values) f /= n;
  return fisher;
}

EwcState consolidate(const EwcState& state, const ModelSpec& spec, const ParamVector& params,
                     std::span<const Examples> reservoir, std::size_t max_examples, Rng& rng) {
  if (state.fisher.size() != params.size())
    throw ContractError("EWC state and parameters have different lengths");
  const FisherDiag fresh = estimate_fisher(spec, params, reservoir, max_examples, rng);
  EwcState next = state;
  for (std::size_t k = 0; k < fresh.size(); ++k) next.fisher.values[k] += fresh.values[k];
  next.anchor = params;
  ++next.consolidation_count;
  return next;
}

PenaltyGrad ewc_penalty_and_grad(const EwcState& state, const ParamVector& params) {
  if (state.fisher.size() != params.size())
    throw ContractError("EWC state has " + std::to_string(state.fisher.size()) +
                        " entries, parameters have " + std::to_string(params.size()));
  PenaltyGrad out{0.0, ParamVector{std::vector<double>(params.size(), 0.0)}};
  if (state.consolidation_count == 0 || !state.anchor) return out;
  const auto& f = state.fisher.values;
  const auto& a = state.anchor->values;
  const auto& p = params.values;
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double d = p[k] - a[k];
    sum += f[k] * d * d;
    out.grad.values[k] = state.lambda_ewc * f[k] * d;
  }
  out.penalty = 0.5 * state.lambda_ewc * sum;
  return out;
}

ParamVector implicit_ewc_step(const ParamVector& params, const ParamVector& combined_grad,
                              const EwcState& state, double lr) {
  if (params.size() != combined_grad.size() || params.size() != state.fisher.size())
    throw ContractError("implicit_ewc_step: length mismatch");
  ParamVector out = params;
  const double k = lr * state.lambda_ewc;
  for (std::size_t j = 0; j < out.size(); ++j)
    out.values[j] -= lr * combined_grad.values[j] / (1.0 + k * state.fisher.values[j]);
  return out;
}

double fisher_magnitude(const EwcState& state) {
  return std::accumulate(state.fisher.values.begin(), state.fisher.values.end(), 0.0);
}

}  // namespace mob
