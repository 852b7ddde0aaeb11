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

// Diagonal Fisher estimation and the elastic weight consolidation penalty.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mob/common.hpp"
#include "mob/nn.hpp"

namespace mob {

/// Per-parameter importance; same layout as ParamVector, every entry >= 0.
struct FisherDiag {
  std::vector<double> values;
  std::size_t size() const { return values.size(); }
};

struct EwcState {
  FisherDiag fisher;                 // running sum over consolidations
  std::optional<ParamVector> anchor; // snapshot from the latest consolidation
  double lambda_ewc = 0.0;
  int consolidation_count = 0;

  static EwcState fresh(std::size_t param_count, double lambda_ewc);
};

/// Mean squared per-example log-likelihood gradient over at most `max_examples`
/// examples, drawn uniformly without replacement from `samples` when there
/// are more than that. Labels are the ground-truth ones stored in the samples.
FisherDiag estimate_fisher(const ModelSpec& spec, const ParamVector& params,
                           std::span<const Examples> samples, std::size_t max_examples, Rng& rng);

/// Adds a fresh Fisher estimate to the running sum and re-anchors at `params`.
EwcState consolidate(const EwcState& state, const ModelSpec& spec, const ParamVector& params,
                     std::span<const Examples> reservoir, std::size_t max_examples, Rng& rng);

struct PenaltyGrad {
  double penalty;
  ParamVector grad;
};

/// (lambda/2) * sum_j F_j (theta_j - anchor_j)^2 and its gradient.
/// Zero with a zero gradient before the first consolidation.
PenaltyGrad ewc_penalty_and_grad(const EwcState& state, const ParamVector& params);

/// params - lr * combined_grad / (1 + lr * lambda * F), coordinate-wise.
ParamVector implicit_ewc_step(const ParamVector& params, const ParamVector& combined_grad,
                              const EwcState& state, double lr);

/// Sum of all Fisher entries.
double fisher_magnitude(const EwcState& state);

}  // namespace mob
