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

// Minimal dense feed-forward classifier with exact analytic gradients.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mob/common.hpp"

namespace mob {

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Inputs and labels, with nothing else. This is all routing code gets to see.
struct Examples {
  Matrix inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  void validate(std::size_t input_dim, std::size_t num_classes) const;
};

/// One batch of the stream. `task_id` is bookkeeping for the harness only.
struct Batch {
  Examples examples;
  std::optional<int> task_id;
};

enum class Activation { relu, tanh };

struct ModelSpec {
  std::vector<std::size_t> layer_sizes{784, 256, 10};
  Activation activation = Activation::relu;
  // Uniform init bound per layer is init_gain / sqrt(fan_in).
  double init_gain = 1.0;
  std::uint64_t init_seed = 0;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t num_classes() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  std::size_t param_count() const;
  /// Offset of layer l's weight block; its bias block follows immediately.
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;
  void validate() const;
};

/// Flat parameter store. Layout: for each layer, weights (out x in, row-major) then biases.
struct ParamVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const ParamVector&) const = default;
};

ParamVector init_params(const ModelSpec& spec);
ParamVector zero_params(const ModelSpec& spec);

/// B x num_classes logits.
Matrix forward(const ModelSpec& spec, const ParamVector& params, const Matrix& inputs);

/// Row-wise log-softmax, stabilised by subtracting the row max.
Matrix log_softmax(const Matrix& logits);

struct LossGrad {
  double loss;
  ParamVector grad;
};

/// Mean softmax cross-entropy over the batch and its exact gradient.
LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params, const Examples& batch);

/// Mean cross-entropy only (no backward pass).
double mean_cross_entropy(const ModelSpec& spec, const ParamVector& params, const Examples& batch);

/// Gradient of log p(label | input) for one example.
ParamVector per_example_logprob_grad(const ModelSpec& spec, const ParamVector& params,
                                     std::span<const double> input, int label);

/// Backpropagates an arbitrary dL/dlogits through the network.
ParamVector backprop(const ModelSpec& spec, const ParamVector& params, const Matrix& inputs,
                     const Matrix& dlogits);

/// params - lr * grad
ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr);

/// Argmax class per row.
std::vector<int> predict(const ModelSpec& spec, const ParamVector& params, const Matrix& inputs);

/// Per-row -log max_c p(c|x).
std::vector<double> confidence_costs(const ModelSpec& spec, const ParamVector& params,
                                     const Matrix& inputs);

/// Mean over rows of -log max_c p(c|x). Label-free confidence cost.
double mean_confidence_cost(const ModelSpec& spec, const ParamVector& params,
                            const Matrix& inputs);

/// Median over rows of -log max_c p(c|x).
double median_confidence_cost(const ModelSpec& spec, const ParamVector& params,
                              const Matrix& inputs);

}  // namespace mob
