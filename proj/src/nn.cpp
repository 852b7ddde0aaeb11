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

#include "mob/nn.hpp"

#include <algorithm>
#include <numeric>
#include <cmath>
#include <string>

#include "mob/kernels.hpp"

namespace mob {

namespace kp = kernels::parallel;

void Examples::validate(std::size_t input_dim, std::size_t num_classes) const {
  if (labels.empty()) throw ContractError("batch is empty");
  if (inputs.rows != labels.size())
    throw ContractError("batch has " + std::to_string(inputs.rows) + " input rows but " +
                        std::to_string(labels.size()) + " labels");
  if (inputs.cols != input_dim)
    throw ContractError("batch input width " + std::to_string(inputs.cols) + " != model input " +
                        std::to_string(input_dim));
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw ContractError("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(num_classes) + ")");
}

std::size_t ModelSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  return n;
}

std::size_t ModelSpec::weight_offset(std::size_t layer) const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer; ++l)
    n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  return n;
}

std::size_t ModelSpec::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + layer_sizes[layer] * layer_sizes[layer + 1];
}

void ModelSpec::validate() const {
  if (layer_sizes.size() < 3)
    throw ContractError("model needs an input, an output and at least one hidden layer");
  for (auto n : layer_sizes)
    if (n == 0) throw ContractError("layer sizes must be positive");
  if (!(init_gain > 0.0) || !std::isfinite(init_gain))
    throw ContractError("init_gain must be positive");
}

ParamVector init_params(const ModelSpec& spec) {
  spec.validate();
  ParamVector p{std::vector<double>(spec.param_count())};
  Rng rng(spec.init_seed);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const double bound = spec.init_gain / std::sqrt(static_cast<double>(spec.layer_sizes[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t begin = spec.weight_offset(l);
    const std::size_t end = spec.bias_offset(l);  // biases stay zero
    for (std::size_t k = begin; k < end; ++k) p.values[k] = u(rng);
  }
  return p;
}

ParamVector zero_params(const ModelSpec& spec) {
  spec.validate();
  return ParamVector{std::vector<double>(spec.param_count(), 0.0)};
}

namespace {

void check_params(const ModelSpec& spec, const ParamVector& params) {
  if (params.size() != spec.param_count())
    throw ContractError("parameter vector has " + std::to_string(params.size()) +
                        " entries, model expects " + std::to_string(spec.param_count()));
}

void check_inputs(const ModelSpec& spec, const Matrix& inputs) {
  if (inputs.cols != spec.input_dim())
    throw ContractError("input width " + std::to_string(inputs.cols) + " != model input " +
                        std::to_string(spec.input_dim()));
  if (inputs.rows == 0) throw ContractError("no input rows");
  // relu would silently map NaN to zero, so reject it here
  for (double x : inputs.data)
    if (!std::isfinite(x)) throw NumericError("non-finite input", 0);
}

void require_finite(std::span<const double> v, std::size_t layer, const char* stage) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite ") + stage, layer);
}

std::span<const double> weights(const ModelSpec& spec, const ParamVector& p, std::size_t l) {
  return {p.values.data() + spec.weight_offset(l), spec.layer_sizes[l] * spec.layer_sizes[l + 1]};
}

std::span<const double> biases(const ModelSpec& spec, const ParamVector& p, std::size_t l) {
  return {p.values.data() + spec.bias_offset(l), spec.layer_sizes[l + 1]};
}

// activations[0] is a copy-free view of the input; activations[l] for l >= 1 are
// post-activation outputs of layer l-1, the last entry being the logits.
struct ForwardTrace {
  std::vector<Matrix> outputs;  // one per layer
};

ForwardTrace run_forward(const ModelSpec& spec, const ParamVector& params, const Matrix& inputs) {
  check_params(spec, params);
  check_inputs(spec, inputs);
  ForwardTrace trace;
  trace.outputs.reserve(spec.num_layers());
  const Matrix* x = &inputs;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const kernels::DenseShape shape{inputs.rows, spec.layer_sizes[l], spec.layer_sizes[l + 1]};
    Matrix y(inputs.rows, shape.out);
    kp::dense_forward(shape, x->data, weights(spec, params, l), biases(spec, params, l), y.data);
    const bool hidden = l + 1 < spec.num_layers();
    if (hidden) {
      if (spec.activation == Activation::relu) {
        for (double& v : y.data) v = v > 0.0 ? v : 0.0;
      } else {
        for (double& v : y.data) v = std::tanh(v);
      }
    }
    require_finite(y.data, l, "activation");
    trace.outputs.push_back(std::move(y));
    x = &trace.outputs.back();
  }
  return trace;
}

ParamVector run_backward(const ModelSpec& spec, const ParamVector& params, const Matrix& inputs,
                         const ForwardTrace& trace, Matrix delta) {
  ParamVector grad{std::vector<double>(spec.param_count())};
  for (std::size_t l = spec.num_layers(); l-- > 0;) {
    const Matrix& x = l == 0 ? inputs : trace.outputs[l - 1];
    const kernels::DenseShape shape{inputs.rows, spec.layer_sizes[l], spec.layer_sizes[l + 1]};
    std::span<double> dw{grad.values.data() + spec.weight_offset(l), shape.in * shape.out};
    std::span<double> db{grad.values.data() + spec.bias_offset(l), shape.out};
    kp::dense_weight_grad(shape, delta.data, x.data, dw, db);
    require_finite(dw, l, "gradient");
    require_finite(db, l, "gradient");
    if (l == 0) break;
    Matrix dx(inputs.rows, shape.in);
    kp::dense_input_grad(shape, delta.data, weights(spec, params, l), dx.data);
    // x is the activated output of layer l-1
    if (spec.activation == Activation::relu) {
      for (std::size_t k = 0; k < dx.data.size(); ++k)
        if (x.data[k] <= 0.0) dx.data[k] = 0.0;
    } else {
      for (std::size_t k = 0; k < dx.data.size(); ++k) dx.data[k] *= 1.0 - x.data[k] * x.data[k];
    }
    delta = std::move(dx);
  }
  return grad;
}

void check_labels(const ModelSpec& spec, const Examples& batch) {
  batch.validate(spec.input_dim(), spec.num_classes());
}

}  // namespace

Matrix forward(const ModelSpec& spec, const ParamVector& params, const Matrix& inputs) {
  auto trace = run_forward(spec, params, inputs);
  return std::move(trace.outputs.back());
}

Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    auto in = logits.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (double v : in) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    auto o = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = in[c] - lse;
  }
  return out;
}

LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params, const Examples& batch) {
  check_labels(spec, batch);
  auto trace = run_forward(spec, params, batch.inputs);
  const Matrix logp = log_softmax(trace.outputs.back());
  const auto n = static_cast<double>(batch.size());
  double loss = 0.0;
  Matrix delta(logp.rows, logp.cols);
  for (std::size_t r = 0; r < logp.rows; ++r) {
    const auto y = static_cast<std::size_t>(batch.labels[r]);
    loss -= logp(r, y);
    for (std::size_t c = 0; c < logp.cols; ++c)
      delta(r, c) = (std::exp(logp(r, c)) - (c == y ? 1.0 : 0.0)) / n;
  }
  loss /= n;
  if (!std::isfinite(loss)) throw NumericError("non-finite loss", spec.num_layers() - 1);
  return {loss, run_backward(spec, params, batch.inputs, trace, std::move(delta))};
}

double mean_cross_entropy(const ModelSpec& spec, const ParamVector& params, const Examples& batch) {
  check_labels(spec, batch);
  const Matrix logp = log_softmax(forward(spec, params, batch.inputs));
  double loss = 0.0;
  for (std::size_t r = 0; r < logp.rows; ++r)
    loss -= logp(r, static_cast<std::size_t>(batch.labels[r]));
  loss /= static_cast<double>(batch.size());
  if (!std::isfinite(loss)) throw NumericError("non-finite loss", spec.num_layers() - 1);
  return loss;
}

ParamVector per_example_logprob_grad(const ModelSpec& spec, const ParamVector& params,
                                     std::span<const double> input, int label) {
  if (input.size() != spec.input_dim())
    throw ContractError("example width " + std::to_string(input.size()) + " != model input " +
                        std::to_string(spec.input_dim()));
  if (label < 0 || static_cast<std::size_t>(label) >= spec.num_classes())
    throw ContractError("label " + std::to_string(label) + " out of range");
  Matrix x(1, input.size());
  std::copy(input.begin(), input.end(), x.data.begin());
  auto trace = run_forward(spec, params, x);
  const Matrix logp = log_softmax(trace.outputs.back());
  Matrix delta(1, logp.cols);
  for (std::size_t c = 0; c < logp.cols; ++c)
    delta(0, c) = (c == static_cast<std::size_t>(label) ? 1.0 : 0.0) - std::exp(logp(0, c));
  return run_backward(spec, params, x, trace, std::move(delta));
}

ParamVector backprop(const ModelSpec& spec, const ParamVector& params, const Matrix& inputs,
                     const Matrix& dlogits) {
  if (dlogits.rows != inputs.rows || dlogits.cols != spec.num_classes())
    throw ContractError("dlogits shape does not match the batch");
  auto trace = run_forward(spec, params, inputs);
  return run_backward(spec, params, inputs, trace, dlogits);
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr) {
  if (params.size() != grad.size())
    throw ContractError("sgd_step: parameter and gradient lengths differ");
  ParamVector out = params;
  for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] -= lr * grad.values[k];
  return out;
}

std::vector<int> predict(const ModelSpec& spec, const ParamVector& params, const Matrix& inputs) {
  const Matrix logits = forward(spec, params, inputs);
  std::vector<int> out(logits.rows);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::vector<double> confidence_costs(const ModelSpec& spec, const ParamVector& params,
                                     const Matrix& inputs) {
  const Matrix logp = log_softmax(forward(spec, params, inputs));
  std::vector<double> costs(logp.rows);
  for (std::size_t r = 0; r < logp.rows; ++r) {
    auto row = logp.row(r);
    costs[r] = -*std::max_element(row.begin(), row.end());
  }
  return costs;
}

double mean_confidence_cost(const ModelSpec& spec, const ParamVector& params,
                            const Matrix& inputs) {
  const auto costs = confidence_costs(spec, params, inputs);
  return std::accumulate(costs.begin(), costs.end(), 0.0) / static_cast<double>(costs.size());
}

double median_confidence_cost(const ModelSpec& spec, const ParamVector& params,
                              const Matrix& inputs) {
  auto costs = confidence_costs(spec, params, inputs);
  if (costs.empty()) throw ContractError("median of an empty batch");
  const std::size_t mid = costs.size() / 2;
  std::nth_element(costs.begin(), costs.begin() + static_cast<std::ptrdiff_t>(mid), costs.end());
  const double hi = costs[mid];
  if (costs.size() % 2 == 1) return hi;
  const double lo = *std::max_element(costs.begin(), costs.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace mob
