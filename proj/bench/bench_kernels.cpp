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

// Serial reference kernels vs the OpenMP kernels, plus a full training step.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mob/kernels.hpp"
#include "mob/nn.hpp"

namespace {

using mob::kernels::DenseShape;

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

DenseShape shape_from(const benchmark::State& state) {
  return {static_cast<std::size_t>(state.range(0)), 784, 256};
}

template <auto Kernel>
void BM_Forward(benchmark::State& state) {
  const auto s = shape_from(state);
  const auto x = random_vector(s.rows * s.in, 1);
  const auto w = random_vector(s.out * s.in, 2);
  const auto b = random_vector(s.out, 3);
  std::vector<double> y(s.rows * s.out);
  for (auto _ : state) {
    Kernel(s, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(s.rows * s.in * s.out));
}

template <auto Kernel>
void BM_WeightGrad(benchmark::State& state) {
  const auto s = shape_from(state);
  const auto dy = random_vector(s.rows * s.out, 1);
  const auto x = random_vector(s.rows * s.in, 2);
  std::vector<double> dw(s.out * s.in);
  std::vector<double> db(s.out);
  for (auto _ : state) {
    Kernel(s, dy, x, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(s.rows * s.in * s.out));
}

template <auto Kernel>
void BM_InputGrad(benchmark::State& state) {
  const auto s = shape_from(state);
  const auto dy = random_vector(s.rows * s.out, 1);
  const auto w = random_vector(s.out * s.in, 2);
  std::vector<double> dx(s.rows * s.in);
  for (auto _ : state) {
    Kernel(s, dy, w, dx);
    benchmark::DoNotOptimize(dx.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(s.rows * s.in * s.out));
}

namespace ref = mob::kernels::reference;
namespace par = mob::kernels::parallel;

BENCHMARK_TEMPLATE(BM_Forward, ref::dense_forward)->Arg(1)->Arg(32)->Arg(256);
BENCHMARK_TEMPLATE(BM_Forward, par::dense_forward)->Arg(1)->Arg(32)->Arg(256);
BENCHMARK_TEMPLATE(BM_WeightGrad, ref::dense_weight_grad)->Arg(1)->Arg(32)->Arg(256);
BENCHMARK_TEMPLATE(BM_WeightGrad, par::dense_weight_grad)->Arg(1)->Arg(32)->Arg(256);
BENCHMARK_TEMPLATE(BM_InputGrad, ref::dense_input_grad)->Arg(1)->Arg(32)->Arg(256);
BENCHMARK_TEMPLATE(BM_InputGrad, par::dense_input_grad)->Arg(1)->Arg(32)->Arg(256);

void BM_LossAndGrad(benchmark::State& state) {
  mob::ModelSpec spec;
  spec.init_seed = 7;
  const auto params = mob::init_params(spec);
  mob::Examples batch;
  batch.inputs = mob::Matrix(static_cast<std::size_t>(state.range(0)), 784);
  batch.inputs.data = random_vector(batch.inputs.data.size(), 4);
  for (std::size_t r = 0; r < batch.inputs.rows; ++r) batch.labels.push_back(static_cast<int>(r % 10));
  for (auto _ : state) benchmark::DoNotOptimize(mob::loss_and_grad(spec, params, batch).loss);
  state.counters["threads"] = par::max_threads();
}
BENCHMARK(BM_LossAndGrad)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
