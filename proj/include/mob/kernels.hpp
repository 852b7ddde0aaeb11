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

// Dense layer kernels. All matrices are row-major.
//
// Two implementations with the same signatures: `reference` is plain
// serial code and `parallel` splits the independent output elements across
// OpenMP threads. Every output element is accumulated in the same order by
// both, so their results are bit-identical; the tests rely on that.

#include <cstddef>
#include <span>

namespace mob::kernels {

struct DenseShape {
  std::size_t rows;  // batch size
  std::size_t in;
  std::size_t out;
};

namespace reference {

/// y[r][o] = b[o] + sum_i w[o][i] * x[r][i]
void dense_forward(DenseShape s, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y);

/// dw[o][i] = sum_r dy[r][o] * x[r][i];  db[o] = sum_r dy[r][o]
void dense_weight_grad(DenseShape s, std::span<const double> dy, std::span<const double> x,
                       std::span<double> dw, std::span<double> db);

/// dx[r][i] = sum_o dy[r][o] * w[o][i]
void dense_input_grad(DenseShape s, std::span<const double> dy, std::span<const double> w,
                      std::span<double> dx);

}  // namespace reference

namespace parallel {

void dense_forward(DenseShape s, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y);
void dense_weight_grad(DenseShape s, std::span<const double> dy, std::span<const double> x,
                       std::span<double> dw, std::span<double> db);
void dense_input_grad(DenseShape s, std::span<const double> dy, std::span<const double> w,
                      std::span<double> dx);

/// Number of threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace parallel

}  // namespace mob::kernels
