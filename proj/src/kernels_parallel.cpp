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

#include "mob/kernels.hpp"

#include <cassert>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mob::kernels::parallel {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kMinParallelWork = 1 << 15;
}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void dense_forward(DenseShape s, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y) {
  assert(x.size() == s.rows * s.in && w.size() == s.out * s.in);
  assert(b.size() == s.out && y.size() == s.rows * s.out);
  const auto cells = static_cast<std::int64_t>(s.rows * s.out);
  const bool big = s.rows * s.out * s.in >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t c = 0; c < cells; ++c) {
    const std::size_t r = static_cast<std::size_t>(c) / s.out;
    const std::size_t o = static_cast<std::size_t>(c) % s.out;
    const double* xr = x.data() + r * s.in;
    const double* wo = w.data() + o * s.in;
    double acc = 0.0;
    for (std::size_t i = 0; i < s.in; ++i) acc += wo[i] * xr[i];
    y[r * s.out + o] = acc + b[o];
  }
}

void dense_weight_grad(DenseShape s, std::span<const double> dy, std::span<const double> x,
                       std::span<double> dw, std::span<double> db) {
  assert(dy.size() == s.rows * s.out && x.size() == s.rows * s.in);
  assert(dw.size() == s.out * s.in && db.size() == s.out);
  const auto outs = static_cast<std::int64_t>(s.out);
  const bool big = s.rows * s.out * s.in >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t oi = 0; oi < outs; ++oi) {
    const auto o = static_cast<std::size_t>(oi);
    double* dwo = dw.data() + o * s.in;
    for (std::size_t i = 0; i < s.in; ++i) dwo[i] = 0.0;
    double bias = 0.0;
    for (std::size_t r = 0; r < s.rows; ++r) {
      const double g = dy[r * s.out + o];
      bias += g;
      if (g == 0.0) continue;
      const double* xr = x.data() + r * s.in;
      for (std::size_t i = 0; i < s.in; ++i) dwo[i] += g * xr[i];
    }
    db[o] = bias;
  }
}

void dense_input_grad(DenseShape s, std::span<const double> dy, std::span<const double> w,
                      std::span<double> dx) {
  assert(dy.size() == s.rows * s.out && w.size() == s.out * s.in);
  assert(dx.size() == s.rows * s.in);
  if (s.rows == 1) {
    // Single example: split the input columns instead of the rows.
    const auto ins = static_cast<std::int64_t>(s.in);
    const bool big = s.out * s.in >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (std::int64_t ii = 0; ii < ins; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      double acc = 0.0;
      for (std::size_t o = 0; o < s.out; ++o) {
        const double g = dy[o];
        if (g == 0.0) continue;
        acc += g * w[o * s.in + i];
      }
      dx[i] = acc;
    }
    return;
  }
  const auto rows = static_cast<std::int64_t>(s.rows);
  const bool big = s.rows * s.out * s.in >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t ri = 0; ri < rows; ++ri) {
    const auto r = static_cast<std::size_t>(ri);
    double* dxr = dx.data() + r * s.in;
    for (std::size_t i = 0; i < s.in; ++i) dxr[i] = 0.0;
    for (std::size_t o = 0; o < s.out; ++o) {
      const double g = dy[r * s.out + o];
      if (g == 0.0) continue;
      const double* wo = w.data() + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) dxr[i] += g * wo[i];
    }
  }
}

}  // namespace mob::kernels::parallel
