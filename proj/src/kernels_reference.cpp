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

namespace mob::kernels::reference {

void dense_forward(DenseShape s, std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> y) {
  assert(x.size() == s.rows * s.in && w.size() == s.out * s.in);
  assert(b.size() == s.out && y.size() == s.rows * s.out);
  for (std::size_t r = 0; r < s.rows; ++r) {
    const double* xr = x.data() + r * s.in;
    for (std::size_t o = 0; o < s.out; ++o) {
      const double* wo = w.data() + o * s.in;
      double acc = 0.0;
      for (std::size_t i = 0; i < s.in; ++i) acc += wo[i] * xr[i];
      y[r * s.out + o] = acc + b[o];
    }
  }
}

void dense_weight_grad(DenseShape s, std::span<const double> dy, std::span<const double> x,
                       std::span<double> dw, std::span<double> db) {
  assert(dy.size() == s.rows * s.out && x.size() == s.rows * s.in);
  assert(dw.size() == s.out * s.in && db.size() == s.out);
  for (std::size_t o = 0; o < s.out; ++o) {
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
  for (std::size_t r = 0; r < s.rows; ++r) {
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

}  // namespace mob::kernels::reference
