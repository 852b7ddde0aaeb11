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


#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mob/ewc.hpp"
#include "test_util.hpp"

using namespace mob;
using mob::testing::random_examples;
using mob::testing::random_params;
using mob::testing::small_spec;

namespace {

EwcState manual_state(std::vector<double> fisher, std::vector<double> anchor, double lambda) {
  EwcState s = EwcState::fresh(fisher.size(), lambda);
  s.fisher.values = std::move(fisher);
  s.anchor = ParamVector{std::move(anchor)};
  s.consolidation_count = 1;
  return s;
}

}  // namespace

TEST_CASE("Fisher of a single example is its squared log-prob gradient") {
  Rng rng(1);
  const ModelSpec spec = small_spec({6, 5, 4});
  const ParamVector p = random_params(spec, rng);
  const std::vector<Examples> one{random_examples(1, 6, 4, rng)};
  const FisherDiag f = estimate_fisher(spec, p, one, 512, rng);
  const ParamVector g = per_example_logprob_grad(spec, p, one[0].inputs.row(0), one[0].labels[0]);
  REQUIRE(f.size() == g.size());
  for (std::size_t k = 0; k < g.size(); ++k) CHECK(f.values[k] == g.values[k] * g.values[k]);
}

TEST_CASE("Fisher of two examples is the two-term average of squares") {
  Rng rng(2);
  const ModelSpec spec = small_spec({6, 5, 4});
  const ParamVector p = random_params(spec, rng);
  // one example per batch, to exercise the multi-batch pool
  const std::vector<Examples> two{random_examples(1, 6, 4, rng), random_examples(1, 6, 4, rng)};
  const FisherDiag f = estimate_fisher(spec, p, two, 512, rng);
  const ParamVector g1 = per_example_logprob_grad(spec, p, two[0].inputs.row(0), two[0].labels[0]);
  const ParamVector g2 = per_example_logprob_grad(spec, p, two[1].inputs.row(0), two[1].labels[0]);
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double want = (g1.values[k] * g1.values[k] + g2.values[k] * g2.values[k]) / 2.0;
    CHECK(f.values[k] == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("Fisher subsampling draws whole examples") {
  Rng rng(3);
  const ModelSpec spec = small_spec({6, 5, 4});
  const ParamVector p = random_params(spec, rng);
  const std::vector<Examples> batch{random_examples(2, 6, 4, rng)};
  const FisherDiag f = estimate_fisher(spec, p, batch, 1, rng);
  bool matches_one = false;
  for (std::size_t r = 0; r < 2; ++r) {
    const ParamVector g = per_example_logprob_grad(spec, p, batch[0].inputs.row(r), batch[0].labels[r]);
    bool all = true;
    for (std::size_t k = 0; k < g.size(); ++k) all = all && f.values[k] == g.values[k] * g.values[k];
    matches_one = matches_one || all;
  }
  CHECK(matches_one);
}

TEST_CASE("Fisher entries are non-negative and empty data is rejected") {
  Rng rng(4);
  const ModelSpec spec = small_spec({10, 8, 5});
  for (int t = 0; t < 5; ++t) {
    const ParamVector p = random_params(spec, rng, 2.0);
    const std::vector<Examples> data{random_examples(16, 10, 5, rng)};
    const FisherDiag f = estimate_fisher(spec, p, data, 8, rng);
    CHECK(std::all_of(f.values.begin(), f.values.end(), [](double v) { return v >= 0.0; }));
  }
  const ParamVector p = random_params(spec, rng);
  CHECK_THROWS_WITH_AS(estimate_fisher(spec, p, std::vector<Examples>{}, 8, rng),
                       "no consolidation data", DataError);
  const EwcState s = EwcState::fresh(spec.param_count(), 1.0);
  CHECK_THROWS_AS(consolidate(s, spec, p, std::vector<Examples>{}, 8, rng), DataError);
}

TEST_CASE("consolidation accumulates additively and snapshots the anchor") {
  Rng rng(5);
  const ModelSpec spec = small_spec({8, 6, 4});
  const ParamVector p = random_params(spec, rng);
  const std::vector<Examples> reservoir{random_examples(10, 8, 4, rng), random_examples(7, 8, 4, rng)};
  const EwcState zero = EwcState::fresh(spec.param_count(), 3.0);
  CHECK(zero.consolidation_count == 0);
  CHECK_FALSE(zero.anchor.has_value());
  CHECK(fisher_magnitude(zero) == 0.0);

  Rng r1(77), r2(77);
  const FisherDiag fresh = estimate_fisher(spec, p, reservoir, 512, r1);
  const EwcState once = consolidate(zero, spec, p, reservoir, 512, r2);
  CHECK(once.fisher.values == fresh.values);
  REQUIRE(once.anchor.has_value());
  CHECK(*once.anchor == p);
  CHECK(once.consolidation_count == 1);

  const EwcState twice = consolidate(once, spec, p, reservoir, 512, r2);
  CHECK(twice.consolidation_count == 2);
  for (std::size_t k = 0; k < fresh.size(); ++k) CHECK(twice.fisher.values[k] == 2.0 * fresh.values[k]);

  EwcState k_times = zero;
  for (int k = 0; k < 4; ++k) k_times = consolidate(k_times, spec, p, reservoir, 512, r2);
  CHECK(fisher_magnitude(k_times) == doctest::Approx(4.0 * fisher_magnitude(once)).epsilon(1e-12));
}

TEST_CASE("Fisher magnitude never decreases across consolidations") {
  Rng rng(6);
  const ModelSpec spec = small_spec({8, 6, 4});
  EwcState s = EwcState::fresh(spec.param_count(), 1.0);
  double last = fisher_magnitude(s);
  for (int k = 0; k < 5; ++k) {
    const ParamVector p = random_params(spec, rng);
    const std::vector<Examples> data{random_examples(8, 8, 4, rng)};
    const EwcState next = consolidate(s, spec, p, data, 4, rng);
    for (std::size_t j = 0; j < next.fisher.size(); ++j) CHECK(next.fisher.values[j] >= s.fisher.values[j]);
    CHECK(fisher_magnitude(next) >= last);
    last = fisher_magnitude(next);
    s = next;
  }
}

TEST_CASE("EWC penalty worked examples") {
  SUBCASE("single parameter") {
    const EwcState s = manual_state({2.0}, {0.0}, 1.0);
    const PenaltyGrad pg = ewc_penalty_and_grad(s, ParamVector{{0.5}});
    CHECK(pg.penalty == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(pg.grad.values[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("at the anchor") {
    const EwcState s = manual_state({1.0, 2.0, 3.0}, {0.1, -0.2, 0.3}, 10.0);
    const PenaltyGrad pg = ewc_penalty_and_grad(s, *s.anchor);
    CHECK(pg.penalty == 0.0);
    for (double g : pg.grad.values) CHECK(g == 0.0);
  }
  SUBCASE("before any consolidation") {
    const EwcState s = EwcState::fresh(3, 1e9);
    const PenaltyGrad pg = ewc_penalty_and_grad(s, ParamVector{{5.0, 6.0, 7.0}});
    CHECK(pg.penalty == 0.0);
    for (double g : pg.grad.values) CHECK(g == 0.0);
  }
  SUBCASE("zero Fisher") {
    const EwcState s = manual_state({0.0, 0.0}, {0.0, 0.0}, 5.0);
    CHECK(ewc_penalty_and_grad(s, ParamVector{{1.0, -1.0}}).penalty == 0.0);
  }
  SUBCASE("length mismatch") {
    const EwcState s = manual_state({1.0}, {0.0}, 1.0);
    CHECK_THROWS_AS(ewc_penalty_and_grad(s, ParamVector{{1.0, 2.0}}), ContractError);
  }
  SUBCASE("fisher magnitude") {
    CHECK(fisher_magnitude(manual_state({1.0, 2.0, 3.0}, {0, 0, 0}, 1.0)) == 6.0);
  }
}

TEST_CASE("EWC penalty gradient agrees with central differences") {
  Rng rng(8);
  const ModelSpec spec = small_spec({7, 5, 3});
  for (int count : {0, 1, 3}) {
    CAPTURE(count);
    EwcState s = EwcState::fresh(spec.param_count(), 2.5);
    for (int k = 0; k < count; ++k) {
      const std::vector<Examples> data{random_examples(6, 7, 3, rng)};
      s = consolidate(s, spec, random_params(spec, rng), data, 512, rng);
    }
    const ParamVector p = random_params(spec, rng);
    const PenaltyGrad pg = ewc_penalty_and_grad(s, p);
    CHECK(pg.penalty >= 0.0);
    auto f = [&](const ParamVector& q) { return ewc_penalty_and_grad(s, q).penalty; };
    std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
    // the penalty is quadratic, so a wide step has no truncation error and
    // keeps cancellation in the difference well below the tolerance
    for (int i = 0; i < 50; ++i) {
      const std::size_t k = pick(rng);
      const double fd = mob::testing::central_diff(f, p, k, 1e-3);
      CHECK(mob::testing::rel_err(pg.grad.values[k], fd, 1e-9) < 1e-6);
    }
  }
}

TEST_CASE("EWC penalty is invariant under a joint permutation") {
  Rng rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.0, 2.0);
  std::vector<double> f(20), a(20), p(20);
  for (std::size_t k = 0; k < 20; ++k) {
    f[k] = pos(rng);
    a[k] = u(rng);
    p[k] = u(rng);
  }
  std::vector<std::size_t> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> fp(20), ap(20), pp(20);
  for (std::size_t k = 0; k < 20; ++k) {
    fp[k] = f[perm[k]];
    ap[k] = a[perm[k]];
    pp[k] = p[perm[k]];
  }
  const double x = ewc_penalty_and_grad(manual_state(f, a, 3.0), ParamVector{p}).penalty;
  const double y = ewc_penalty_and_grad(manual_state(fp, ap, 3.0), ParamVector{pp}).penalty;
  CHECK(x == doctest::Approx(y).epsilon(1e-14));
  CHECK(x > 0.0);
}

TEST_CASE("implicit EWC step") {
  SUBCASE("equals plain SGD while the Fisher is zero") {
    const EwcState s = EwcState::fresh(3, 1e9);
    const ParamVector p{{1.0, -2.0, 0.5}}, g{{0.3, 0.1, -4.0}};
    CHECK(implicit_ewc_step(p, g, s, 0.05) == sgd_step(p, g, 0.05));
  }
  SUBCASE("solves the proximal problem exactly") {
    // minimiser of g_task.(x - p) + lambda/2 F (x - a)^2 + |x - p|^2 / (2 lr)
    const EwcState s = manual_state({0.0, 0.5, 2.0}, {0.2, -0.1, 1.0}, 40.0);
    const ParamVector p{{1.0, 0.3, -0.4}}, task{{0.7, -1.2, 0.25}};
    const double lr = 0.1;
    ParamVector combined = task;
    const PenaltyGrad pen = ewc_penalty_and_grad(s, p);
    for (std::size_t k = 0; k < 3; ++k) combined.values[k] += pen.grad.values[k];
    const ParamVector x = implicit_ewc_step(p, combined, s, lr);
    for (std::size_t k = 0; k < 3; ++k) {
      const double stationarity = task.values[k] +
                                  s.lambda_ewc * s.fisher.values[k] * (x.values[k] - s.anchor->values[k]) +
                                  (x.values[k] - p.values[k]) / lr;
      CHECK(std::abs(stationarity) < 1e-12);
    }
  }
  SUBCASE("stays bounded for an enormous penalty weight") {
    const EwcState s = manual_state({1.0}, {0.0}, 1e12);
    ParamVector p{{1.0}};
    for (int i = 0; i < 100; ++i) {
      ParamVector g = ewc_penalty_and_grad(s, p).grad;
      p = implicit_ewc_step(p, g, s, 0.05);
      CHECK(std::abs(p.values[0]) <= 1.0);
    }
    CHECK(std::abs(p.values[0]) < 1e-6);
  }
}
