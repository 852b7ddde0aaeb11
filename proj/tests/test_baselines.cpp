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


#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mob/baselines.hpp"
#include "mob/data.hpp"
#include "test_util.hpp"

using namespace mob;
using mob::testing::random_examples;

namespace {

constexpr std::size_t kDim = 6;

MobConfig tiny_config(std::uint64_t seed = 0) {
  MobConfig c;
  c.seed = seed;
  c.hidden_layers = {5};
  c.n_experts = 3;
  return c;
}

}  // namespace

TEST_CASE("baseline names") {
  for (auto k : {BaselineKind::naive_finetune, BaselineKind::random_assignment,
                 BaselineKind::monolithic_ewc, BaselineKind::gated_moe})
    CHECK(parse_baseline(to_string(k)) == k);
  CHECK_FALSE(parse_baseline("mob").has_value());
}

TEST_CASE("random assignment spreads wins uniformly") {
  Rng rng(1);
  MobConfig c = tiny_config(1);
  c.n_experts = 4;
  MobEngine engine(c, kDim, 10, Routing::random);
  std::vector<std::int64_t> wins(4, 0);
  const int steps = 6000;
  const Examples batch = random_examples(4, kDim, 10, rng);
  for (int s = 0; s < steps; ++s) {
    const StepLog log = engine.step(batch);
    CHECK(log.bids.empty());
    ++wins[static_cast<std::size_t>(log.winner)];
  }
  for (auto w : wins) CHECK(std::abs(w / static_cast<double>(steps) - 0.25) < 0.05);
  CHECK(uniformity_test(wins).p_value > 1e-3);
}

TEST_CASE("random assignment is reproducible from the seed") {
  Rng rng(2);
  const Examples batch = random_examples(4, kDim, 10, rng);
  MobEngine a(tiny_config(3), kDim, 10, Routing::random), b(tiny_config(3), kDim, 10, Routing::random);
  for (int s = 0; s < 100; ++s) CHECK(a.step(batch).winner == b.step(batch).winner);
}

TEST_CASE("single-model baselines") {
  Rng rng(3);
  const MobConfig c = tiny_config();
  SingleModelLearner naive(c, kDim, 10, false), mono(c, kDim, 10, true);
  for (int task = 0; task < 3; ++task) {
    for (int s = 0; s < 5; ++s) {
      const Examples b = random_examples(8, kDim, 10, rng);
      CHECK(naive.train(b).winner == 0);
      mono.train(b);
    }
    CHECK(naive.end_task().empty());
    const auto events = mono.end_task();
    REQUIRE(events.size() == 1);
    CHECK(events[0].reason == Trigger::explicit_boundary);
    CHECK(mono.agent().ewc.consolidation_count == task + 1);
  }
  CHECK(naive.agent().ewc.consolidation_count == 0);
  CHECK(fisher_magnitude(naive.agent().ewc) == 0.0);
  CHECK(naive.n_experts() == 1);
}

TEST_CASE("gate is a distribution per row") {
  Rng rng(4);
  GatedMoeLearner g(tiny_config(), kDim, 10);
  const Examples b = random_examples(7, kDim, 10, rng);
  const Matrix p = g.gate(b.inputs);
  REQUIRE(p.rows == 7);
  REQUIRE(p.cols == 3);
  for (std::size_t r = 0; r < p.rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.cols; ++i) {
      CHECK(p(r, i) > 0.0);
      s += p(r, i);
    }
    CHECK(s == doctest::Approx(1.0));
  }
  const auto m = g.mean_gate(b.inputs);
  CHECK(std::accumulate(m.begin(), m.end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("dense mixture gradient matches finite differences") {
  Rng rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    GatedMoeLearner g(tiny_config(static_cast<std::uint64_t>(trial)), kDim, 10);
    g.mutable_gater_params() = ParamVector{std::vector<double>(g.gater_params().size())};
    for (double& v : g.mutable_gater_params().values) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    const Examples b = random_examples(5, kDim, 10, rng);
    const auto jg = g.loss_and_grad(b);

    auto gater_loss = [&](const ParamVector& q) {
      GatedMoeLearner h = g;
      h.mutable_gater_params() = q;
      return h.loss_and_grad(b).loss;
    };
    CHECK(mob::testing::worst_fd_error(gater_loss, g.gater_params(), jg.gater, 30, 1e-5, rng) < 1e-4);
    for (std::size_t i = 0; i < g.experts().size(); ++i) {
      auto expert_loss = [&](const ParamVector& q) {
        GatedMoeLearner h = g;
        h.mutable_experts()[i].params = q;
        return h.loss_and_grad(b).loss;
      };
      CHECK(mob::testing::worst_fd_error(expert_loss, g.experts()[i].params, jg.experts[i], 30,
                                         1e-5, rng) < 1e-4);
    }
  }
}

TEST_CASE("top-1 gating trains only the selected expert on each row") {
  Rng rng(6);
  GatedMoeLearner g(tiny_config(), kDim, 10, GatedMoeOptions{GatingMode::top1, false});
  const Examples b = random_examples(5, kDim, 10, rng);
  const auto jg = g.loss_and_grad(b);
  const Matrix gate = g.gate(b.inputs);
  double want = 0.0;
  for (std::size_t r = 0; r < b.size(); ++r) {
    const auto row = gate.row(r);
    const auto top = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    Examples one;
    one.inputs = Matrix(1, kDim);
    std::copy(b.inputs.row(r).begin(), b.inputs.row(r).end(), one.inputs.data.begin());
    one.labels = {b.labels[r]};
    want += mean_cross_entropy(g.experts()[top].spec, g.experts()[top].params, one);
  }
  CHECK(jg.loss == doctest::Approx(want / static_cast<double>(b.size())));
  for (std::size_t i = 0; i < g.experts().size(); ++i) {
    auto expert_loss = [&](const ParamVector& q) {
      GatedMoeLearner h = g;
      h.mutable_experts()[i].params = q;
      return h.loss_and_grad(b).loss;
    };
    CHECK(mob::testing::worst_fd_error(expert_loss, g.experts()[i].params, jg.experts[i], 30, 1e-5,
                                       rng) < 1e-4);
  }
}

TEST_CASE("gated mixture consolidates only when asked to") {
  Rng rng(7);
  GatedMoeLearner plain(tiny_config(), kDim, 10);
  GatedMoeLearner ewc(tiny_config(), kDim, 10, GatedMoeOptions{GatingMode::dense, true});
  for (int s = 0; s < 4; ++s) {
    const Examples b = random_examples(8, kDim, 10, rng);
    const double before = plain.loss_and_grad(b).loss;
    const StepLog log = plain.train(b);
    CHECK(log.loss_before == before);
    ewc.train(b);
  }
  CHECK(plain.end_task().empty());
  CHECK(ewc.end_task().size() == 3);
  for (const auto& e : plain.experts()) CHECK(e.ewc.consolidation_count == 0);
  for (const auto& e : ewc.experts()) CHECK(e.ewc.consolidation_count == 1);
}

TEST_CASE("gated mixture lowers its training loss") {
  SyntheticOptions o;
  o.dim = 20;
  o.batches_per_task = 150;
  o.seed = 8;
  const SyntheticStream s = build_synthetic(o);
  MobConfig c = tiny_config();
  c.hidden_layers = {16};
  GatedMoeLearner g(c, o.dim, 10);
  const auto& batches = s.stream.tasks[0].batches;
  const double first = g.loss_and_grad(batches.front().examples).loss;
  for (const Batch& b : batches) g.train(b.examples);
  CHECK(g.loss_and_grad(batches.back().examples).loss < 0.6 * first);
  const auto pred = g.predict(s.stream.tasks[0].eval, EvalRouting::label_free);
  CHECK(accuracy(pred, s.stream.tasks[0].eval.labels) > 0.95);
}

TEST_CASE("total variation distance") {
  CHECK(total_variation({0.5, 0.5}, {0.5, 0.5}) == 0.0);
  CHECK(total_variation({1.0, 0.0}, {0.0, 1.0}) == 1.0);
  CHECK(total_variation({0.7, 0.2, 0.1}, {0.4, 0.4, 0.2}) == doctest::Approx(0.3));
  CHECK_THROWS_AS(total_variation({1.0}, {0.5, 0.5}), ContractError);
}
