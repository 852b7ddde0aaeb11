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

#include "mob/auction.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mob {

Bid Bid::make(int expert_id, double exec_cost, double forget_cost, double alpha, double beta) {
  return Bid{expert_id, exec_cost, forget_cost, alpha * exec_cost + beta * forget_cost};
}

AuctionResult run_auction(std::span<const Bid> bids, Rng& rng) {
  if (bids.empty()) throw ContractError("auction needs at least one bid");
  for (const Bid& b : bids)
    if (!std::isfinite(b.total))
      throw ContractError("non-finite bid from expert " + std::to_string(b.expert_id));

  AuctionResult result;
  result.all_bids.assign(bids.begin(), bids.end());
  std::sort(result.all_bids.begin(), result.all_bids.end(),
            [](const Bid& a, const Bid& b) { return a.expert_id < b.expert_id; });

  const auto& all = result.all_bids;
  double best = all.front().total;
  for (const Bid& b : all) best = std::min(best, b.total);
  std::vector<std::size_t> lowest;
  for (std::size_t k = 0; k < all.size(); ++k)
    if (all[k].total == best) lowest.push_back(k);

  std::size_t win = lowest.front();
  if (lowest.size() > 1) {
    std::uniform_int_distribution<std::size_t> pick(0, lowest.size() - 1);
    win = lowest[pick(rng)];
    result.tie_broken = true;
  }
  result.winner = all[win].expert_id;

  for (std::size_t k = 0; k < all.size(); ++k) {
    if (k == win) continue;
    if (!result.payment || all[k].total < *result.payment) result.payment = all[k].total;
  }
  return result;
}

double auction_utility(const AuctionResult& result, int expert, double true_cost) {
  if (result.winner != expert || !result.payment) return 0.0;
  return *result.payment - true_cost;
}

namespace {

std::vector<Bid> truthful_bids(std::span<const double> costs) {
  std::vector<Bid> bids;
  bids.reserve(costs.size());
  for (std::size_t i = 0; i < costs.size(); ++i)
    bids.push_back(Bid::make(static_cast<int>(i), costs[i], 0.0, 1.0, 0.0));
  return bids;
}

// True when deviating to `deviation` strictly helps `who` against truthful opponents.
bool deviation_profits(std::span<const double> costs, int who, double deviation,
                       const Rng& tie_rng) {
  auto bids = truthful_bids(costs);
  Rng truth_rng = tie_rng;
  const double truthful = auction_utility(run_auction(bids, truth_rng), who, costs[who]);
  bids[who].exec_cost = deviation;
  bids[who].total = deviation;
  Rng dev_rng = tie_rng;
  const double deviant = auction_utility(run_auction(bids, dev_rng), who, costs[who]);
  return deviant > truthful;
}

}  // namespace

DsicReport check_dsic(int n_experts, std::int64_t n_trials, Rng& rng) {
  if (n_experts < 2) throw ContractError("DSIC check needs at least two experts");
  DsicReport report;
  std::uniform_real_distribution<double> cont(0.0, 10.0);
  std::uniform_int_distribution<int> grid(0, 10);
  std::bernoulli_distribution on_grid(0.5);
  std::uniform_int_distribution<int> who_dist(0, n_experts - 1);
  auto draw = [&] { return on_grid(rng) ? static_cast<double>(grid(rng)) : cont(rng); };

  std::vector<double> costs(static_cast<std::size_t>(n_experts));
  for (std::int64_t t = 0; t < n_trials; ++t) {
    for (double& c : costs) c = draw();
    const int who = who_dist(rng);
    double deviation = draw();
    while (deviation == costs[who]) deviation = draw();
    const Rng tie_rng(rng());
    ++report.trials;
    if (deviation_profits(costs, who, deviation, tie_rng)) ++report.violations;
  }
  return report;
}

DsicReport check_dsic_grid(int n_experts, std::span<const double> grid, std::uint64_t tie_seed) {
  if (n_experts < 2) throw ContractError("DSIC check needs at least two experts");
  if (grid.empty()) throw ContractError("empty cost grid");
  DsicReport report;
  const Rng tie_rng(tie_seed);
  std::vector<std::size_t> idx(static_cast<std::size_t>(n_experts), 0);
  std::vector<double> costs(idx.size());
  while (true) {
    for (std::size_t i = 0; i < idx.size(); ++i) costs[i] = grid[idx[i]];
    for (int who = 0; who < n_experts; ++who) {
      for (double deviation : grid) {
        if (deviation == costs[who]) continue;
        ++report.trials;
        if (deviation_profits(costs, who, deviation, tie_rng)) ++report.violations;
      }
    }
    // odometer increment over grid^N
    std::size_t d = 0;
    while (d < idx.size() && ++idx[d] == grid.size()) idx[d++] = 0;
    if (d == idx.size()) break;
  }
  return report;
}

}  // namespace mob
