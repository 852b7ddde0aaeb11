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

// Single-item reverse VCG auction (lowest cost wins, pays the second-lowest bid).
//
// The auction keeps no state between calls: everything it uses is passed in,
// everything it computes is returned.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mob/common.hpp"

namespace mob {

struct Bid {
  int expert_id = 0;
  double exec_cost = 0.0;
  double forget_cost = 0.0;
  double total = 0.0;

  /// total = alpha * exec_cost + beta * forget_cost
  static Bid make(int expert_id, double exec_cost, double forget_cost, double alpha, double beta);
};

struct AuctionResult {
  int winner = -1;
  std::optional<double> payment;  // absent with a single bidder
  std::vector<Bid> all_bids;      // sorted by expert_id
  bool tie_broken = false;
};

/// Winner is the lowest total; exact ties are broken uniformly with `rng`,
/// which is only advanced when a tie occurs.
AuctionResult run_auction(std::span<const Bid> bids, Rng& rng);

/// Reverse-auction utility for `expert`: payment - true_cost if it wins, else 0.
double auction_utility(const AuctionResult& result, int expert, double true_cost);

struct DsicReport {
  std::int64_t violations = 0;
  std::int64_t trials = 0;
};

/// Random cost profiles in [0,10]^N and random unilateral deviations; counts
/// deviations that strictly beat truthful bidding under the same opponents and
/// the same tie-breaking randomness. Half the draws land on the integer grid
/// so exact ties are exercised.
DsicReport check_dsic(int n_experts, std::int64_t n_trials, Rng& rng);

/// Every cost profile in grid^N and every unilateral deviation within the grid.
DsicReport check_dsic_grid(int n_experts, std::span<const double> grid, std::uint64_t tie_seed);

}  // namespace mob
