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

#include "mob/metrics.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace mob {

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (labels.empty()) throw ContractError("empty evaluation set");
  if (predicted.size() != labels.size()) throw ContractError("prediction/label count mismatch");
  std::size_t hit = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) hit += predicted[k] == labels[k];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

Metrics summarize(const AccuracyMatrix& a) {
  if (a.empty()) throw ContractError("empty accuracy matrix");
  const std::size_t tasks = a.back().size();
  if (tasks == 0 || a.size() != tasks) throw ContractError("accuracy matrix must be square with a complete final row");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].size() <= i) throw ContractError("accuracy matrix row " + std::to_string(i) + " is incomplete");

  Metrics m;
  m.final_accuracies = a.back();
  m.avg_accuracy = std::accumulate(a.back().begin(), a.back().end(), 0.0) / static_cast<double>(tasks);
  if (tasks >= 2) {
    double total = 0.0;
    for (std::size_t j = 0; j + 1 < tasks; ++j) {
      double best = a[j][j];
      for (std::size_t i = j; i < tasks; ++i) best = std::max(best, a[i][j]);
      total += best - a.back()[j];
    }
    m.forgetting = total / static_cast<double>(tasks - 1);
  }
  return m;
}

std::vector<double> win_shares(const std::vector<std::vector<std::int64_t>>& win_counts) {
  std::vector<double> shares;
  std::int64_t total = 0;
  for (const auto& row : win_counts) {
    if (shares.size() < row.size()) shares.resize(row.size(), 0.0);
    for (std::size_t e = 0; e < row.size(); ++e) {
      shares[e] += static_cast<double>(row[e]);
      total += row[e];
    }
  }
  if (total > 0)
    for (double& s : shares) s /= static_cast<double>(total);
  return shares;
}

ChiSquared uniformity_test(std::span<const std::int64_t> counts) {
  if (counts.size() < 2) throw ContractError("uniformity test needs at least two categories");
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
  if (total <= 0.0) throw ContractError("uniformity test needs at least one observation");
  const double expected = total / static_cast<double>(counts.size());
  ChiSquared r;
  for (auto c : counts) r.statistic += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  return r;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  r.n = values.size();
  if (values.empty()) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ContractError("Welch test needs at least two values per group");
  const MeanStd ma = mean_std(a);
  const MeanStd mb = mean_std(b);
  const double va = ma.std * ma.std / static_cast<double>(ma.n);
  const double vb = mb.std * mb.std / static_cast<double>(mb.n);
  WelchResult r;
  if (va + vb == 0.0) {
    if (ma.mean == mb.mean) return r;
    r.t = ma.mean > mb.mean ? std::numeric_limits<double>::infinity()
                            : -std::numeric_limits<double>::infinity();
    r.dof = static_cast<double>(ma.n + mb.n - 2);
    r.p_two_sided = 0.0;
    return r;
  }
  r.t = (ma.mean - mb.mean) / std::sqrt(va + vb);
  r.dof = (va + vb) * (va + vb) /
          (va * va / static_cast<double>(ma.n - 1) + vb * vb / static_cast<double>(mb.n - 1));
  boost::math::students_t dist(r.dof);
  r.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

std::vector<MethodAggregate> aggregate(std::span<const RunSummary> runs) {
  std::vector<MethodAggregate> out;
  for (const RunSummary& r : runs) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& m) { return m.method == r.method; });
    if (it == out.end()) {
      out.push_back(MethodAggregate{r.method, {}, {}, {}});
      it = out.end() - 1;
    }
    it->seeds.push_back(r.seed);
  }
  std::set<std::uint64_t> reference;
  for (auto& m : out) {
    std::set<std::uint64_t> seeds(m.seeds.begin(), m.seeds.end());
    if (seeds.size() != m.seeds.size()) throw ContractError("duplicate seed for method " + m.method);
    if (reference.empty()) reference = seeds;
    else if (seeds != reference) throw ContractError("method " + m.method + " was run on a different seed set");
    std::vector<double> acc;
    std::vector<double> fgt;
    for (const RunSummary& r : runs) {
      if (r.method != m.method) continue;
      acc.push_back(r.avg_accuracy);
      if (r.forgetting) fgt.push_back(*r.forgetting);
    }
    m.avg_accuracy = mean_std(acc);
    m.forgetting = mean_std(fgt);
  }
  return out;
}

}  // namespace mob
