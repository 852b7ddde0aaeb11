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

// Accuracy matrices, the average-accuracy / forgetting summary, and cross-seed statistics.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mob/engine.hpp"

namespace mob {

/// rows[i][j]: accuracy on task j's eval set right after finishing task i.
using AccuracyMatrix = std::vector<std::vector<double>>;

/// Fraction of predictions equal to the labels.
double accuracy(std::span<const int> predicted, std::span<const int> labels);

struct LoggedEvent {
  std::size_t step = 0;
  int expert = 0;
  Trigger reason = Trigger::explicit_boundary;
};

struct RunSummary {
  std::string method;
  std::uint64_t seed = 0;
  std::string config_hash;
  double avg_accuracy = 0.0;
  std::optional<double> forgetting;  // absent with fewer than two tasks
  AccuracyMatrix accuracy_matrix;
  std::vector<double> final_accuracies;
  std::vector<std::vector<std::int64_t>> win_counts;  // [task][expert]
  std::vector<LoggedEvent> events;
  std::map<std::string, double> diagnostics;
};

struct Metrics {
  double avg_accuracy = 0.0;
  std::optional<double> forgetting;
  std::vector<double> final_accuracies;
};

/// avg = mean_j A[T-1][j]; forgetting = mean_{j<T-1} (max_{i>=j} A[i][j] - A[T-1][j]).
Metrics summarize(const AccuracyMatrix& a);

/// Share of all wins taken by each expert.
std::vector<double> win_shares(const std::vector<std::vector<std::int64_t>>& win_counts);

/// Pearson chi-squared test of the pooled win counts against a uniform split.
struct ChiSquared {
  double statistic = 0.0;
  double p_value = 1.0;
};
ChiSquared uniformity_test(std::span<const std::int64_t> counts);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample std, n-1 denominator
  std::size_t n = 0;
};
MeanStd mean_std(std::span<const double> values);

struct WelchResult {
  double t = 0.0;
  double dof = 0.0;
  double p_two_sided = 1.0;
};
/// Welch's unequal-variance t-test. Zero variance on both sides is treated as
/// exact separation (p = 0) when the means differ and identity (p = 1) otherwise.
WelchResult welch_t(std::span<const double> a, std::span<const double> b);

struct MethodAggregate {
  std::string method;
  MeanStd avg_accuracy;
  MeanStd forgetting;
  std::vector<std::uint64_t> seeds;
};

/// Groups summaries by method. Every method must cover the same seed set.
std::vector<MethodAggregate> aggregate(std::span<const RunSummary> runs);

}  // namespace mob
