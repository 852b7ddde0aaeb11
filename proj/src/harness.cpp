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

#include "mob/harness.hpp"

#include <algorithm>

namespace mob {

MobLearner::MobLearner(const MobConfig& config, std::size_t input_dim, std::size_t num_classes,
                       Routing routing)
    : engine_(config, input_dim, num_classes, routing) {}

StepLog MobLearner::train(const Examples& batch) { return engine_.step(batch); }

std::vector<ConsolidationEvent> MobLearner::end_task() {
  if (engine_.config().boundary_mode == BoundaryMode::explicit_boundary)
    return engine_.explicit_boundary();
  for (auto& a : engine_.mutable_agents()) a.wins_this_task = 0;
  return {};
}

std::vector<int> MobLearner::predict(const Examples& batch, EvalRouting routing) const {
  const int expert = engine_.route_for_eval(batch, routing);
  const ExpertAgent& a = engine_.agents()[static_cast<std::size_t>(expert)];
  return mob::predict(a.spec, a.params, batch.inputs);
}

namespace {

Examples slice(const Examples& ex, std::size_t begin, std::size_t n) {
  Examples out;
  out.inputs = Matrix(n, ex.inputs.cols);
  std::copy_n(ex.inputs.data.begin() + static_cast<std::ptrdiff_t>(begin * ex.inputs.cols),
              n * ex.inputs.cols, out.inputs.data.begin());
  out.labels.assign(ex.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    ex.labels.begin() + static_cast<std::ptrdiff_t>(begin + n));
  return out;
}

}  // namespace

std::vector<double> evaluate(const Learner& learner, const TaskStream& stream,
                             std::size_t batch_size, EvalRouting routing) {
  if (batch_size == 0) throw ContractError("evaluation batch size must be positive");
  std::vector<double> row;
  for (const Task& task : stream.tasks) {
    const Examples& eval = task.eval;
    if (eval.size() == 0) throw ContractError("empty evaluation set");
    std::size_t hit = 0;
    for (std::size_t b = 0; b < eval.size(); b += batch_size) {
      const Examples chunk = slice(eval, b, std::min(batch_size, eval.size() - b));
      const auto pred = learner.predict(chunk, routing);
      for (std::size_t k = 0; k < pred.size(); ++k) hit += pred[k] == chunk.labels[k];
    }
    row.push_back(static_cast<double>(hit) / static_cast<double>(eval.size()));
  }
  return row;
}

RunSummary run_learner(Learner& learner, const TaskStream& stream, const RunOptions& options) {
  RunSummary summary;
  summary.method = options.method;
  summary.seed = options.seed;
  summary.config_hash = options.config_hash;
  const auto n_experts = static_cast<std::size_t>(learner.n_experts());
  std::size_t step = 0;
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    summary.win_counts.emplace_back(n_experts, 0);
    for (const Batch& batch : stream.tasks[t].batches) {
      const StepLog log = learner.train(batch.examples);
      ++summary.win_counts[t][static_cast<std::size_t>(log.winner)];
      for (const auto& e : log.events) summary.events.push_back({step, e.expert, e.reason});
      if (options.on_step) options.on_step(log);
      ++step;
    }
    for (const auto& e : learner.end_task()) summary.events.push_back({step, e.expert, e.reason});
    summary.accuracy_matrix.push_back(
        evaluate(learner, stream, options.eval_batch_size, options.eval_routing));
    learner.after_task(t, stream, summary);
  }
  const Metrics m = summarize(summary.accuracy_matrix);
  summary.avg_accuracy = m.avg_accuracy;
  summary.forgetting = m.forgetting;
  summary.final_accuracies = m.final_accuracies;
  return summary;
}

}  // namespace mob
