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

#include "mob/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace mob {

using nlohmann::json;

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"mob", "random", "monolithic_ewc", "gated_moe",
                                              "naive"};
  return names;
}

namespace {

const char* to_string(BoundaryMode m) {
  return m == BoundaryMode::explicit_boundary ? "explicit" : "self_monitor";
}
const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
const char* to_string(EvalRouting r) {
  switch (r) {
    case EvalRouting::label_free: return "labelfree";
    case EvalRouting::label_free_raw: return "labelfree_raw";
    case EvalRouting::oracle: return "oracle";
  }
  return "labelfree";
}
const char* to_string(GatingMode g) { return g == GatingMode::dense ? "dense" : "top1"; }

// Throws on keys outside `allowed`, naming the offending section.
void reject_unknown(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ContractError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!ok) throw ContractError("unknown config field '" + section + "." + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json mob_json(const MobConfig& m) {
  return json{{"n_experts", m.n_experts},
              {"alpha", m.alpha},
              {"beta", m.beta},
              {"forget_scale", m.forget_scale},
              {"lambda_ewc", m.lambda_ewc},
              {"lr", m.lr},
              {"ewc_step", m.ewc_step == EwcStep::implicit ? "implicit" : "explicit"},
              {"batch_size", m.batch_size},
              {"boundary_mode", to_string(m.boundary_mode)},
              {"window_size", m.window_size},
              {"tau_commit", m.tau_commit},
              {"ema_decay", m.ema_decay},
              {"spike_factor", m.spike_factor},
              {"reservoir_capacity", m.reservoir_capacity},
              {"monitor_all_experts", m.monitor_all_experts},
              {"fisher_examples", m.fisher_examples},
              {"hidden_layers", m.hidden_layers},
              {"activation", to_string(m.activation)}};
}

}  // namespace

std::string sha256_hex(std::string_view text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int k = 0; k < len; ++k)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[k]);
  return os.str();
}

json to_json(const RunConfig& c) {
  return json{{"schema_version", kSchemaVersion},
              {"method", c.method},
              {"seed", c.mob.seed},
              {"mob", mob_json(c.mob)},
              {"data",
               {{"data_dir", c.data.data_dir},
                {"per_task_train", c.data.per_task_train},
                {"per_task_eval", c.data.per_task_eval},
                {"epochs_per_task", c.data.epochs_per_task},
                {"full_data", c.data.full_data}}},
              {"eval", {{"routing", to_string(c.eval_routing)}}},
              {"gated", {{"gating", to_string(c.gated.gating)}, {"experts_use_ewc", c.gated.experts_use_ewc}}},
              {"output_dir", c.output_dir}};
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, "", {"schema_version", "method", "seed", "mob", "data", "eval", "gated", "output_dir"});
  if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kSchemaVersion)
    throw ContractError("config schema_version must be " + std::to_string(kSchemaVersion));
  RunConfig c;
  read(j, "method", c.method);
  read(j, "seed", c.mob.seed);
  read(j, "output_dir", c.output_dir);
  if (j.contains("mob")) {
    const json& m = j.at("mob");
    reject_unknown(m, "mob", {"n_experts", "alpha", "beta", "forget_scale", "lambda_ewc", "lr", "ewc_step",
                              "batch_size", "boundary_mode", "window_size", "tau_commit", "ema_decay",
                              "spike_factor", "reservoir_capacity", "monitor_all_experts", "fisher_examples",
                              "hidden_layers", "activation"});
    read(m, "n_experts", c.mob.n_experts);
    read(m, "alpha", c.mob.alpha);
    read(m, "beta", c.mob.beta);
    read(m, "forget_scale", c.mob.forget_scale);
    read(m, "lambda_ewc", c.mob.lambda_ewc);
    read(m, "lr", c.mob.lr);
    read(m, "batch_size", c.mob.batch_size);
    read(m, "window_size", c.mob.window_size);
    read(m, "tau_commit", c.mob.tau_commit);
    read(m, "ema_decay", c.mob.ema_decay);
    read(m, "spike_factor", c.mob.spike_factor);
    read(m, "reservoir_capacity", c.mob.reservoir_capacity);
    read(m, "monitor_all_experts", c.mob.monitor_all_experts);
    read(m, "fisher_examples", c.mob.fisher_examples);
    read(m, "hidden_layers", c.mob.hidden_layers);
    if (m.contains("boundary_mode")) {
      const auto s = m.at("boundary_mode").get<std::string>();
      if (s == "explicit") c.mob.boundary_mode = BoundaryMode::explicit_boundary;
      else if (s == "self_monitor") c.mob.boundary_mode = BoundaryMode::self_monitor;
      else throw ContractError("mob.boundary_mode must be 'explicit' or 'self_monitor'");
    }
    if (m.contains("ewc_step")) {
      const auto s = m.at("ewc_step").get<std::string>();
      if (s == "implicit") c.mob.ewc_step = EwcStep::implicit;
      else if (s == "explicit") c.mob.ewc_step = EwcStep::explicit_gradient;
      else throw ContractError("mob.ewc_step must be 'implicit' or 'explicit'");
    }
    if (m.contains("activation")) {
      const auto s = m.at("activation").get<std::string>();
      if (s == "relu") c.mob.activation = Activation::relu;
      else if (s == "tanh") c.mob.activation = Activation::tanh;
      else throw ContractError("mob.activation must be 'relu' or 'tanh'");
    }
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, "data", {"data_dir", "per_task_train", "per_task_eval", "epochs_per_task", "full_data"});
    read(d, "data_dir", c.data.data_dir);
    read(d, "per_task_train", c.data.per_task_train);
    read(d, "per_task_eval", c.data.per_task_eval);
    read(d, "epochs_per_task", c.data.epochs_per_task);
    read(d, "full_data", c.data.full_data);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    reject_unknown(e, "eval", {"routing"});
    if (e.contains("routing")) {
      const auto s = e.at("routing").get<std::string>();
      if (s == "labelfree") c.eval_routing = EvalRouting::label_free;
      else if (s == "labelfree_raw") c.eval_routing = EvalRouting::label_free_raw;
      else if (s == "oracle") c.eval_routing = EvalRouting::oracle;
      else throw ContractError("eval.routing must be 'labelfree', 'labelfree_raw' or 'oracle'");
    }
  }
  if (j.contains("gated")) {
    const json& g = j.at("gated");
    reject_unknown(g, "gated", {"gating", "experts_use_ewc"});
    if (g.contains("gating")) {
      const auto s = g.at("gating").get<std::string>();
      if (s == "dense") c.gated.gating = GatingMode::dense;
      else if (s == "top1") c.gated.gating = GatingMode::top1;
      else throw ContractError("gated.gating must be 'dense' or 'top1'");
    }
    read(g, "experts_use_ewc", c.gated.experts_use_ewc);
  }
  c.mob.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ContractError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const json::exception& e) {
    throw ContractError("config " + path.string() + ": " + e.what());
  }
}

std::string config_hash(const RunConfig& config) {
  json j = to_json(config);
  j["data"].erase("data_dir");
  j.erase("output_dir");
  // nlohmann objects are key-sorted, so dump() is canonical
  return sha256_hex(j.dump());
}

SplitMnistOptions split_options(const RunConfig& config) {
  SplitMnistOptions o;
  o.seed = config.mob.seed;
  o.batch_size = config.mob.batch_size;
  o.per_task_train = config.data.full_data ? 0 : config.data.per_task_train;
  o.per_task_eval = config.data.full_data ? 0 : config.data.per_task_eval;
  o.epochs_per_task = config.data.epochs_per_task;
  return o;
}

std::unique_ptr<Learner> make_learner(const RunConfig& config, std::size_t input_dim,
                                      std::size_t num_classes) {
  if (config.method == "mob")
    return std::make_unique<MobLearner>(config.mob, input_dim, num_classes, Routing::auction);
  const auto kind = parse_baseline(config.method);
  if (!kind) throw ContractError("unknown method '" + config.method + "'");
  switch (*kind) {
    case BaselineKind::random_assignment:
      return std::make_unique<MobLearner>(config.mob, input_dim, num_classes, Routing::random);
    case BaselineKind::naive_finetune:
      return std::make_unique<SingleModelLearner>(config.mob, input_dim, num_classes, false);
    case BaselineKind::monolithic_ewc:
      return std::make_unique<SingleModelLearner>(config.mob, input_dim, num_classes, true);
    case BaselineKind::gated_moe:
      return std::make_unique<GatedMoeLearner>(config.mob, input_dim, num_classes, config.gated);
  }
  throw ContractError("unknown method '" + config.method + "'");
}

RunSummary run_method(const RunConfig& config, const TaskStream& stream,
                      const std::function<void(const StepLog&)>& on_step) {
  auto learner = make_learner(config, stream.input_dim, stream.num_classes);
  RunOptions opt;
  opt.method = config.method;
  opt.seed = config.mob.seed;
  opt.config_hash = config_hash(config);
  opt.eval_batch_size = config.mob.batch_size;
  opt.eval_routing = config.eval_routing;
  opt.on_step = on_step;
  return run_learner(*learner, stream, opt);
}

json to_json(const RunSummary& s) {
  json events = json::array();
  for (const auto& e : s.events)
    events.push_back({{"step", e.step}, {"expert", e.expert}, {"reason", to_string(e.reason)}});
  json diagnostics = json::object();
  for (const auto& [k, v] : s.diagnostics) diagnostics[k] = v;
  return json{{"schema_version", kSchemaVersion},
              {"method", s.method},
              {"seed", s.seed},
              {"config_hash", s.config_hash},
              {"metrics",
               {{"avg_accuracy", s.avg_accuracy},
                {"forgetting", s.forgetting ? json(*s.forgetting) : json(nullptr)}}},
              {"accuracy_matrix", s.accuracy_matrix},
              {"final_accuracies", s.final_accuracies},
              {"win_counts", s.win_counts},
              {"events", events},
              {"diagnostics", diagnostics}};
}

RunSummary run_summary_from_json(const json& j) {
  RunSummary s;
  s.method = j.at("method").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.config_hash = j.at("config_hash").get<std::string>();
  s.avg_accuracy = j.at("metrics").at("avg_accuracy").get<double>();
  if (!j.at("metrics").at("forgetting").is_null())
    s.forgetting = j.at("metrics").at("forgetting").get<double>();
  s.accuracy_matrix = j.at("accuracy_matrix").get<AccuracyMatrix>();
  s.final_accuracies = j.at("final_accuracies").get<std::vector<double>>();
  s.win_counts = j.at("win_counts").get<std::vector<std::vector<std::int64_t>>>();
  for (const auto& e : j.at("events")) {
    LoggedEvent ev;
    ev.step = e.at("step").get<std::size_t>();
    ev.expert = e.at("expert").get<int>();
    const auto r = e.at("reason").get<std::string>();
    ev.reason = r == "cv_commit" ? Trigger::cv_commit
                : r == "ema_spike" ? Trigger::ema_spike
                                   : Trigger::explicit_boundary;
    s.events.push_back(ev);
  }
  if (j.contains("diagnostics"))
    for (const auto& [k, v] : j.at("diagnostics").items()) s.diagnostics[k] = v.get<double>();
  return s;
}

json to_json(const StepLog& log, const std::string& hash, std::uint64_t seed) {
  json bids = json::array();
  for (const auto& b : log.bids)
    bids.push_back({{"expert", b.expert_id}, {"exec", b.exec_cost}, {"forget", b.forget_cost}, {"total", b.total}});
  json events = json::array();
  for (const auto& e : log.events) events.push_back({{"expert", e.expert}, {"reason", to_string(e.reason)}});
  return json{{"step", log.step},
              {"config_hash", hash},
              {"seed", seed},
              {"bids", bids},
              {"winner", log.winner},
              {"payment", log.payment ? json(*log.payment) : json(nullptr)},
              {"tie_broken", log.tie_broken},
              {"loss_before", log.loss_before},
              {"loss_after", log.loss_after},
              {"events", events}};
}

std::string run_stem(const std::string& method, std::uint64_t seed) {
  return method + "-seed" + std::to_string(seed);
}

Report build_report(const std::vector<RunSummary>& runs) {
  Report r;
  r.rows = aggregate(runs);
  std::stable_sort(r.rows.begin(), r.rows.end(), [](const auto& a, const auto& b) {
    return a.avg_accuracy.mean > b.avg_accuracy.mean;
  });

  auto values = [&](const std::string& method) {
    std::vector<double> v;
    for (const auto& s : runs)
      if (s.method == method) v.push_back(s.avg_accuracy);
    return v;
  };

  std::ostringstream md;
  std::ostringstream csv;
  md << std::fixed << std::setprecision(4);
  csv << std::setprecision(6);
  const std::size_t seeds = r.rows.empty() ? 0 : r.rows.front().seeds.size();
  md << "# Split-MNIST results (" << seeds << " seeds)\n\n";
  md << "| Method | Avg. Accuracy | Forgetting | Welch p vs best |\n";
  md << "|---|---|---|---|\n";
  csv << "method,avg_accuracy_mean,avg_accuracy_std,forgetting_mean,forgetting_std,seeds\n";
  for (const auto& row : r.rows) {
    md << "| " << row.method << " | " << row.avg_accuracy.mean << " ± " << row.avg_accuracy.std
       << " | " << row.forgetting.mean << " ± " << row.forgetting.std << " | ";
    if (&row == &r.rows.front() || seeds < 2) {
      md << "- |\n";
    } else {
      const auto best = values(r.rows.front().method);
      const auto mine = values(row.method);
      md << std::scientific << std::setprecision(2) << welch_t(best, mine).p_two_sided
         << std::fixed << std::setprecision(4) << " |\n";
    }
    csv << row.method << ',' << row.avg_accuracy.mean << ',' << row.avg_accuracy.std << ','
        << row.forgetting.mean << ',' << row.forgetting.std << ',' << row.seeds.size() << '\n';
  }

  md << "\n## Final per-task accuracy (seed mean)\n\n| Method |";
  std::size_t tasks = runs.empty() ? 0 : runs.front().final_accuracies.size();
  for (std::size_t t = 0; t < tasks; ++t) md << " Task " << t + 1 << " |";
  md << "\n|---|";
  for (std::size_t t = 0; t < tasks; ++t) md << "---|";
  md << '\n';
  for (const auto& row : r.rows) {
    md << "| " << row.method << " |";
    for (std::size_t t = 0; t < tasks; ++t) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& s : runs)
        if (s.method == row.method && t < s.final_accuracies.size()) sum += s.final_accuracies[t], ++n;
      md << ' ' << (n ? sum / static_cast<double>(n) : 0.0) << " |";
    }
    md << '\n';
  }

  for (const auto& s : runs) {
    if (s.method != "mob") continue;
    if (s.win_counts.empty() || s.win_counts.front().size() < 2) continue;
    md << "\n## Expert win share, mob seed " << s.seed << "\n\n";
    const auto shares = win_shares(s.win_counts);
    for (std::size_t e = 0; e < shares.size(); ++e)
      md << "- expert " << e << ": " << std::setprecision(1) << 100.0 * shares[e] << "%\n";
    md << std::setprecision(4);
  }
  r.markdown = md.str();
  r.csv = csv.str();
  return r;
}

}  // namespace mob
