#include "optx/options.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"
#include "optx/csv.hpp"

namespace optx {

// ---------------------------------------------------------------------------
// csv helpers (shared with the harness)

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(const CsvTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
  if (!out) throw IoError("write failed: " + path);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(pos));
        break;
      }
      fields.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// rollouts and candidates

Trajectory rollout_greedy(const Mlp& policy, const GridSpec& task, int source_task) {
  std::unique_ptr<Env> env = make_env(task);
  RngStream rng(0);  // single-start tasks; kept for the reset signature
  Vec obs = env->reset(rng);
  Trajectory traj;
  traj.source_task = source_task;
  while (true) {
    int a = greedy_action(policy, obs);
    traj.observations.push_back(obs);
    traj.actions.push_back(a);
    StepResult r = env->step(a);
    if (r.terminal || r.truncated) {
      traj.terminal_observation = r.obs;
      traj.truncated = !r.terminal;
      break;
    }
    obs = std::move(r.obs);
  }
  return traj;
}

CandidateSet generate_candidates(const std::vector<std::vector<SubPolicy>>& per_task_subpolicies,
                                 const std::vector<Trajectory>& trajectories,
                                 CandidateCaps caps) {
  if (trajectories.empty()) throw ConfigError("generate_candidates: no trajectories");
  bool any = false;
  for (const auto& subs : per_task_subpolicies) any = any || !subs.empty();
  if (!any) throw ConfigError("generate_candidates: no sub-policies");

  int t_max = 0;
  for (const Trajectory& t : trajectories) t_max = std::max(t_max, t.num_pairs());
  int z_cap = caps.max_z > 0 ? std::min(caps.max_z, t_max) : t_max;

  CandidateSet set;
  set.t_max = t_max;
  int id = 0;
  for (std::size_t task = 0; task < per_task_subpolicies.size(); ++task) {
    for (const SubPolicy& sub : per_task_subpolicies[task]) {
      for (int z = 1; z <= z_cap; ++z) {
        OptionDef opt;
        opt.kind = OptionKind::kSubPolicy;
        opt.sub = sub;
        opt.z = z;
        opt.source_task = static_cast<int>(task);
        opt.candidate_id = id++;
        set.options.push_back(std::move(opt));
        if (caps.max_candidates > 0 &&
            static_cast<int>(set.options.size()) >= caps.max_candidates) {
          return set;
        }
      }
    }
  }
  return set;
}

bool is_applicable(const OptionDef& option, const Trajectory& traj, int j) {
  if (j < 0 || option.z < 1) return false;
  if (j + option.z > traj.num_pairs()) return false;
  for (int k = 0; k < option.z; ++k) {
    if (option.greedy_action(traj.observations[j + k], k) != traj.actions[j + k]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Levin loss

namespace {

double pow_int_saturating(double base, int exponent) {
  double v = 1.0;
  for (int i = 0; i < exponent; ++i) {
    v *= base;
    if (std::isinf(v)) return v;
  }
  return v;
}

}  // namespace

LossResult compute_loss(const Trajectory& traj, double p_uniform,
                        std::span<const OptionDef> options) {
  if (!(p_uniform > 0.0 && p_uniform <= 1.0)) {
    throw ConfigError("compute_loss: probability must be in (0, 1]");
  }
  const int last = traj.num_pairs();
  LossResult res;
  res.decisions.resize(last + 1);
  std::vector<int>& m = res.decisions;
  for (int j = 0; j <= last; ++j) m[j] = j;
  for (int j = 0; j <= last; ++j) {
    if (j > 0) m[j] = std::min(m[j], m[j - 1] + 1);
    for (const OptionDef& opt : options) {
      if (is_applicable(opt, traj, j)) {
        m[j + opt.z] = std::min(m[j + opt.z], m[j] + 1);
      }
    }
  }
  res.log_loss = std::log(static_cast<double>(traj.num_states())) - m[last] * std::log(p_uniform);
  res.loss = traj.num_states() * pow_int_saturating(1.0 / p_uniform, m[last]);
  return res;
}

// ---------------------------------------------------------------------------
// greedy selection

namespace {

bool traj_is_scored(const SelectionConfig& cfg, int traj_task) {
  if (cfg.exclusion == ExclusionPolicy::kLeaveOwnTaskOut) return true;
  return std::find(cfg.val_tasks.begin(), cfg.val_tasks.end(), traj_task) != cfg.val_tasks.end();
}

bool option_counts_for(const SelectionConfig& cfg, int option_task, int traj_task) {
  if (cfg.exclusion == ExclusionPolicy::kLeaveOwnTaskOut) return option_task != traj_task;
  // Split mode: pool membership was already restricted to training tasks.
  return true;
}

bool candidate_in_pool(const SelectionConfig& cfg, int option_task) {
  if (cfg.exclusion == ExclusionPolicy::kLeaveOwnTaskOut) return true;
  return std::find(cfg.train_tasks.begin(), cfg.train_tasks.end(), option_task) !=
         cfg.train_tasks.end();
}

double log_sum_exp(std::span<const double> terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (double t : terms) m = std::max(m, t);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

// Match-run tables: for every distinct sub-policy and trajectory, the length
// of the longest action match starting at each position. Applicability of
// (sub, z) at j is then run[j] >= z.
struct FastScorer {
  const std::vector<Trajectory>& trajs;
  std::vector<int> sub_of_candidate;              // candidate -> sub index
  std::vector<std::vector<std::vector<int>>> runs;  // [sub][traj][pos]
  std::vector<int> scratch;

  FastScorer(const CandidateSet& set, const std::vector<Trajectory>& trajectories)
      : trajs(trajectories) {
    std::map<std::pair<const Mlp*, std::string>, int> sub_ids;
    std::vector<const SubPolicy*> subs;
    sub_of_candidate.reserve(set.options.size());
    for (const OptionDef& opt : set.options) {
      auto key = std::make_pair(opt.sub.policy, mask_to_string(opt.sub.mask));
      auto [it, inserted] = sub_ids.emplace(key, static_cast<int>(subs.size()));
      if (inserted) subs.push_back(&opt.sub);
      sub_of_candidate.push_back(it->second);
    }
    // Hidden pre-activations are shared by all masks of one policy.
    std::map<const Mlp*, std::vector<std::vector<Vec>>> preacts;
    for (const SubPolicy* sub : subs) {
      auto& per_traj = preacts[sub->policy];
      if (per_traj.empty()) {
        per_traj.resize(trajs.size());
        for (std::size_t i = 0; i < trajs.size(); ++i) {
          per_traj[i].reserve(trajs[i].observations.size());
          for (const Vec& obs : trajs[i].observations) {
            per_traj[i].push_back(policy_forward(*sub->policy, obs).hidden_preacts);
          }
        }
      }
    }
    runs.resize(subs.size());
    for (std::size_t s = 0; s < subs.size(); ++s) {
      const auto& per_traj = preacts[subs[s]->policy];
      runs[s].resize(trajs.size());
      for (std::size_t i = 0; i < trajs.size(); ++i) {
        const int n = trajs[i].num_pairs();
        runs[s][i].assign(n + 1, 0);
        for (int j = n - 1; j >= 0; --j) {
          bool match = subpolicy_greedy_action_from_preacts(*subs[s], per_traj[i][j]) ==
                       trajs[i].actions[j];
          runs[s][i][j] = match ? runs[s][i][j + 1] + 1 : 0;
        }
      }
    }
  }

  // Minimum decisions for trajectory i with the given (sub, z) pairs.
  int min_decisions(std::size_t i, std::span<const std::pair<int, int>> opts) {
    const int last = trajs[i].num_pairs();
    scratch.resize(last + 1);
    for (int j = 0; j <= last; ++j) scratch[j] = j;
    for (int j = 0; j <= last; ++j) {
      if (j > 0) scratch[j] = std::min(scratch[j], scratch[j - 1] + 1);
      for (auto [s, z] : opts) {
        if (j + z <= last && runs[s][i][j] >= z) {
          scratch[j + z] = std::min(scratch[j + z], scratch[j] + 1);
        }
      }
    }
    return scratch[last];
  }
};

}  // namespace

double selection_log_total(std::span<const OptionDef> options,
                           const std::vector<Trajectory>& trajectories, int n_primitives,
                           const SelectionConfig& cfg, double p) {
  std::vector<double> terms;
  std::vector<OptionDef> filtered;
  for (const Trajectory& traj : trajectories) {
    if (!traj_is_scored(cfg, traj.source_task)) continue;
    filtered.clear();
    for (const OptionDef& opt : options) {
      if (option_counts_for(cfg, opt.source_task, traj.source_task)) filtered.push_back(opt);
    }
    terms.push_back(compute_loss(traj, p, filtered).log_loss);
  }
  (void)n_primitives;
  if (terms.empty()) throw ConfigError("selection: no trajectories to score");
  return log_sum_exp(terms);
}

namespace {

// log(exp(a) - exp(b)) for a > b; -inf when the difference is non-positive.
double log_diff_exp(double a, double b) {
  if (!(a > b)) return -std::numeric_limits<double>::infinity();
  if (std::isinf(a)) return a;
  return a + std::log1p(-std::exp(b - a));
}

}  // namespace

SelectionResult greedy_select(const CandidateSet& candidates,
                              const std::vector<Trajectory>& trajectories, int n_primitives,
                              const SelectionConfig& cfg) {
  if (candidates.options.empty()) throw ConfigError("greedy_select: empty candidate pool");
  if (trajectories.empty()) throw ConfigError("greedy_select: no trajectories");

  FastScorer scorer(candidates, trajectories);
  const std::size_t n_traj = trajectories.size();

  std::vector<double> log_n_states(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i) {
    log_n_states[i] = std::log(static_cast<double>(trajectories[i].num_states()));
  }

  // Selected (sub, z) pairs: the bias-filtered view per trajectory (options
  // from the trajectory's own task removed) and the unrestricted view.
  std::vector<std::vector<std::pair<int, int>>> filtered(n_traj);
  std::vector<std::pair<int, int>> all_selected;

  // Trajectories that count toward a candidate's ranking score.
  auto ranked_on = [&](int candidate_task, std::size_t traj) {
    if (!traj_is_scored(cfg, trajectories[traj].source_task)) return false;
    if (cfg.exclusion == ExclusionPolicy::kLeaveOwnTaskOut) {
      return trajectories[traj].source_task != candidate_task;
    }
    return true;
  };

  auto term = [&](std::size_t i, double logp, int m) { return log_n_states[i] - m * logp; };

  std::vector<double> acc;
  auto log_total_unfiltered = [&](double p, int extra_sub, int extra_z) {
    const double logp = std::log(p);
    acc.clear();
    auto opts = all_selected;
    if (extra_sub >= 0) opts.emplace_back(extra_sub, extra_z);
    for (std::size_t i = 0; i < n_traj; ++i) {
      acc.push_back(term(i, logp, scorer.min_decisions(i, opts)));
    }
    return log_sum_exp(acc);
  };

  SelectionResult result;
  result.baseline_log_loss = log_total_unfiltered(1.0 / n_primitives, -1, 0);
  result.baseline_loss = std::exp(result.baseline_log_loss);

  std::vector<char> used(candidates.options.size(), 0);
  double current_log = result.baseline_log_loss;

  for (int iteration = 1;; ++iteration) {
    const double p_cur = 1.0 / (n_primitives + static_cast<int>(result.selected.size()));
    const double p_new = 1.0 / (n_primitives + static_cast<int>(result.selected.size()) + 1);
    const double log_pc = std::log(p_cur);
    const double log_pn = std::log(p_new);

    // Current bias-filtered decision counts, shared by all candidates.
    std::vector<int> m_filtered_cur(n_traj);
    for (std::size_t i = 0; i < n_traj; ++i) {
      m_filtered_cur[i] = scorer.min_decisions(i, filtered[i]);
    }

    double best_gain = -std::numeric_limits<double>::infinity();
    double best_global = std::numeric_limits<double>::infinity();
    int best = -1;
    std::vector<std::pair<int, int>> opts;
    for (std::size_t c = 0; c < candidates.options.size(); ++c) {
      if (used[c]) continue;
      const OptionDef& opt = candidates.options[c];
      if (!candidate_in_pool(cfg, opt.source_task)) continue;
      const int sub = scorer.sub_of_candidate[c];

      // Ranking score: loss decrease over the candidate's scored trajectories.
      acc.clear();
      std::vector<double> acc_new;
      bool any = false;
      for (std::size_t i = 0; i < n_traj; ++i) {
        if (!ranked_on(opt.source_task, i)) continue;
        any = true;
        acc.push_back(term(i, log_pc, m_filtered_cur[i]));
        opts = filtered[i];
        if (option_counts_for(cfg, opt.source_task, trajectories[i].source_task)) {
          opts.emplace_back(sub, opt.z);
        }
        acc_new.push_back(term(i, log_pn, scorer.min_decisions(i, opts)));
      }
      if (!any) continue;
      const double gain = log_diff_exp(log_sum_exp(acc), log_sum_exp(acc_new));
      if (std::isinf(gain) && gain < 0) continue;  // no strict decrease

      const bool better =
          best < 0 || gain > best_gain ||
          (gain == best_gain && (opt.z < candidates.options[best].z ||
                                 (opt.z == candidates.options[best].z &&
                                  opt.candidate_id < candidates.options[best].candidate_id)));
      if (!better) continue;
      // The trace quantity must strictly decrease as well.
      const double global_new = log_total_unfiltered(p_new, sub, opt.z);
      if (global_new >= current_log) continue;
      best_gain = gain;
      best_global = global_new;
      best = static_cast<int>(c);
    }
    if (best < 0) break;

    const OptionDef& chosen = candidates.options[best];
    used[best] = 1;
    result.selected.push_back(chosen);
    all_selected.emplace_back(scorer.sub_of_candidate[best], chosen.z);
    for (std::size_t i = 0; i < n_traj; ++i) {
      if (option_counts_for(cfg, chosen.source_task, trajectories[i].source_task)) {
        filtered[i].emplace_back(scorer.sub_of_candidate[best], chosen.z);
      }
    }
    current_log = best_global;
    SelectionStep step;
    step.iteration = iteration;
    step.candidate_id = chosen.candidate_id;
    step.log_total_loss = best_global;
    step.total_loss = std::exp(best_global);
    result.trace.push_back(step);
  }

  result.final_log_loss = current_log;
  result.final_loss = std::exp(current_log);
  return result;
}

std::vector<OptionDef> random_options(int n_primitives, int length, int count,
                                      std::uint64_t seed) {
  if (length < 1 || count < 1) throw ConfigError("random_options: length and count must be >= 1");
  RngStream rng(seed, 9001);
  std::vector<OptionDef> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    OptionDef opt;
    opt.kind = OptionKind::kScripted;
    opt.z = length;
    opt.candidate_id = k;
    opt.actions.reserve(length);
    for (int i = 0; i < length; ++i) opt.actions.push_back(rng.next_int(n_primitives));
    out.push_back(std::move(opt));
  }
  return out;
}

// ---------------------------------------------------------------------------
// option library file

void save_option_library(const std::vector<OptionDef>& options, int n_primitives,
                         const std::vector<std::string>& policy_files_by_task,
                         const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["n_primitives"] = n_primitives;
  nlohmann::json arr = nlohmann::json::array();
  for (const OptionDef& opt : options) {
    nlohmann::json jo;
    jo["z"] = opt.z;
    jo["source_task"] = opt.source_task;
    if (opt.kind == OptionKind::kScripted) {
      jo["kind"] = "scripted";
      jo["actions"] = opt.actions;
    } else {
      jo["kind"] = "subpolicy";
      jo["mask"] = mask_to_string(opt.sub.mask);
      if (opt.source_task < 0 ||
          opt.source_task >= static_cast<int>(policy_files_by_task.size())) {
        throw ConfigError("save_option_library: no weight file for task " +
                          std::to_string(opt.source_task));
      }
      jo["policy_file"] = policy_files_by_task[opt.source_task];
    }
    arr.push_back(std::move(jo));
  }
  j["options"] = std::move(arr);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

OptionLibrary load_option_library(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("option library parse error: ") + e.what(), e.byte);
  }
  OptionLibrary lib;
  try {
    lib.n_primitives = j.at("n_primitives").get<int>();
    std::map<std::string, const Mlp*> loaded;
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    for (const auto& jo : j.at("options")) {
      OptionDef opt;
      opt.z = jo.at("z").get<int>();
      opt.source_task = jo.at("source_task").get<int>();
      const std::string kind = jo.at("kind").get<std::string>();
      if (kind == "scripted") {
        opt.kind = OptionKind::kScripted;
        opt.actions = jo.at("actions").get<std::vector<int>>();
        if (static_cast<int>(opt.actions.size()) < opt.z) {
          throw SchemaError("option library: scripted option shorter than its z");
        }
      } else if (kind == "subpolicy") {
        opt.kind = OptionKind::kSubPolicy;
        const std::string file = jo.at("policy_file").get<std::string>();
        auto it = loaded.find(file);
        if (it == loaded.end()) {
          lib.policies.push_back(
              std::make_unique<Mlp>(load_weights((base / file).string())));
          it = loaded.emplace(file, lib.policies.back().get()).first;
        }
        opt.sub.policy = it->second;
        opt.sub.mask = mask_from_string(jo.at("mask").get<std::string>());
        opt.sub.source_task = opt.source_task;
        if (static_cast<int>(opt.sub.mask.size()) != it->second->layers()[0].out) {
          throw SchemaError("option library: mask length does not match policy hidden width");
        }
      } else {
        throw SchemaError("option library: unknown option kind " + kind);
      }
      opt.candidate_id = static_cast<int>(lib.options.size());
      lib.options.push_back(std::move(opt));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("option library: ") + e.what());
  }
  return lib;
}

void save_selection_log(const SelectionResult& result, const std::string& path) {
  CsvTable table;
  table.header = {"iteration", "accepted_candidate_id", "total_loss"};
  table.rows.push_back({"0", "-1", format_double(result.baseline_loss)});
  for (const SelectionStep& s : result.trace) {
    table.rows.push_back({std::to_string(s.iteration), std::to_string(s.candidate_id),
                          format_double(s.total_loss)});
  }
  write_csv(table, path);
}

}  // namespace optx
