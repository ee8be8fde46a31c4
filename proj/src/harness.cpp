#include "optx/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "optx/csv.hpp"
#include "optx/option_env.hpp"

namespace optx {

namespace fs = std::filesystem;

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::kDecOptions: return "dec-options";
    case Mode::kDecOptionsWhole: return "dec-options-whole";
    case Mode::kRandomOptions: return "random-options";
    case Mode::kVanilla: return "vanilla";
  }
  return "dec-options";
}

Mode mode_from_name(const std::string& s) {
  if (s == "dec-options") return Mode::kDecOptions;
  if (s == "dec-options-whole") return Mode::kDecOptionsWhole;
  if (s == "random-options") return Mode::kRandomOptions;
  if (s == "vanilla") return Mode::kVanilla;
  throw ConfigError("unknown mode: " + s);
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
  if (out_dir.empty()) throw ConfigError("config: out_dir must be set");
  source.ppo.validate();
  target.ppo.validate();
  if (exclusion == ExclusionPolicy::kTrainValSplit &&
      (train_tasks.empty() || val_tasks.empty())) {
    throw ConfigError("config: train/val split requires both task lists");
  }
  if (random_options.length < 1 || random_options.count < 1) {
    throw ConfigError("config: random option length/count must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// config json

namespace {

nlohmann::json ppo_to_json(const PpoConfig& p) {
  nlohmann::json j;
  j["learning_rate"] = p.learning_rate;
  j["clip_epsilon"] = p.clip_epsilon;
  j["entropy_coef"] = p.entropy_coef;
  j["value_loss_coef"] = p.value_loss_coef;
  j["gamma"] = p.gamma;
  j["gae_lambda"] = p.gae_lambda;
  j["rollout_length"] = p.rollout_length;
  j["epochs_per_update"] = p.epochs_per_update;
  j["minibatch_size"] = p.minibatch_size;
  j["total_env_steps"] = p.total_env_steps;
  j["max_grad_norm"] = p.max_grad_norm;
  j["normalize_advantages"] = p.normalize_advantages;
  j["adam_beta1"] = p.adam.beta1;
  j["adam_beta2"] = p.adam.beta2;
  j["adam_eps"] = p.adam.eps;
  return j;
}

PpoConfig ppo_from_json(const nlohmann::json& j) {
  PpoConfig p;
  p.learning_rate = j.at("learning_rate").get<double>();
  p.clip_epsilon = j.at("clip_epsilon").get<double>();
  p.entropy_coef = j.at("entropy_coef").get<double>();
  p.value_loss_coef = j.at("value_loss_coef").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.gae_lambda = j.at("gae_lambda").get<double>();
  p.rollout_length = j.at("rollout_length").get<int>();
  p.epochs_per_update = j.at("epochs_per_update").get<int>();
  p.minibatch_size = j.at("minibatch_size").get<int>();
  p.total_env_steps = j.at("total_env_steps").get<long long>();
  p.max_grad_norm = j.at("max_grad_norm").get<double>();
  p.normalize_advantages = j.at("normalize_advantages").get<bool>();
  p.adam.beta1 = j.at("adam_beta1").get<double>();
  p.adam.beta2 = j.at("adam_beta2").get<double>();
  p.adam.eps = j.at("adam_eps").get<double>();
  return p;
}

nlohmann::json phase_to_json(const PhaseConfig& p) {
  nlohmann::json j;
  j["policy_hidden"] = p.policy_hidden;
  j["value_hidden"] = p.value_hidden;
  j["ppo"] = ppo_to_json(p.ppo);
  return j;
}

PhaseConfig phase_from_json(const nlohmann::json& j) {
  PhaseConfig p;
  p.policy_hidden = j.at("policy_hidden").get<std::vector<int>>();
  p.value_hidden = j.at("value_hidden").get<std::vector<int>>();
  p.ppo = ppo_from_json(j.at("ppo"));
  return p;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["domain"] = domain_name(cfg.domain);
  j["size"] = cfg.size;
  j["layout_seed"] = cfg.layout_seed;
  j["seeds"] = cfg.seeds;
  j["mode"] = mode_name(cfg.mode);
  j["exclusion"] = cfg.exclusion == ExclusionPolicy::kLeaveOwnTaskOut ? "leave-own-task-out"
                                                                      : "train-val-split";
  j["train_tasks"] = cfg.train_tasks;
  j["val_tasks"] = cfg.val_tasks;
  j["random_options"] = {{"length", cfg.random_options.length},
                         {"count", cfg.random_options.count}};
  j["candidate_caps"] = {{"max_z", cfg.candidate_caps.max_z},
                         {"max_candidates", cfg.candidate_caps.max_candidates}};
  j["decomposition_cap"] = cfg.decomposition_cap;
  j["out_dir"] = cfg.out_dir;
  j["source"] = phase_to_json(cfg.source);
  j["target"] = phase_to_json(cfg.target);
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config parse error: ") + e.what(), e.byte);
  }
  try {
    ExperimentConfig cfg;
    cfg.domain = domain_from_name(j.at("domain").get<std::string>());
    cfg.size = j.at("size").get<int>();
    cfg.layout_seed = j.at("layout_seed").get<std::uint64_t>();
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.mode = mode_from_name(j.at("mode").get<std::string>());
    const std::string ex = j.at("exclusion").get<std::string>();
    if (ex == "leave-own-task-out") {
      cfg.exclusion = ExclusionPolicy::kLeaveOwnTaskOut;
    } else if (ex == "train-val-split") {
      cfg.exclusion = ExclusionPolicy::kTrainValSplit;
    } else {
      throw SchemaError("config: unknown exclusion policy " + ex);
    }
    cfg.train_tasks = j.at("train_tasks").get<std::vector<int>>();
    cfg.val_tasks = j.at("val_tasks").get<std::vector<int>>();
    cfg.random_options.length = j.at("random_options").at("length").get<int>();
    cfg.random_options.count = j.at("random_options").at("count").get<int>();
    cfg.candidate_caps.max_z = j.at("candidate_caps").at("max_z").get<int>();
    cfg.candidate_caps.max_candidates = j.at("candidate_caps").at("max_candidates").get<int>();
    cfg.decomposition_cap = j.at("decomposition_cap").get<int>();
    cfg.out_dir = j.at("out_dir").get<std::string>();
    cfg.source = phase_from_json(j.at("source"));
    cfg.target = phase_from_json(j.at("target"));
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("config file: ") + e.what());
  }
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << config_to_json(cfg);
  if (!out) throw IoError("write failed: " + path);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

// ---------------------------------------------------------------------------
// presets

namespace {

struct Row {
  double clip;
  double entropy;
  double lr;
};

Row combogrid_row(int size, Mode mode) {
  switch (size) {
    case 3:
      switch (mode) {
        case Mode::kVanilla: return {0.15, 0.1, 0.01};
        case Mode::kDecOptionsWhole: return {0.15, 0.05, 0.005};
        default: return {0.2, 0.05, 0.005};
      }
    case 4:
      switch (mode) {
        case Mode::kVanilla: return {0.1, 0.0, 0.005};
        case Mode::kDecOptionsWhole: return {0.25, 0.05, 0.01};
        default: return {0.25, 0.0, 0.005};
      }
    case 5:
      switch (mode) {
        case Mode::kVanilla: return {0.25, 0.1, 0.005};
        case Mode::kDecOptionsWhole: return {0.2, 0.05, 0.005};
        default: return {0.2, 0.05, 0.005};
      }
    default:
      switch (mode) {
        case Mode::kVanilla: return {0.1, 0.05, 0.005};
        case Mode::kDecOptionsWhole: return {0.2, 0.0, 0.001};
        default: return {0.15, 0.05, 0.005};
      }
  }
}

Row maze_row(Mode mode) {
  // Four Rooms 3 table.
  switch (mode) {
    case Mode::kVanilla: return {0.2, 0.0, 5e-5};
    case Mode::kDecOptionsWhole: return {0.15, 0.05, 0.001};
    default: return {0.2, 0.1, 0.001};
  }
}

}  // namespace

PpoConfig target_ppo_row(DomainKind domain, int size, Mode mode) {
  Row row = domain == DomainKind::kComboGrid ? combogrid_row(size, mode) : maze_row(mode);
  PpoConfig p;
  p.clip_epsilon = row.clip;
  p.entropy_coef = row.entropy;
  p.learning_rate = row.lr;
  return p;
}

ExperimentConfig paper_default(DomainKind domain, int size, Mode mode) {
  ExperimentConfig cfg;
  cfg.domain = domain;
  cfg.size = size;
  cfg.mode = mode;
  cfg.seeds.resize(30);
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) cfg.seeds[i] = i + 1;

  cfg.source.ppo = target_ppo_row(domain, size, Mode::kDecOptions);
  cfg.source.ppo.total_env_steps = 500000;
  cfg.target.ppo = target_ppo_row(domain, size, mode);
  cfg.target.ppo.total_env_steps = 1000000;

  if (domain == DomainKind::kComboGrid) {
    cfg.source.policy_hidden = {6};
    cfg.target.policy_hidden = {16};
    cfg.source.value_hidden = {200, 200, 200};
    cfg.target.value_hidden = {200, 200, 200};
    cfg.out_dir = "runs/combogrid" + std::to_string(size) + "_" + mode_name(mode);
  } else {
    cfg.source.policy_hidden = {6};
    cfg.target.policy_hidden = {50, 50, 50};
    cfg.source.value_hidden = {256, 256, 256};
    cfg.target.value_hidden = {256, 256, 256};
    cfg.out_dir = "runs/maze_" + mode_name(mode);
  }
  return cfg;
}

ExperimentConfig desk_combogrid3(Mode mode) {
  ExperimentConfig cfg = paper_default(DomainKind::kComboGrid, 3, mode);
  cfg.seeds.resize(10);
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) cfg.seeds[i] = i + 1;
  cfg.source.value_hidden = {64, 64};
  cfg.target.value_hidden = {64, 64};
  cfg.source.ppo.rollout_length = 512;
  cfg.source.ppo.minibatch_size = 128;
  cfg.source.ppo.total_env_steps = 90000;
  cfg.target.ppo.rollout_length = 512;
  cfg.target.ppo.minibatch_size = 128;
  cfg.target.ppo.total_env_steps = 90000;
  cfg.out_dir = "runs/desk_combogrid3_" + mode_name(mode);
  return cfg;
}

// ---------------------------------------------------------------------------
// artifacts

TaskSets ensure_task_files(const ExperimentConfig& cfg) {
  ArtifactPaths paths(cfg.out_dir);
  fs::create_directories(paths.root);
  if (!fs::exists(paths.tasks_source()) || !fs::exists(paths.tasks_target())) {
    TaskSets sets = build_task_sets(cfg.domain, cfg.size, cfg.layout_seed);
    save_task_set(sets.source, paths.tasks_source());
    save_task_set(sets.target, paths.tasks_target());
  }
  TaskSets sets;
  sets.source = load_task_set(paths.tasks_source());
  sets.target = load_task_set(paths.tasks_target());
  return sets;
}

void save_trajectories(const std::vector<Trajectory>& trajs, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  nlohmann::json arr = nlohmann::json::array();
  for (const Trajectory& t : trajs) {
    nlohmann::json jt;
    jt["source_task"] = t.source_task;
    jt["truncated"] = t.truncated;
    jt["actions"] = t.actions;
    jt["observations"] = t.observations;
    jt["terminal_observation"] = t.terminal_observation;
    arr.push_back(std::move(jt));
  }
  j["trajectories"] = std::move(arr);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump() << "\n";
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("trajectories parse error: ") + e.what(), e.byte);
  }
  try {
    std::vector<Trajectory> out;
    for (const auto& jt : j.at("trajectories")) {
      Trajectory t;
      t.source_task = jt.at("source_task").get<int>();
      t.truncated = jt.at("truncated").get<bool>();
      t.actions = jt.at("actions").get<std::vector<int>>();
      t.observations = jt.at("observations").get<std::vector<Vec>>();
      t.terminal_observation = jt.at("terminal_observation").get<Vec>();
      if (t.observations.size() != t.actions.size() || t.actions.empty()) {
        throw SchemaError("trajectories file: inconsistent lengths");
      }
      out.push_back(std::move(t));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("trajectories file: ") + e.what());
  }
}

void write_curve_csv(const std::vector<TrainRecord>& curve, std::uint64_t seed,
                     const std::string& task_id, const std::string& path) {
  CsvTable table;
  table.header = {"env_step", "mean_episode_return", "seed", "task_id"};
  for (const TrainRecord& r : curve) {
    table.rows.push_back({std::to_string(r.env_step), format_double(r.mean_episode_return),
                          std::to_string(seed), task_id});
  }
  write_csv(table, path);
}

// ---------------------------------------------------------------------------
// stages

void run_stage_train_source(const ExperimentConfig& cfg, std::uint64_t seed) {
  TaskSets sets = ensure_task_files(cfg);
  ArtifactPaths paths(cfg.out_dir);
  fs::create_directories(paths.seed_dir(seed));
  for (std::size_t t = 0; t < sets.source.size(); ++t) {
    TrainResult result = train_task(sets.source[t], cfg.source.policy_hidden,
                                    cfg.source.value_hidden, cfg.source.ppo,
                                    mix_seed(seed, 1000 + t));
    save_weights(result.policy, paths.source_policy(seed, static_cast<int>(t)));
    save_weights(result.value, paths.source_value(seed, static_cast<int>(t)));
    write_curve_csv(result.curve, seed, sets.source[t].id,
                    paths.source_curve(seed, static_cast<int>(t)));
  }
}

void run_stage_decompose(const ExperimentConfig& cfg, std::uint64_t seed) {
  ArtifactPaths paths(cfg.out_dir);
  fs::create_directories(paths.seed_dir(seed));
  std::vector<GridSpec> source = load_task_set(paths.tasks_source());
  std::vector<Trajectory> trajs;
  for (std::size_t t = 0; t < source.size(); ++t) {
    Mlp policy = load_weights(paths.source_policy(seed, static_cast<int>(t)));
    trajs.push_back(rollout_greedy(policy, source[t], static_cast<int>(t)));
  }
  save_trajectories(trajs, paths.trajectories(seed));
}

void run_stage_select(const ExperimentConfig& cfg, std::uint64_t seed, Mode mode) {
  if (mode == Mode::kVanilla) return;
  ArtifactPaths paths(cfg.out_dir);
  fs::create_directories(paths.seed_dir(seed));
  std::vector<GridSpec> source = load_task_set(paths.tasks_source());
  const int n_primitives = make_env(source.at(0))->action_count();

  std::vector<std::string> policy_files;
  for (std::size_t t = 0; t < source.size(); ++t) {
    policy_files.push_back(paths.source_policy_rel(static_cast<int>(t)));
  }

  if (mode == Mode::kRandomOptions) {
    std::vector<OptionDef> opts = random_options(n_primitives, cfg.random_options.length,
                                                 cfg.random_options.count, seed);
    save_option_library(opts, n_primitives, policy_files, paths.option_library(seed, mode));
    return;
  }

  std::vector<Mlp> policies;
  policies.reserve(source.size());
  for (std::size_t t = 0; t < source.size(); ++t) {
    policies.push_back(load_weights(paths.source_policy(seed, static_cast<int>(t))));
  }
  std::vector<Trajectory> trajs = load_trajectories(paths.trajectories(seed));

  std::vector<std::vector<SubPolicy>> per_task;
  for (std::size_t t = 0; t < policies.size(); ++t) {
    if (mode == Mode::kDecOptionsWhole) {
      // Non-decomposed ablation: the whole policy is the only sub-policy.
      ActivationMask all_free(policies[t].layers()[0].out, MaskState::kFree);
      per_task.push_back({SubPolicy{&policies[t], all_free, static_cast<int>(t)}});
    } else {
      per_task.push_back(
          enumerate_subpolicies(policies[t], static_cast<int>(t), cfg.decomposition_cap));
    }
  }
  CandidateSet candidates = generate_candidates(per_task, trajs, cfg.candidate_caps);
  SelectionConfig sel;
  sel.exclusion = cfg.exclusion;
  sel.train_tasks = cfg.train_tasks;
  sel.val_tasks = cfg.val_tasks;
  SelectionResult result = greedy_select(candidates, trajs, n_primitives, sel);
  save_option_library(result.selected, n_primitives, policy_files,
                      paths.option_library(seed, mode));
  save_selection_log(result, paths.selection_log(seed, mode));
}

void run_stage_train_target(const ExperimentConfig& cfg, std::uint64_t seed, Mode mode) {
  ArtifactPaths paths(cfg.out_dir);
  fs::create_directories(paths.seed_dir(seed));
  std::vector<GridSpec> target = load_task_set(paths.tasks_target());
  OptionLibrary lib;
  if (mode != Mode::kVanilla) {
    lib = load_option_library(paths.option_library(seed, mode));
  }
  for (std::size_t t = 0; t < target.size(); ++t) {
    std::unique_ptr<Env> env = make_env(target[t]);
    std::unique_ptr<Env> train_env;
    if (mode == Mode::kVanilla) {
      train_env = std::move(env);
    } else {
      train_env = std::make_unique<AugmentedEnv>(std::move(env), lib.options,
                                                 cfg.target.ppo.gamma);
    }
    TrainResult result = train_on_env(*train_env, cfg.target.policy_hidden,
                                      cfg.target.value_hidden, cfg.target.ppo,
                                      mix_seed(seed, 2000 + t));
    save_weights(result.policy, paths.target_policy(seed, mode, static_cast<int>(t)));
    write_curve_csv(result.curve, seed, target[t].id,
                    paths.target_curve(seed, mode, static_cast<int>(t)));
  }
}

void run_pipeline(const ExperimentConfig& cfg, int jobs) {
  cfg.validate();
  ensure_task_files(cfg);
  if (jobs <= 0) {
    jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (jobs <= 0) jobs = 1;
  }
  jobs = std::min<int>(jobs, static_cast<int>(cfg.seeds.size()));

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= cfg.seeds.size()) return;
      try {
        const std::uint64_t seed = cfg.seeds[i];
        run_stage_train_source(cfg, seed);
        run_stage_decompose(cfg, seed);
        run_stage_select(cfg, seed, cfg.mode);
        run_stage_train_target(cfg, seed, cfg.mode);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// aggregation

namespace {

struct SeedCurve {
  std::uint64_t seed = 0;
  std::vector<long long> steps;
  Vec returns;
};

SeedCurve read_curve(const std::string& path) {
  CsvTable table = read_csv(path);
  if (table.header.size() < 4 || table.header[0] != "env_step") {
    throw SchemaError("curve file " + path + ": unexpected header");
  }
  SeedCurve c;
  for (const auto& row : table.rows) {
    c.steps.push_back(std::stoll(row[0]));
    c.returns.push_back(std::stod(row[1]));
    c.seed = static_cast<std::uint64_t>(std::stoull(row[2]));
  }
  if (c.steps.empty()) throw SchemaError("curve file " + path + ": no data rows");
  return c;
}

double interpolate(const SeedCurve& c, long long step) {
  if (step <= c.steps.front()) return c.returns.front();
  if (step >= c.steps.back()) return c.returns.back();
  auto it = std::lower_bound(c.steps.begin(), c.steps.end(), step);
  std::size_t hi = static_cast<std::size_t>(it - c.steps.begin());
  std::size_t lo = hi - 1;
  const double t = static_cast<double>(step - c.steps[lo]) /
                   static_cast<double>(c.steps[hi] - c.steps[lo]);
  return c.returns[lo] + t * (c.returns[hi] - c.returns[lo]);
}

}  // namespace

RunSummary aggregate_runs(const std::vector<std::string>& curve_files) {
  if (curve_files.size() < 2) throw ConfigError("aggregate_runs: need at least 2 seeds");
  std::vector<SeedCurve> curves;
  for (const std::string& f : curve_files) curves.push_back(read_curve(f));
  std::sort(curves.begin(), curves.end(),
            [](const SeedCurve& a, const SeedCurve& b) { return a.seed < b.seed; });

  const int n = static_cast<int>(curves.size());
  const int retained_count = static_cast<int>(std::ceil(0.8 * n));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (curves[a].returns.back() != curves[b].returns.back()) {
      return curves[a].returns.back() < curves[b].returns.back();
    }
    return curves[a].seed < curves[b].seed;
  });
  std::vector<int> retained(order.end() - retained_count, order.end());
  std::sort(retained.begin(), retained.end());

  RunSummary summary;
  summary.n_seeds = retained_count;
  for (int i : retained) summary.retained_seeds.push_back(curves[i].seed);

  bool same_grid = true;
  for (int i : retained) {
    if (curves[i].steps != curves[retained[0]].steps) {
      same_grid = false;
      break;
    }
  }

  if (same_grid) {
    summary.steps = curves[retained[0]].steps;
  } else {
    summary.resampled = true;
    long long lo = 0;
    long long hi = std::numeric_limits<long long>::max();
    for (int i : retained) {
      lo = std::max(lo, curves[i].steps.front());
      hi = std::min(hi, curves[i].steps.back());
    }
    // Coarsest common grid: the retained curve with the fewest points inside
    // the shared range supplies the step grid.
    int coarsest = retained[0];
    std::size_t coarsest_points = std::numeric_limits<std::size_t>::max();
    for (int i : retained) {
      std::size_t points = 0;
      for (long long s : curves[i].steps) {
        if (s >= lo && s <= hi) ++points;
      }
      if (points < coarsest_points) {
        coarsest_points = points;
        coarsest = i;
      }
    }
    for (long long s : curves[coarsest].steps) {
      if (s >= lo && s <= hi) summary.steps.push_back(s);
    }
    if (summary.steps.empty()) summary.steps.push_back(lo);
  }

  const std::size_t m = summary.steps.size();
  summary.mean.assign(m, 0.0);
  summary.ci_low.assign(m, 0.0);
  summary.ci_high.assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    double mean = 0.0;
    for (int i : retained) mean += interpolate(curves[i], summary.steps[k]);
    mean /= retained_count;
    double var = 0.0;
    for (int i : retained) {
      const double d = interpolate(curves[i], summary.steps[k]) - mean;
      var += d * d;
    }
    const double sd = retained_count > 1 ? std::sqrt(var / (retained_count - 1)) : 0.0;
    const double half = 1.96 * sd / std::sqrt(static_cast<double>(retained_count));
    summary.mean[k] = mean;
    summary.ci_low[k] = mean - half;
    summary.ci_high[k] = mean + half;
  }
  return summary;
}

void export_csv(const RunSummary& summary, const std::string& path) {
  if (summary.steps.empty()) throw ConfigError("export_csv: empty summary");
  CsvTable table;
  table.header = {"env_step", "mean_return", "ci_low", "ci_high", "n_seeds"};
  for (std::size_t k = 0; k < summary.steps.size(); ++k) {
    table.rows.push_back({std::to_string(summary.steps[k]), format_double(summary.mean[k]),
                          format_double(summary.ci_low[k]), format_double(summary.ci_high[k]),
                          std::to_string(summary.n_seeds)});
  }
  write_csv(table, path);
}

}  // namespace optx
