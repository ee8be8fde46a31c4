#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "optx/grid.hpp"
#include "optx/options.hpp"
#include "optx/trainer.hpp"

namespace optx {

enum class Mode { kDecOptions, kDecOptionsWhole, kRandomOptions, kVanilla };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& s);

struct PhaseConfig {
  std::vector<int> policy_hidden;
  std::vector<int> value_hidden;
  PpoConfig ppo;
};

struct RandomOptionsConfig {
  int length = 6;
  int count = 4;
};

struct ExperimentConfig {
  DomainKind domain = DomainKind::kComboGrid;
  int size = 3;
  std::uint64_t layout_seed = 0;
  std::vector<std::uint64_t> seeds;
  Mode mode = Mode::kDecOptions;
  ExclusionPolicy exclusion = ExclusionPolicy::kLeaveOwnTaskOut;
  std::vector<int> train_tasks;  // split mode only
  std::vector<int> val_tasks;
  PhaseConfig source;
  PhaseConfig target;
  RandomOptionsConfig random_options;
  CandidateCaps candidate_caps;
  int decomposition_cap = kDefaultDecompositionCap;
  std::string out_dir = "runs/out";

  void validate() const;
};

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);
void save_config(const ExperimentConfig& cfg, const std::string& path);
ExperimentConfig load_config(const std::string& path);

// Hyperparameters from the per-domain tables (clip, entropy, learning rate
// per method and grid size); remaining fields use the framework defaults.
PpoConfig target_ppo_row(DomainKind domain, int size, Mode mode);
ExperimentConfig paper_default(DomainKind domain, int size, Mode mode);

// Reduced-budget ComboGrid 3x3 preset sized for desk runs (minutes, not
// hours): smaller value networks and short step budgets, ten seeds.
ExperimentConfig desk_combogrid3(Mode mode);

// ---------------------------------------------------------------------------
// Artifact layout

struct ArtifactPaths {
  std::string root;
  explicit ArtifactPaths(std::string out_dir) : root(std::move(out_dir)) {}
  std::string tasks_source() const { return root + "/tasks_source.json"; }
  std::string tasks_target() const { return root + "/tasks_target.json"; }
  std::string seed_dir(std::uint64_t seed) const {
    return root + "/seed_" + std::to_string(seed);
  }
  std::string source_policy(std::uint64_t seed, int task) const {
    return seed_dir(seed) + "/source_policy_" + std::to_string(task) + ".json";
  }
  std::string source_policy_rel(int task) const {
    return "source_policy_" + std::to_string(task) + ".json";
  }
  std::string source_value(std::uint64_t seed, int task) const {
    return seed_dir(seed) + "/source_value_" + std::to_string(task) + ".json";
  }
  std::string source_curve(std::uint64_t seed, int task) const {
    return seed_dir(seed) + "/source_curve_" + std::to_string(task) + ".csv";
  }
  std::string trajectories(std::uint64_t seed) const {
    return seed_dir(seed) + "/trajectories.json";
  }
  std::string option_library(std::uint64_t seed, Mode mode) const {
    return seed_dir(seed) + "/option_library_" + mode_name(mode) + ".json";
  }
  std::string selection_log(std::uint64_t seed, Mode mode) const {
    return seed_dir(seed) + "/selection_log_" + mode_name(mode) + ".csv";
  }
  std::string target_policy(std::uint64_t seed, Mode mode, int task) const {
    return seed_dir(seed) + "/target_policy_" + mode_name(mode) + "_" + std::to_string(task) +
           ".json";
  }
  std::string target_curve(std::uint64_t seed, Mode mode, int task) const {
    return seed_dir(seed) + "/target_curve_" + mode_name(mode) + "_" + std::to_string(task) +
           ".csv";
  }
  std::string summary(Mode mode, int task) const {
    return root + "/summary_" + mode_name(mode) + "_target_" + std::to_string(task) + ".csv";
  }
};

// Writes the task-set files if absent and returns the loaded sets. All later
// stages consume the files, not in-memory state.
TaskSets ensure_task_files(const ExperimentConfig& cfg);

void save_trajectories(const std::vector<Trajectory>& trajs, const std::string& path);
std::vector<Trajectory> load_trajectories(const std::string& path);

void write_curve_csv(const std::vector<TrainRecord>& curve, std::uint64_t seed,
                     const std::string& task_id, const std::string& path);

// Pipeline stages; each reads its inputs from the files of earlier stages.
void run_stage_train_source(const ExperimentConfig& cfg, std::uint64_t seed);
void run_stage_decompose(const ExperimentConfig& cfg, std::uint64_t seed);
void run_stage_select(const ExperimentConfig& cfg, std::uint64_t seed, Mode mode);
void run_stage_train_target(const ExperimentConfig& cfg, std::uint64_t seed, Mode mode);

// All stages for all seeds of cfg.mode, seeds spread over worker threads
// (jobs = 0 picks the hardware count).
void run_pipeline(const ExperimentConfig& cfg, int jobs = 0);

// ---------------------------------------------------------------------------
// Aggregation

struct RunSummary {
  std::vector<long long> steps;
  Vec mean;
  Vec ci_low;
  Vec ci_high;
  int n_seeds = 0;  // retained seeds
  bool resampled = false;
  std::vector<std::uint64_t> retained_seeds;
};

// Drops the worst 20% of seeds by final return (keeps ceil(0.8 n)), then
// reports the per-step mean and normal-approximation 95% interval. Curves on
// mismatched step grids are resampled onto the coarsest common grid.
RunSummary aggregate_runs(const std::vector<std::string>& curve_files);

void export_csv(const RunSummary& summary, const std::string& path);

}  // namespace optx
