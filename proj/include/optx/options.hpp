#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "optx/grid.hpp"
#include "optx/mlp.hpp"
#include "optx/neural_tree.hpp"

namespace optx {

// Greedy (argmax) rollout of a trained policy on one task: the decision
// observations and actions plus the terminal observation.
struct Trajectory {
  std::vector<Vec> observations;
  std::vector<int> actions;
  Vec terminal_observation;
  int source_task = -1;
  bool truncated = false;

  int num_pairs() const { return static_cast<int>(actions.size()); }
  int num_states() const { return num_pairs() + 1; }
};

enum class OptionKind { kSubPolicy, kScripted };

// A while-loop option: a sub-policy (or fixed action script) executed
// greedily for z steps. Initiation set is all states; termination is the
// z-step countdown.
struct OptionDef {
  OptionKind kind = OptionKind::kSubPolicy;
  SubPolicy sub;
  std::vector<int> actions;  // scripted only
  int z = 1;
  int source_task = -1;
  int candidate_id = -1;

  int greedy_action(std::span<const double> obs, int step_in_option) const {
    return kind == OptionKind::kScripted ? actions[step_in_option]
                                         : subpolicy_greedy_action(sub, obs);
  }
};

struct CandidateSet {
  std::vector<OptionDef> options;
  int t_max = 0;
};

// Rolls the policy out greedily (ties to the lowest action index) from the
// task's first start candidate until terminal or the step cap.
Trajectory rollout_greedy(const Mlp& policy, const GridSpec& task, int source_task = -1);

struct CandidateCaps {
  int max_z = 0;           // 0 = no cap
  int max_candidates = 0;  // 0 = no cap; deterministic truncation otherwise
};

// One option per (sub-policy, z) with z in 1..T_max, T_max taken from the
// supplied trajectories.
CandidateSet generate_candidates(const std::vector<std::vector<SubPolicy>>& per_task_subpolicies,
                                 const std::vector<Trajectory>& trajectories,
                                 CandidateCaps caps = {});

// True iff the option, started at position j of the trajectory, reproduces
// the recorded actions for its whole loop: j + z <= T+1 and the option's
// greedy action at every covered observation matches.
bool is_applicable(const OptionDef& option, const Trajectory& traj, int j);

struct LossResult {
  double loss = 0.0;
  double log_loss = 0.0;
  std::vector<int> decisions;  // table M; decisions[j] = min decisions to reach s_j
};

// Minimum-decision dynamic program over the trajectory: decisions[j] is the
// fewest primitive/option choices that reproduce the prefix up to s_j. The
// returned loss is num_states * p^-decisions[T+1], evaluated in log space
// so long trajectories do not overflow.
LossResult compute_loss(const Trajectory& traj, double p_uniform,
                        std::span<const OptionDef> options);

enum class ExclusionPolicy { kLeaveOwnTaskOut, kTrainValSplit };

struct SelectionConfig {
  ExclusionPolicy exclusion = ExclusionPolicy::kLeaveOwnTaskOut;
  std::vector<int> train_tasks;  // split mode: candidate sources
  std::vector<int> val_tasks;    // split mode: scored trajectories
};

struct SelectionStep {
  int iteration = 0;
  int candidate_id = -1;
  double total_loss = 0.0;
  double log_total_loss = 0.0;
};

struct SelectionResult {
  std::vector<OptionDef> selected;  // in acceptance order
  std::vector<SelectionStep> trace;
  double baseline_loss = 0.0;  // no options, p = 1/|A|
  double baseline_log_loss = 0.0;
  double final_loss = 0.0;
  double final_log_loss = 0.0;
};

// Sum over scored trajectories of the Levin loss at probability p, with
// option/trajectory pairs filtered by the exclusion policy (an option never
// covers its own source trajectory in this view). Returned in log space.
double selection_log_total(std::span<const OptionDef> options,
                           const std::vector<Trajectory>& trajectories, int n_primitives,
                           const SelectionConfig& cfg, double p);

// Greedy minimization of the summed Levin loss. Candidates are ranked by the
// decrease they produce on their bias-filtered trajectory set (own-task
// trajectories never score their own options; split mode scores training-task
// candidates on validation trajectories only), comparing the enlarged-pool
// probability 1/(|A|+|selected|+1) against the current 1/(|A|+|selected|).
// An accepted candidate must also strictly decrease the unfiltered total
// loss, which is what the trace records, so the trace is strictly
// decreasing. Ties break to smaller z, then smaller candidate id.
SelectionResult greedy_select(const CandidateSet& candidates,
                              const std::vector<Trajectory>& trajectories, int n_primitives,
                              const SelectionConfig& cfg = {});

// Baseline options: each replays a fixed random primitive sequence of the
// given length (z = length).
std::vector<OptionDef> random_options(int n_primitives, int length, int count,
                                      std::uint64_t seed);

// ---------------------------------------------------------------------------
// Option library file

struct OptionLibrary {
  int n_primitives = 0;
  std::vector<std::unique_ptr<Mlp>> policies;  // owners for sub-policy options
  std::vector<OptionDef> options;
};

// The library file stores, per option, its source task, mask, z and the
// weight file of the source policy (path relative to the library file).
void save_option_library(const std::vector<OptionDef>& options, int n_primitives,
                         const std::vector<std::string>& policy_files_by_task,
                         const std::string& path);
OptionLibrary load_option_library(const std::string& path);

void save_selection_log(const SelectionResult& result, const std::string& path);

}  // namespace optx
