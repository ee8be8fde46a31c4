#include "optx/option_env.hpp"

#include <cmath>
#include <stdexcept>

#include "optx/csv.hpp"

namespace optx {

AugmentedEnv::AugmentedEnv(std::unique_ptr<Env> base, std::vector<OptionDef> options,
                           double gamma)
    : base_(std::move(base)), options_(std::move(options)), gamma_(gamma) {
  for (const OptionDef& opt : options_) {
    if (opt.z < 1) throw ConfigError("AugmentedEnv: option with z < 1");
    if (opt.kind == OptionKind::kScripted &&
        static_cast<int>(opt.actions.size()) < opt.z) {
      throw ConfigError("AugmentedEnv: scripted option shorter than its z");
    }
  }
}

int AugmentedEnv::action_count() const {
  return augmented_action_count(base_->action_count(), options_);
}

Vec AugmentedEnv::reset(RngStream& rng) {
  current_obs_ = base_->reset(rng);
  decision_index_ = 0;
  if (trace_) trace_->clear();
  return current_obs_;
}

StepResult AugmentedEnv::step(int action) {
  const int n_prim = base_->action_count();
  if (action < 0 || action >= action_count()) {
    throw std::invalid_argument("AugmentedEnv: action out of range");
  }
  StepResult out;
  if (action < n_prim) {
    out = base_->step(action);
    out.kappa = 1;
    current_obs_ = out.obs;
  } else {
    const OptionDef& opt = options_[action - n_prim];
    double aggregated = 0.0;
    double discount = 1.0;
    int kappa = 0;
    StepResult last;
    for (int k = 0; k < opt.z; ++k) {
      int prim = opt.greedy_action(current_obs_, k);
      last = base_->step(prim);
      aggregated += discount * last.reward;
      discount *= gamma_;
      ++kappa;
      current_obs_ = last.obs;
      if (last.terminal || last.truncated) break;
    }
    out = std::move(last);
    out.reward = aggregated;
    out.kappa = kappa;
  }
  if (trace_) {
    EpisodeTraceRow row;
    row.decision_index = decision_index_;
    row.action_kind = action < n_prim ? "primitive" : "option";
    row.action_id = action < n_prim ? action : action - n_prim;
    row.kappa = out.kappa;
    row.reward = out.reward;
    trace_->push_back(std::move(row));
  }
  ++decision_index_;
  return out;
}

void write_episode_trace(const std::vector<EpisodeTraceRow>& rows, const std::string& path) {
  CsvTable table;
  table.header = {"decision_index", "action_kind", "action_id", "kappa", "reward"};
  for (const EpisodeTraceRow& r : rows) {
    table.rows.push_back({std::to_string(r.decision_index), r.action_kind,
                          std::to_string(r.action_id), std::to_string(r.kappa),
                          format_double(r.reward)});
  }
  write_csv(table, path);
}

}  // namespace optx
