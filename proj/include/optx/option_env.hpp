#pragma once

#include <memory>
#include <string>
#include <vector>

#include "optx/grid.hpp"
#include "optx/options.hpp"

namespace optx {

inline int augmented_action_count(int n_primitives, std::span<const OptionDef> options) {
  return n_primitives + static_cast<int>(options.size());
}

struct EpisodeTraceRow {
  int decision_index = 0;
  std::string action_kind;  // "primitive" | "option"
  int action_id = 0;
  int kappa = 0;
  double reward = 0.0;
};

// Call-and-return wrapper: actions [0, |A|) pass through, actions
// [|A|, |A|+|options|) run the option's greedy policy for up to z primitive
// steps, stopping early on terminal/truncated. Rewards inside an option are
// aggregated with gamma^k; StepResult.kappa reports the primitive steps
// consumed, the base environment's step counter advances by kappa.
class AugmentedEnv : public Env {
 public:
  AugmentedEnv(std::unique_ptr<Env> base, std::vector<OptionDef> options, double gamma);

  int action_count() const override;
  int observation_size() const override { return base_->observation_size(); }
  Vec reset(RngStream& rng) override;
  StepResult step(int action) override;
  bool done() const override { return base_->done(); }
  int steps_taken() const override { return base_->steps_taken(); }

  const std::vector<OptionDef>& options() const { return options_; }

  // When set, every decision appends one row (cleared on reset).
  void set_trace_sink(std::vector<EpisodeTraceRow>* sink) { trace_ = sink; }

 private:
  std::unique_ptr<Env> base_;
  std::vector<OptionDef> options_;
  double gamma_;
  Vec current_obs_;
  int decision_index_ = 0;
  std::vector<EpisodeTraceRow>* trace_ = nullptr;
};

void write_episode_trace(const std::vector<EpisodeTraceRow>& rows, const std::string& path);

}  // namespace optx
