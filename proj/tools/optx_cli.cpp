// Command-line front end for the option-discovery pipeline: train source
// policies, roll them out, select options, train option-augmented target
// agents, and aggregate learning curves.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "optx/harness.hpp"
#include "optx/option_env.hpp"

namespace fs = std::filesystem;
using namespace optx;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  std::string mode_override;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

ExperimentConfig resolve_config(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args.config_path);
  if (!args.out_override.empty()) cfg.out_dir = args.out_override;
  if (!args.mode_override.empty()) cfg.mode = mode_from_name(args.mode_override);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool with_seed) {
  cmd->add_option("--config", args.config_path, "experiment config file (json)")->required();
  cmd->add_option("--out", args.out_override, "override the output directory");
  cmd->add_option("--mode", args.mode_override,
                  "override the mode (dec-options, dec-options-whole, random-options, vanilla)");
  if (with_seed) {
    cmd->add_option("--seed", args.seed, "run a single seed")->required();
    args.seed_set = true;
  }
}

int aggregate_all(const ExperimentConfig& cfg) {
  ArtifactPaths paths(cfg.out_dir);
  std::vector<GridSpec> targets = load_task_set(paths.tasks_target());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    std::vector<std::string> files;
    for (std::uint64_t seed : cfg.seeds) {
      files.push_back(paths.target_curve(seed, cfg.mode, static_cast<int>(t)));
    }
    RunSummary summary = aggregate_runs(files);
    export_csv(summary, paths.summary(cfg.mode, static_cast<int>(t)));
    std::cout << "wrote " << paths.summary(cfg.mode, static_cast<int>(t))
              << " (retained " << summary.n_seeds << " seeds"
              << (summary.resampled ? ", resampled" : "") << ")\n";
  }
  return 0;
}

int run_trace(const ExperimentConfig& cfg, std::uint64_t seed, int task, const std::string& out) {
  ArtifactPaths paths(cfg.out_dir);
  std::vector<GridSpec> targets = load_task_set(paths.tasks_target());
  if (task < 0 || task >= static_cast<int>(targets.size())) {
    throw ConfigError("trace: target task index out of range");
  }
  Mlp policy = load_weights(paths.target_policy(seed, cfg.mode, task));
  std::unique_ptr<Env> env = make_env(targets[task]);
  std::vector<EpisodeTraceRow> rows;
  if (cfg.mode == Mode::kVanilla) {
    RngStream rng(0);
    Vec obs = env->reset(rng);
    int decision = 0;
    while (!env->done()) {
      int a = greedy_action(policy, obs);
      StepResult r = env->step(a);
      rows.push_back(EpisodeTraceRow{decision++, "primitive", a, 1, r.reward});
      obs = r.obs;
    }
  } else {
    OptionLibrary lib = load_option_library(paths.option_library(seed, cfg.mode));
    AugmentedEnv wrapped(std::move(env), lib.options, cfg.target.ppo.gamma);
    wrapped.set_trace_sink(&rows);
    RngStream rng(0);
    Vec obs = wrapped.reset(rng);
    while (!wrapped.done()) {
      obs = wrapped.step(greedy_action(policy, obs)).obs;
    }
  }
  write_episode_trace(rows, out);
  std::cout << "wrote " << out << " (" << rows.size() << " decisions)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"option discovery from trained policy networks"};
  app.require_subcommand(1);

  CommonArgs train_source_args, decompose_args, select_args, train_target_args, run_all_args,
      aggregate_args, trace_args;
  int jobs = 0;
  int trace_task = 0;
  std::string trace_out = "trace.csv";
  std::string preset_name;
  std::string preset_out;

  CLI::App* c_train_source =
      app.add_subcommand("train-source", "train a policy per source task");
  add_common(c_train_source, train_source_args, true);

  CLI::App* c_decompose =
      app.add_subcommand("decompose", "greedy rollouts of the trained source policies");
  add_common(c_decompose, decompose_args, true);

  CLI::App* c_select = app.add_subcommand("select", "build and select the option library");
  add_common(c_select, select_args, true);

  CLI::App* c_train_target =
      app.add_subcommand("train-target", "train option-augmented target agents");
  add_common(c_train_target, train_target_args, true);

  CLI::App* c_run_all = app.add_subcommand("run-all", "full pipeline over all seeds");
  add_common(c_run_all, run_all_args, false);
  c_run_all->add_option("--jobs", jobs, "parallel seed workers (0 = hardware)");

  CLI::App* c_aggregate =
      app.add_subcommand("aggregate", "aggregate target learning curves across seeds");
  add_common(c_aggregate, aggregate_args, false);

  CLI::App* c_trace =
      app.add_subcommand("trace", "greedy episode trace of a trained target agent");
  add_common(c_trace, trace_args, true);
  c_trace->add_option("--task", trace_task, "target task index");
  c_trace->add_option("--trace-out", trace_out, "trace csv path");

  CLI::App* c_write_config =
      app.add_subcommand("write-config", "write a preset experiment config");
  c_write_config
      ->add_option("--preset", preset_name,
                   "combogrid{3,4,5,6}, maze, or desk-combogrid3")
      ->required();
  c_write_config->add_option("--to", preset_out, "output path")->required();
  std::string preset_mode = "dec-options";
  c_write_config->add_option("--mode", preset_mode, "mode the preset targets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_write_config->parsed()) {
      Mode mode = mode_from_name(preset_mode);
      ExperimentConfig cfg;
      if (preset_name == "desk-combogrid3") {
        cfg = desk_combogrid3(mode);
      } else if (preset_name == "maze") {
        cfg = paper_default(DomainKind::kMaze, 9, mode);
      } else if (preset_name.rfind("combogrid", 0) == 0 && preset_name.size() == 10) {
        cfg = paper_default(DomainKind::kComboGrid, preset_name[9] - '0', mode);
      } else {
        throw ConfigError("unknown preset: " + preset_name);
      }
      save_config(cfg, preset_out);
      std::cout << "wrote " << preset_out << "\n";
      return 0;
    }
    if (c_train_source->parsed()) {
      ExperimentConfig cfg = resolve_config(train_source_args);
      ensure_task_files(cfg);
      run_stage_train_source(cfg, train_source_args.seed);
      return 0;
    }
    if (c_decompose->parsed()) {
      ExperimentConfig cfg = resolve_config(decompose_args);
      ensure_task_files(cfg);
      run_stage_decompose(cfg, decompose_args.seed);
      return 0;
    }
    if (c_select->parsed()) {
      ExperimentConfig cfg = resolve_config(select_args);
      ensure_task_files(cfg);
      run_stage_select(cfg, select_args.seed, cfg.mode);
      return 0;
    }
    if (c_train_target->parsed()) {
      ExperimentConfig cfg = resolve_config(train_target_args);
      ensure_task_files(cfg);
      run_stage_train_target(cfg, train_target_args.seed, cfg.mode);
      return 0;
    }
    if (c_run_all->parsed()) {
      ExperimentConfig cfg = resolve_config(run_all_args);
      run_pipeline(cfg, jobs);
      return 0;
    }
    if (c_aggregate->parsed()) {
      return aggregate_all(resolve_config(aggregate_args));
    }
    if (c_trace->parsed()) {
      ExperimentConfig cfg = resolve_config(trace_args);
      return run_trace(cfg, trace_args.seed, trace_task, trace_out);
    }
  } catch (const std::exception& e) {
    const char* stage = "pipeline";
    if (c_train_source->parsed()) stage = "train-source";
    else if (c_decompose->parsed()) stage = "decompose";
    else if (c_select->parsed()) stage = "select";
    else if (c_train_target->parsed()) stage = "train-target";
    else if (c_aggregate->parsed()) stage = "aggregate";
    else if (c_trace->parsed()) stage = "trace";
    else if (c_write_config->parsed()) stage = "write-config";
    std::cerr << "error [" << stage << "]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
