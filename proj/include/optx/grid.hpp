#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "optx/errors.hpp"
#include "optx/mlp.hpp"
#include "optx/rng.hpp"

namespace optx {

enum class DomainKind { kComboGrid, kMaze };
enum class Phase { kSource, kTarget };

std::string domain_name(DomainKind d);
DomainKind domain_from_name(const std::string& s);
std::string phase_name(Phase p);
Phase phase_from_name(const std::string& s);

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

// Static description of one task: layout, start distribution, goals, phase
// and episode limit. Round-trips through the task-set file.
struct GridSpec {
  std::string id;
  DomainKind domain = DomainKind::kComboGrid;
  int width = 0;
  int height = 0;
  std::vector<Cell> walls;
  std::vector<Cell> goals;
  std::vector<Cell> start_candidates;
  int start_facing = 1;  // maze only: 0=N 1=E 2=S 3=W
  Phase phase = Phase::kSource;
  int max_steps = 0;

  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width;
  }
  bool is_wall(Cell c) const;
  void validate() const;
};

struct StepResult {
  Vec obs;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
  int kappa = 1;  // primitive steps consumed (>1 only for option decisions)
};

// Minimal environment surface shared by the base tasks and the
// option-augmented wrapper.
class Env {
 public:
  virtual ~Env() = default;
  virtual int action_count() const = 0;
  virtual int observation_size() const = 0;
  virtual Vec reset(RngStream& rng) = 0;
  virtual StepResult step(int action) = 0;
  virtual bool done() const = 0;
  virtual int steps_taken() const = 0;
};

// ---------------------------------------------------------------------------
// ComboGrid

// Fixed action sequences that move the agent one cell: Down, Up, Right, Left.
inline constexpr std::array<std::array<int, 4>, 4> kCombos = {{
    {0, 2, 2, 1},  // Down
    {0, 0, 1, 1},  // Up
    {1, 2, 1, 0},  // Right
    {1, 0, 2, 2},  // Left
}};
inline constexpr std::array<Cell, 4> kComboDeltas = {{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
inline constexpr int kComboLength = 4;
inline constexpr int kComboActions = 3;

struct ComboState {
  Cell agent;
  std::vector<int> buffer;         // strict prefix of some combo
  std::vector<std::uint8_t> collected;  // one flag per goal
  int steps_taken = 0;
  bool terminal = false;
};

ComboState combogrid_initial_state(const GridSpec& spec, Cell start);
std::pair<ComboState, StepResult> combogrid_step(const ComboState& state, const GridSpec& spec,
                                                 int action);
Vec combogrid_encode(const ComboState& state, const GridSpec& spec);
int combogrid_observation_size(const GridSpec& spec);

// ---------------------------------------------------------------------------
// Maze (turn-left / turn-right / forward, egocentric 5x5 view)

inline constexpr int kMazeViewSize = 5;
inline constexpr int kMazeObservationSize = kMazeViewSize * kMazeViewSize * 3 + 4;

struct MazeState {
  Cell agent;
  int facing = 1;  // 0=N 1=E 2=S 3=W
  int steps_taken = 0;
  bool terminal = false;
};

MazeState maze_initial_state(const GridSpec& spec, Cell start, int facing);
std::pair<MazeState, StepResult> maze_step(const MazeState& state, const GridSpec& spec,
                                           int action);
Vec maze_encode(const MazeState& state, const GridSpec& spec);

// Visibility of the forward window cells: flood fill from the agent cell,
// walls are seen but do not propagate sight. Exposed for tests.
std::array<std::array<bool, kMazeViewSize>, kMazeViewSize> maze_visibility(
    const MazeState& state, const GridSpec& spec);

// ---------------------------------------------------------------------------

class ComboGridEnv : public Env {
 public:
  explicit ComboGridEnv(GridSpec spec);
  int action_count() const override { return kComboActions; }
  int observation_size() const override;
  Vec reset(RngStream& rng) override;
  StepResult step(int action) override;
  bool done() const override { return done_; }
  int steps_taken() const override { return state_.steps_taken; }
  const ComboState& state() const { return state_; }
  const GridSpec& spec() const { return spec_; }

 private:
  GridSpec spec_;
  ComboState state_;
  bool done_ = true;
};

class MazeEnv : public Env {
 public:
  explicit MazeEnv(GridSpec spec);
  int action_count() const override { return 3; }
  int observation_size() const override { return kMazeObservationSize; }
  Vec reset(RngStream& rng) override;
  StepResult step(int action) override;
  bool done() const override { return done_; }
  int steps_taken() const override { return state_.steps_taken; }
  const MazeState& state() const { return state_; }

 private:
  GridSpec spec_;
  MazeState state_;
  bool done_ = true;
};

std::unique_ptr<Env> make_env(const GridSpec& spec);

// ---------------------------------------------------------------------------
// Task sets

struct TaskSets {
  std::vector<GridSpec> source;
  std::vector<GridSpec> target;
};

// Deterministic layouts for a domain/size/seed. ComboGrid supports W in
// {3,4,5,6}: four source tasks with distinct start/goal corner pairs and one
// target task with four markers. Maze supports size 9: three 9x9 crossing
// tasks and three 19x19 four-room tasks of increasing start/goal separation.
TaskSets build_task_sets(DomainKind domain, int size, std::uint64_t seed);

std::string task_set_to_json(const std::vector<GridSpec>& tasks);
std::vector<GridSpec> task_set_from_json(const std::string& text);
void save_task_set(const std::vector<GridSpec>& tasks, const std::string& path);
std::vector<GridSpec> load_task_set(const std::string& path);

}  // namespace optx
