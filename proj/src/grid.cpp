#include "optx/grid.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace optx {

std::string domain_name(DomainKind d) {
  return d == DomainKind::kComboGrid ? "combogrid" : "maze";
}

DomainKind domain_from_name(const std::string& s) {
  if (s == "combogrid") return DomainKind::kComboGrid;
  if (s == "maze") return DomainKind::kMaze;
  throw SchemaError("unknown domain: " + s);
}

std::string phase_name(Phase p) { return p == Phase::kSource ? "source" : "target"; }

Phase phase_from_name(const std::string& s) {
  if (s == "source") return Phase::kSource;
  if (s == "target") return Phase::kTarget;
  throw SchemaError("unknown phase: " + s);
}

bool GridSpec::is_wall(Cell c) const {
  return std::find(walls.begin(), walls.end(), c) != walls.end();
}

void GridSpec::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("task " + id + ": non-positive grid size");
  if (goals.empty()) throw ConfigError("task " + id + ": no goals");
  if (start_candidates.empty()) throw ConfigError("task " + id + ": no start candidates");
  if (max_steps <= 0) throw ConfigError("task " + id + ": non-positive max_steps");
  auto check = [&](Cell c, const char* what) {
    if (!in_bounds(c)) throw ConfigError("task " + id + ": " + what + " out of bounds");
    if (is_wall(c)) throw ConfigError("task " + id + ": " + what + " inside a wall");
  };
  for (Cell c : goals) check(c, "goal");
  for (Cell c : start_candidates) check(c, "start");
  for (Cell c : walls) {
    if (!in_bounds(c)) throw ConfigError("task " + id + ": wall out of bounds");
  }
}

// ---------------------------------------------------------------------------
// ComboGrid

namespace {

// -1 when the extended buffer prefixes no combo, the combo index when it
// completes one, -2 when it is a proper prefix.
int classify_buffer(const std::vector<int>& buf) {
  for (std::size_t ci = 0; ci < kCombos.size(); ++ci) {
    if (buf.size() > kCombos[ci].size()) continue;
    bool prefix = true;
    for (std::size_t i = 0; i < buf.size(); ++i) {
      if (buf[i] != kCombos[ci][i]) {
        prefix = false;
        break;
      }
    }
    if (!prefix) continue;
    return buf.size() == kCombos[ci].size() ? static_cast<int>(ci) : -2;
  }
  return -1;
}

}  // namespace

ComboState combogrid_initial_state(const GridSpec& spec, Cell start) {
  ComboState s;
  s.agent = start;
  s.collected.assign(spec.goals.size(), 0);
  return s;
}

std::pair<ComboState, StepResult> combogrid_step(const ComboState& state, const GridSpec& spec,
                                                 int action) {
  if (action < 0 || action >= kComboActions) {
    throw std::invalid_argument("combogrid_step: action must be in {0,1,2}");
  }
  if (state.terminal) throw std::invalid_argument("combogrid_step: episode already terminal");

  ComboState next = state;
  next.buffer.push_back(action);
  bool moved_onto_goal = false;
  int goal_idx = -1;

  int kind = classify_buffer(next.buffer);
  if (kind >= 0) {
    // Completed combo: the buffer is consumed whether or not the move lands.
    Cell dst{state.agent.row + kComboDeltas[kind].row,
             state.agent.col + kComboDeltas[kind].col};
    next.buffer.clear();
    if (spec.in_bounds(dst) && !spec.is_wall(dst)) {
      next.agent = dst;
      for (std::size_t g = 0; g < spec.goals.size(); ++g) {
        if (spec.goals[g] == dst && !next.collected[g]) {
          moved_onto_goal = true;
          goal_idx = static_cast<int>(g);
          break;
        }
      }
    }
  } else if (kind == -1) {
    // Dead action: history resets and the action itself is discarded.
    next.buffer.clear();
  }
  next.steps_taken = state.steps_taken + 1;

  StepResult r;
  if (spec.phase == Phase::kSource) {
    if (moved_onto_goal) {
      r.reward = 0.0;
      r.terminal = true;
    } else {
      r.reward = -1.0;
    }
  } else {
    if (moved_onto_goal) {
      r.reward = 10.0;
      next.collected[goal_idx] = 1;
      bool all = std::all_of(next.collected.begin(), next.collected.end(),
                             [](std::uint8_t c) { return c != 0; });
      r.terminal = all;
    } else {
      r.reward = 0.0;
    }
  }
  next.terminal = r.terminal;
  if (!r.terminal && next.steps_taken >= spec.max_steps) r.truncated = true;
  r.obs = combogrid_encode(next, spec);
  return {std::move(next), std::move(r)};
}

int combogrid_observation_size(const GridSpec& spec) {
  return 2 * spec.width * spec.height + kComboLength * kComboActions - kComboActions;
}

Vec combogrid_encode(const ComboState& state, const GridSpec& spec) {
  const int cells = spec.width * spec.height;
  Vec obs(2 * cells + (kComboLength - 1) * kComboActions, 0.0);
  obs[state.agent.row * spec.width + state.agent.col] = 1.0;
  for (std::size_t g = 0; g < spec.goals.size(); ++g) {
    if (!state.collected[g]) {
      obs[cells + spec.goals[g].row * spec.width + spec.goals[g].col] = 1.0;
    }
  }
  const int base = 2 * cells;
  for (std::size_t i = 0; i < state.buffer.size(); ++i) {
    obs[base + i * kComboActions + state.buffer[i]] = 1.0;
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Maze

namespace {

constexpr std::array<Cell, 4> kFacingDeltas = {{{-1, 0}, {0, 1}, {1, 0}, {0, -1}}};

Cell add(Cell a, Cell b) { return Cell{a.row + b.row, a.col + b.col}; }
Cell scale(Cell a, int k) { return Cell{a.row * k, a.col * k}; }

}  // namespace

MazeState maze_initial_state(const GridSpec& spec, Cell start, int facing) {
  if (!spec.in_bounds(start) || spec.is_wall(start)) {
    throw ConfigError("maze start cell blocked or out of bounds");
  }
  MazeState s;
  s.agent = start;
  s.facing = facing;
  return s;
}

std::pair<MazeState, StepResult> maze_step(const MazeState& state, const GridSpec& spec,
                                           int action) {
  if (action < 0 || action > 2) {
    throw std::invalid_argument("maze_step: action must be in {0,1,2}");
  }
  if (state.terminal) throw std::invalid_argument("maze_step: episode already terminal");

  MazeState next = state;
  bool reached_goal = false;
  if (action == 0) {
    next.facing = (state.facing + 3) % 4;
  } else if (action == 1) {
    next.facing = (state.facing + 1) % 4;
  } else {
    Cell dst = add(state.agent, kFacingDeltas[state.facing]);
    if (spec.in_bounds(dst) && !spec.is_wall(dst)) {
      next.agent = dst;
      reached_goal = std::find(spec.goals.begin(), spec.goals.end(), dst) != spec.goals.end();
    }
  }
  next.steps_taken = state.steps_taken + 1;

  StepResult r;
  if (reached_goal) {
    r.terminal = true;
    r.reward = spec.phase == Phase::kSource ? 0.0 : 1.0;
  } else {
    r.reward = spec.phase == Phase::kSource ? -1.0 : 0.0;
  }
  next.terminal = r.terminal;
  if (!r.terminal && next.steps_taken >= spec.max_steps) r.truncated = true;
  r.obs = maze_encode(next, spec);
  return {std::move(next), std::move(r)};
}

std::array<std::array<bool, kMazeViewSize>, kMazeViewSize> maze_visibility(
    const MazeState& state, const GridSpec& spec) {
  const Cell fwd = kFacingDeltas[state.facing];
  const Cell right = kFacingDeltas[(state.facing + 1) % 4];
  auto world = [&](int f, int l) {
    return add(add(state.agent, scale(fwd, f)), scale(right, l - kMazeViewSize / 2));
  };
  std::array<std::array<bool, kMazeViewSize>, kMazeViewSize> visible{};
  std::array<std::array<bool, kMazeViewSize>, kMazeViewSize> queued{};
  std::vector<std::pair<int, int>> queue;
  visible[0][kMazeViewSize / 2] = true;
  queued[0][kMazeViewSize / 2] = true;
  queue.emplace_back(0, kMazeViewSize / 2);
  while (!queue.empty()) {
    auto [f, l] = queue.back();
    queue.pop_back();
    Cell c = world(f, l);
    // Sight spreads only through open in-grid cells.
    if (!spec.in_bounds(c) || spec.is_wall(c)) continue;
    constexpr int df[4] = {1, -1, 0, 0};
    constexpr int dl[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      int nf = f + df[k];
      int nl = l + dl[k];
      if (nf < 0 || nf >= kMazeViewSize || nl < 0 || nl >= kMazeViewSize) continue;
      visible[nf][nl] = true;
      if (!queued[nf][nl]) {
        queued[nf][nl] = true;
        queue.emplace_back(nf, nl);
      }
    }
  }
  return visible;
}

Vec maze_encode(const MazeState& state, const GridSpec& spec) {
  const Cell fwd = kFacingDeltas[state.facing];
  const Cell right = kFacingDeltas[(state.facing + 1) % 4];
  auto visible = maze_visibility(state, spec);
  Vec obs(kMazeObservationSize, 0.0);
  int k = 0;
  for (int f = 0; f < kMazeViewSize; ++f) {
    for (int l = 0; l < kMazeViewSize; ++l, k += 3) {
      if (!visible[f][l]) continue;
      Cell c = add(add(state.agent, scale(fwd, f)), scale(right, l - kMazeViewSize / 2));
      if (!spec.in_bounds(c)) continue;  // out of bounds encodes as all-zero
      if (std::find(spec.goals.begin(), spec.goals.end(), c) != spec.goals.end()) {
        obs[k] = 1.0;
      } else if (spec.is_wall(c)) {
        obs[k + 1] = 1.0;
      } else {
        obs[k + 2] = 1.0;
      }
    }
  }
  obs[kMazeViewSize * kMazeViewSize * 3 + state.facing] = 1.0;
  return obs;
}

// ---------------------------------------------------------------------------
// Env adapters

ComboGridEnv::ComboGridEnv(GridSpec spec) : spec_(std::move(spec)) {
  if (spec_.domain != DomainKind::kComboGrid) throw ConfigError("ComboGridEnv on non-combogrid task");
  spec_.validate();
}

int ComboGridEnv::observation_size() const { return combogrid_observation_size(spec_); }

Vec ComboGridEnv::reset(RngStream& rng) {
  Cell start = spec_.start_candidates.size() == 1
                   ? spec_.start_candidates[0]
                   : spec_.start_candidates[rng.next_int(
                         static_cast<int>(spec_.start_candidates.size()))];
  state_ = combogrid_initial_state(spec_, start);
  done_ = false;
  return combogrid_encode(state_, spec_);
}

StepResult ComboGridEnv::step(int action) {
  if (done_) throw std::invalid_argument("step on finished episode");
  auto [next, r] = combogrid_step(state_, spec_, action);
  state_ = std::move(next);
  done_ = r.terminal || r.truncated;
  return r;
}

MazeEnv::MazeEnv(GridSpec spec) : spec_(std::move(spec)) {
  if (spec_.domain != DomainKind::kMaze) throw ConfigError("MazeEnv on non-maze task");
  spec_.validate();
}

Vec MazeEnv::reset(RngStream& rng) {
  Cell start = spec_.start_candidates.size() == 1
                   ? spec_.start_candidates[0]
                   : spec_.start_candidates[rng.next_int(
                         static_cast<int>(spec_.start_candidates.size()))];
  state_ = maze_initial_state(spec_, start, spec_.start_facing);
  done_ = false;
  return maze_encode(state_, spec_);
}

StepResult MazeEnv::step(int action) {
  if (done_) throw std::invalid_argument("step on finished episode");
  auto [next, r] = maze_step(state_, spec_, action);
  state_ = std::move(next);
  done_ = r.terminal || r.truncated;
  return r;
}

std::unique_ptr<Env> make_env(const GridSpec& spec) {
  if (spec.domain == DomainKind::kComboGrid) return std::make_unique<ComboGridEnv>(spec);
  return std::make_unique<MazeEnv>(spec);
}

// ---------------------------------------------------------------------------
// Task sets

namespace {

TaskSets build_combogrid_tasks(int size, std::uint64_t seed) {
  if (size < 3 || size > 6) {
    throw ConfigError("combogrid size must be in {3,4,5,6}, got " + std::to_string(size));
  }
  const int w = size;
  const std::array<Cell, 4> corners = {{{0, 0}, {0, w - 1}, {w - 1, w - 1}, {w - 1, 0}}};
  RngStream rng(seed, 17);
  const int rot = rng.next_int(4);

  TaskSets out;
  for (int i = 0; i < 4; ++i) {
    GridSpec t;
    t.id = "combo" + std::to_string(w) + "-src" + std::to_string(i);
    t.domain = DomainKind::kComboGrid;
    t.width = w;
    t.height = w;
    t.start_candidates = {corners[(i + rot) % 4]};
    t.goals = {corners[(i + rot + 2) % 4]};
    t.phase = Phase::kSource;
    t.max_steps = w * w * 80;
    t.validate();
    out.source.push_back(std::move(t));
  }
  GridSpec tgt;
  tgt.id = "combo" + std::to_string(w) + "-tgt0";
  tgt.domain = DomainKind::kComboGrid;
  tgt.width = w;
  tgt.height = w;
  tgt.start_candidates = {Cell{w / 2, w / 2}};
  tgt.goals.assign(corners.begin(), corners.end());
  tgt.phase = Phase::kTarget;
  tgt.max_steps = w * w * 16;
  tgt.validate();
  out.target.push_back(std::move(tgt));
  return out;
}

void add_border_walls(GridSpec& t) {
  for (int r = 0; r < t.height; ++r) {
    for (int c = 0; c < t.width; ++c) {
      if (r == 0 || c == 0 || r == t.height - 1 || c == t.width - 1) {
        t.walls.push_back(Cell{r, c});
      }
    }
  }
}

TaskSets build_maze_tasks(int size, std::uint64_t seed) {
  if (size != 9) throw ConfigError("maze source size must be 9, got " + std::to_string(size));

  TaskSets out;
  for (int i = 0; i < 3; ++i) {
    GridSpec t;
    t.id = "crossing9-src" + std::to_string(i);
    t.domain = DomainKind::kMaze;
    t.width = 9;
    t.height = 9;
    add_border_walls(t);
    RngStream rng(seed, 100 + static_cast<std::uint64_t>(i));
    const bool vertical = rng.next_int(2) == 0;
    const int line = 2 + rng.next_int(5);  // in [2, 6]
    const int gap = 1 + rng.next_int(7);   // in [1, 7]
    for (int k = 1; k <= 7; ++k) {
      if (k == gap) continue;
      t.walls.push_back(vertical ? Cell{k, line} : Cell{line, k});
    }
    t.start_candidates = {Cell{1, 1}};
    t.start_facing = 1;
    t.goals = {Cell{7, 7}};
    t.phase = Phase::kSource;
    t.max_steps = 1000;
    t.validate();
    out.source.push_back(std::move(t));
  }

  // 19x19 four rooms split at row/col 9, one door per shared wall.
  const std::array<Cell, 3> goals = {{{8, 8}, {8, 17}, {17, 17}}};
  for (int i = 0; i < 3; ++i) {
    GridSpec t;
    t.id = "fourrooms19-tgt" + std::to_string(i);
    t.domain = DomainKind::kMaze;
    t.width = 19;
    t.height = 19;
    add_border_walls(t);
    RngStream rng(seed, 200 + static_cast<std::uint64_t>(i));
    const int door_top = 1 + rng.next_int(8);      // vertical wall, rows 1..8
    const int door_bottom = 10 + rng.next_int(8);  // vertical wall, rows 10..17
    const int door_left = 1 + rng.next_int(8);     // horizontal wall, cols 1..8
    const int door_right = 10 + rng.next_int(8);   // horizontal wall, cols 10..17
    for (int k = 1; k <= 17; ++k) {
      if (k != door_top && k != door_bottom) t.walls.push_back(Cell{k, 9});
      if (k != 9 && k != door_left && k != door_right) t.walls.push_back(Cell{9, k});
    }
    t.start_candidates = {Cell{1, 1}};
    t.start_facing = 1;
    t.goals = {goals[i]};
    t.phase = Phase::kTarget;
    t.max_steps = 361;
    t.validate();
    out.target.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TaskSets build_task_sets(DomainKind domain, int size, std::uint64_t seed) {
  return domain == DomainKind::kComboGrid ? build_combogrid_tasks(size, seed)
                                          : build_maze_tasks(size, seed);
}

// ---------------------------------------------------------------------------
// Task-set file

namespace {

nlohmann::json cells_to_json(const std::vector<Cell>& cells) {
  nlohmann::json a = nlohmann::json::array();
  for (Cell c : cells) a.push_back({c.row, c.col});
  return a;
}

std::vector<Cell> cells_from_json(const nlohmann::json& a) {
  std::vector<Cell> out;
  for (const auto& e : a) out.push_back(Cell{e.at(0).get<int>(), e.at(1).get<int>()});
  return out;
}

}  // namespace

std::string task_set_to_json(const std::vector<GridSpec>& tasks) {
  nlohmann::json j;
  j["format_version"] = 1;
  nlohmann::json arr = nlohmann::json::array();
  for (const GridSpec& t : tasks) {
    nlohmann::json jt;
    jt["id"] = t.id;
    jt["domain"] = domain_name(t.domain);
    jt["width"] = t.width;
    jt["height"] = t.height;
    jt["walls"] = cells_to_json(t.walls);
    jt["goals"] = cells_to_json(t.goals);
    jt["start_candidates"] = cells_to_json(t.start_candidates);
    jt["start_facing"] = t.start_facing;
    jt["phase"] = phase_name(t.phase);
    jt["max_steps"] = t.max_steps;
    arr.push_back(std::move(jt));
  }
  j["tasks"] = std::move(arr);
  return j.dump(2) + "\n";
}

std::vector<GridSpec> task_set_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("task-set parse error: ") + e.what(), e.byte);
  }
  try {
    std::vector<GridSpec> out;
    for (const auto& jt : j.at("tasks")) {
      GridSpec t;
      t.id = jt.at("id").get<std::string>();
      t.domain = domain_from_name(jt.at("domain").get<std::string>());
      t.width = jt.at("width").get<int>();
      t.height = jt.at("height").get<int>();
      t.walls = cells_from_json(jt.at("walls"));
      t.goals = cells_from_json(jt.at("goals"));
      t.start_candidates = cells_from_json(jt.at("start_candidates"));
      t.start_facing = jt.at("start_facing").get<int>();
      t.phase = phase_from_name(jt.at("phase").get<std::string>());
      t.max_steps = jt.at("max_steps").get<int>();
      t.validate();
      out.push_back(std::move(t));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("task-set file: ") + e.what());
  }
}

void save_task_set(const std::vector<GridSpec>& tasks, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << task_set_to_json(tasks);
  if (!out) throw IoError("write failed: " + path);
}

std::vector<GridSpec> load_task_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return task_set_from_json(ss.str());
}

}  // namespace optx
