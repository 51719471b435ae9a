#include "dsdf/env.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include "dsdf/errors.hpp"

namespace dsdf::env {
namespace {

constexpr std::array<Cell, 4> kNeighborOffsets = {Cell{-1, 0}, Cell{1, 0}, Cell{0, 1}, Cell{0, -1}};

double to_float_precision(double x) { return static_cast<double>(static_cast<float>(x)); }

double normalized(int coord, int extent) {
  return extent > 1 ? static_cast<double>(coord) / (extent - 1) : 0.0;
}

Cell offset(Cell c, Cell d) { return {c.row + d.row, c.col + d.col}; }

std::optional<Cell> move_target(Cell c, Action a) {
  switch (a) {
    case Action::North:
      return offset(c, kNeighborOffsets[0]);
    case Action::South:
      return offset(c, kNeighborOffsets[1]);
    case Action::East:
      return offset(c, kNeighborOffsets[2]);
    case Action::West:
      return offset(c, kNeighborOffsets[3]);
    default:
      return std::nullopt;
  }
}

}  // namespace

std::string_view to_string(Action a) {
  switch (a) {
    case Action::North:
      return "north";
    case Action::South:
      return "south";
    case Action::East:
      return "east";
    case Action::West:
      return "west";
    case Action::Load:
      return "load";
    case Action::CarryOn:
      return "carry_on";
    case Action::Leave:
      return "leave";
    case Action::Noop:
      return "noop";
  }
  return "noop";
}

Action action_from_index(std::size_t i) {
  if (i >= kActionCount) throw UsageError("action index out of range: " + std::to_string(i));
  return kAllActions[i];
}

GridWorld::GridWorld(const Scenario& scenario) : scenario_(scenario) {}

GridWorld GridWorld::reset(const Scenario& scenario, std::uint64_t seed) {
  scenario.validate();
  GridWorld world(scenario);
  std::mt19937_64 rng(seed);

  const int cells = scenario.rows * scenario.cols;
  const int needed = scenario.food_count + scenario.agent_count;
  // Partial Fisher-Yates: the first `needed` entries are distinct uniform cells.
  std::vector<int> ids(static_cast<std::size_t>(cells));
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < needed; ++i) {
    std::uniform_int_distribution<int> pick(i, cells - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(rng))]);
  }

  std::uniform_int_distribution<int> level_dist(1, scenario.max_food_level);
  std::vector<int> levels(static_cast<std::size_t>(scenario.food_count));
  for (int& l : levels) l = level_dist(rng);
  int sum = std::accumulate(levels.begin(), levels.end(), 0);
  std::uniform_int_distribution<std::size_t> which(0, levels.size() - 1);
  while (sum != scenario.resource_budget) {
    int& l = levels[which(rng)];
    if (sum < scenario.resource_budget && l < scenario.max_food_level) {
      ++l;
      ++sum;
    } else if (sum > scenario.resource_budget && l > 1) {
      --l;
      --sum;
    }
  }
  for (int i = 0; i < scenario.food_count; ++i) {
    world.foods_[ids[static_cast<std::size_t>(i)]] = levels[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < scenario.agent_count; ++i) {
    AgentBody a;
    a.index = i;
    a.position = world.cell_of(ids[static_cast<std::size_t>(scenario.food_count + i)]);
    a.target = scenario.targets[static_cast<std::size_t>(i)];
    world.agents_.push_back(a);
  }
  world.last_actions_.assign(world.agents_.size(), std::nullopt);
  return world;
}

GridWorld GridWorld::from_layout(const Scenario& scenario, std::vector<FoodItem> foods,
                                 std::vector<AgentBody> agents) {
  GridWorld world(scenario);
  for (const auto& f : foods) {
    if (!world.in_bounds(f.position) || f.level < 1) throw ConfigError("invalid food in layout");
    if (!world.foods_.emplace(world.cell_id(f.position), f.level).second) {
      throw ConfigError("two foods share a cell");
    }
  }
  for (std::size_t i = 0; i < agents.size(); ++i) {
    auto& a = agents[i];
    a.index = static_cast<int>(i);
    if (!world.in_bounds(a.position) || world.foods_.contains(world.cell_id(a.position))) {
      throw ConfigError("agent placed outside the grid or on food");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (agents[j].position == a.position) throw ConfigError("two agents share a cell");
    }
  }
  world.agents_ = std::move(agents);
  world.scenario_.agent_count = static_cast<int>(world.agents_.size());
  world.last_actions_.assign(world.agents_.size(), std::nullopt);
  return world;
}

bool GridWorld::in_bounds(Cell c) const {
  return c.row >= 0 && c.row < scenario_.rows && c.col >= 0 && c.col < scenario_.cols;
}

bool GridWorld::agent_on(Cell c) const {
  return std::any_of(agents_.begin(), agents_.end(), [c](const AgentBody& a) { return a.position == c; });
}

std::optional<int> GridWorld::food_at(Cell c) const {
  if (!in_bounds(c)) return std::nullopt;
  auto it = foods_.find(cell_id(c));
  if (it == foods_.end()) return std::nullopt;
  return it->second;
}

std::vector<FoodItem> GridWorld::foods() const {
  std::vector<FoodItem> out;
  out.reserve(foods_.size());
  for (const auto& [id, level] : foods_) out.push_back({cell_of(id), level});
  return out;
}

std::optional<Cell> GridWorld::first_adjacent_food(Cell c) const {
  for (const Cell d : kNeighborOffsets) {
    const Cell n = offset(c, d);
    if (in_bounds(n) && foods_.contains(cell_id(n))) return n;
  }
  return std::nullopt;
}

std::optional<Cell> GridWorld::first_free_neighbor(Cell c) const {
  for (const Cell d : kNeighborOffsets) {
    const Cell n = offset(c, d);
    if (in_bounds(n) && !foods_.contains(cell_id(n)) && !agent_on(n)) return n;
  }
  return std::nullopt;
}

void GridWorld::resolve_moves(std::span<const Action> actions) {
  // A move is valid into an in-bounds cell holding neither food nor an agent
  // (positions before the step). Contested cells go to the lowest index.
  std::vector<std::optional<Cell>> dest(agents_.size());
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    auto t = move_target(agents_[i].position, actions[i]);
    if (!t || !in_bounds(*t) || foods_.contains(cell_id(*t)) || agent_on(*t)) continue;
    bool taken = false;
    for (std::size_t j = 0; j < i; ++j) taken = taken || (dest[j] && *dest[j] == *t);
    if (!taken) dest[i] = t;
  }
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (dest[i]) agents_[i].position = *dest[i];
  }
}

void GridWorld::resolve_load(std::span<const Action> actions) {
  std::map<int, std::vector<std::size_t>> loaders;  // food cell -> agents
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (actions[i] != Action::Load) continue;
    if (auto f = first_adjacent_food(agents_[i].position)) loaders[cell_id(*f)].push_back(i);
  }
  for (const auto& [food_id, group] : loaders) {
    const int level = foods_.at(food_id);
    int strength = 0;
    for (std::size_t i : group) strength += agents_[i].level;
    if (strength < level) continue;
    const auto share = level * kUnitsPerLevel / static_cast<std::int64_t>(group.size());
    for (std::size_t i : group) agents_[i].consumed_units += share;
    foods_.erase(food_id);
  }
}

void GridWorld::resolve_carry(std::span<const Action> actions) {
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (actions[i] != Action::CarryOn || agents_[i].carried) continue;
    if (auto f = first_adjacent_food(agents_[i].position)) {
      const int id = cell_id(*f);
      agents_[i].carried = foods_.at(id);
      foods_.erase(id);
    }
  }
}

void GridWorld::resolve_leave(std::span<const Action> actions) {
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (actions[i] != Action::Leave) continue;
    auto& a = agents_[i];
    if (!a.carried && a.consumed_units < kUnitsPerLevel) continue;
    auto spot = first_free_neighbor(a.position);
    if (!spot) continue;
    if (a.carried) {
      foods_[cell_id(*spot)] = *a.carried;
      a.carried.reset();
    } else {
      foods_[cell_id(*spot)] = 1;
      a.consumed_units -= kUnitsPerLevel;
    }
  }
}

StepResult GridWorld::step(std::span<const Action> executed) {
  if (done_) throw UsageError("step() called on a finished episode");
  if (executed.size() != agents_.size()) {
    throw UsageError("joint action has " + std::to_string(executed.size()) + " entries, expected " +
                     std::to_string(agents_.size()));
  }
  std::vector<double> before(agents_.size());
  for (std::size_t i = 0; i < agents_.size(); ++i) before[i] = agents_[i].consumed();

  resolve_moves(executed);
  resolve_load(executed);
  resolve_carry(executed);
  resolve_leave(executed);

  ++step_count_;
  for (std::size_t i = 0; i < agents_.size(); ++i) last_actions_[i] = executed[i];

  std::vector<double> after(agents_.size()), targets(agents_.size());
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    after[i] = agents_[i].consumed();
    targets[i] = agents_[i].target;
  }
  StepResult r;
  r.reward = compute_reward(before, after, targets, scenario_.resource_budget,
                            scenario_.overshoot_penalty);
  terminated_ = foods_.empty();
  done_ = terminated_ || step_count_ >= scenario_.episode_limit;
  r.done = done_;
  r.terminated = terminated_;
  return r;
}

std::size_t GridWorld::observation_size(const Scenario& s) {
  const std::size_t window = static_cast<std::size_t>(2 * s.sight_radius + 1);
  return 2 * window * window + 2 + 1 + 1 + kActionCount;
}

std::size_t GridWorld::state_size(const Scenario& s) {
  const std::size_t food_slots = static_cast<std::size_t>(s.food_count) * s.max_food_level;
  return 4 * static_cast<std::size_t>(s.agent_count) + 3 * food_slots;
}

Observation GridWorld::observation(std::size_t agent) const {
  const AgentBody& a = agents_.at(agent);
  const int r = scenario_.sight_radius;
  Observation obs;
  obs.reserve(observation_size());
  const double level_scale = scenario_.max_food_level;
  for (int dr = -r; dr <= r; ++dr) {
    for (int dc = -r; dc <= r; ++dc) {
      const Cell c{a.position.row + dr, a.position.col + dc};
      double food = 0.0, agent_level = 0.0;
      if (in_bounds(c)) {
        if (auto f = foods_.find(cell_id(c)); f != foods_.end()) food = f->second / level_scale;
        for (const auto& other : agents_) {
          if (other.position == c) agent_level = other.level;
        }
      }
      obs.push_back(to_float_precision(food));
      obs.push_back(agent_level);
    }
  }
  obs.push_back(to_float_precision(normalized(a.position.row, scenario_.rows)));
  obs.push_back(to_float_precision(normalized(a.position.col, scenario_.cols)));
  obs.push_back(to_float_precision(a.consumed() / a.target));
  obs.push_back(a.carried ? 1.0 : 0.0);
  for (std::size_t k = 0; k < kActionCount; ++k) {
    obs.push_back(last_actions_[agent] && index(*last_actions_[agent]) == k ? 1.0 : 0.0);
  }
  return obs;
}

std::vector<Observation> GridWorld::observations() const {
  std::vector<Observation> out;
  out.reserve(agents_.size());
  for (std::size_t i = 0; i < agents_.size(); ++i) out.push_back(observation(i));
  return out;
}

GlobalState GridWorld::state() const {
  GlobalState s;
  s.reserve(state_size());
  for (const auto& a : agents_) {
    s.push_back(to_float_precision(normalized(a.position.row, scenario_.rows)));
    s.push_back(to_float_precision(normalized(a.position.col, scenario_.cols)));
    s.push_back(to_float_precision(a.consumed() / a.target));
    s.push_back(a.carried ? 1.0 : 0.0);
  }
  const double level_scale = scenario_.max_food_level;
  for (const auto& [id, level] : foods_) {
    const Cell c = cell_of(id);
    s.push_back(to_float_precision(normalized(c.row, scenario_.rows)));
    s.push_back(to_float_precision(normalized(c.col, scenario_.cols)));
    s.push_back(to_float_precision(level / level_scale));
  }
  s.resize(state_size(), 0.0);
  return s;
}

std::int64_t GridWorld::accounted_units() const {
  std::int64_t units = 0;
  for (const auto& a : agents_) {
    units += a.consumed_units;
    if (a.carried) units += *a.carried * kUnitsPerLevel;
  }
  for (const auto& [id, level] : foods_) units += level * kUnitsPerLevel;
  return units;
}

nlohmann::json GridWorld::snapshot() const {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : agents_) {
    agents.push_back({{"index", a.index},
                      {"row", a.position.row},
                      {"col", a.position.col},
                      {"consumed", a.consumed()},
                      {"carried", a.carried ? *a.carried : 0}});
  }
  nlohmann::json foods = nlohmann::json::array();
  for (const auto& f : this->foods()) foods.push_back({f.position.row, f.position.col, f.level});
  return {{"step", step_count_}, {"agents", agents}, {"foods", foods}, {"done", done_}};
}

double compute_reward(std::span<const double> consumed_before, std::span<const double> consumed_after,
                      std::span<const double> targets, double budget, double overshoot_penalty) {
  double progress = 0.0, overshoot = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double c0 = consumed_before[i], c1 = consumed_after[i], t = targets[i];
    progress += std::min(c1, t) - std::min(c0, t);
    overshoot += std::max(0.0, c1 - t) - std::max(0.0, c0 - t);
  }
  return progress / budget - overshoot_penalty * overshoot / budget;
}

double compute_reward(const GridWorld& before, const GridWorld& after) {
  const std::size_t n = before.agent_count();
  std::vector<double> c0(n), c1(n), t(n);
  for (std::size_t i = 0; i < n; ++i) {
    c0[i] = before.agents()[i].consumed();
    c1[i] = after.agents()[i].consumed();
    t[i] = before.agents()[i].target;
  }
  return compute_reward(c0, c1, t, before.resource_budget(), before.scenario().overshoot_penalty);
}

}  // namespace dsdf::env
