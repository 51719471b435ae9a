#pragma once
// Level-based foraging grid world with per-agent consumption targets and the
// two extra inventory actions (CarryOn, Leave).

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dsdf/scenario.hpp"
#include "json.hpp"

namespace dsdf::env {

enum class Action : std::uint8_t { North, South, East, West, Load, CarryOn, Leave, Noop };

inline constexpr std::size_t kActionCount = 8;
inline constexpr std::array<Action, kActionCount> kAllActions = {
    Action::North, Action::South,   Action::East,  Action::West,
    Action::Load,  Action::CarryOn, Action::Leave, Action::Noop};

std::string_view to_string(Action a);
inline std::size_t index(Action a) { return static_cast<std::size_t>(a); }
Action action_from_index(std::size_t i);

struct Cell {
  int row = 0;
  int col = 0;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct FoodItem {
  Cell position;
  int level = 1;
  friend bool operator==(const FoodItem&, const FoodItem&) = default;
};

// Consumption is tracked in twelfths of a food level so that equal splits
// among 1..4 loaders stay exact integers.
inline constexpr std::int64_t kUnitsPerLevel = 12;

struct AgentBody {
  int index = 0;  // 0-based
  Cell position;
  int level = 1;
  std::optional<int> carried;  // level of the carried food item
  std::int64_t consumed_units = 0;
  double target = 1.0;

  double consumed() const { return static_cast<double>(consumed_units) / kUnitsPerLevel; }
  friend bool operator==(const AgentBody&, const AgentBody&) = default;
};

// Values are rounded to float precision at construction, so storing them as
// float in the replay buffer is lossless.
using Observation = std::vector<double>;
using GlobalState = std::vector<double>;

struct StepResult {
  double reward = 0.0;
  bool done = false;        // episode over (foods exhausted or step limit)
  bool terminated = false;  // episode over because no food is left on the grid
};

class GridWorld {
 public:
  // Random layout: foods and agents on distinct uniform cells, food levels
  // summing exactly to the scenario budget. Deterministic for a given seed.
  static GridWorld reset(const Scenario& scenario, std::uint64_t seed);

  // Explicit layout for fixtures; no budget check is made.
  static GridWorld from_layout(const Scenario& scenario, std::vector<FoodItem> foods,
                               std::vector<AgentBody> agents);

  StepResult step(std::span<const Action> executed);

  Observation observation(std::size_t agent) const;
  std::vector<Observation> observations() const;
  GlobalState state() const;

  std::size_t observation_size() const { return observation_size(scenario_); }
  std::size_t state_size() const { return state_size(scenario_); }
  static std::size_t observation_size(const Scenario& s);
  static std::size_t state_size(const Scenario& s);

  const Scenario& scenario() const { return scenario_; }
  std::size_t agent_count() const { return agents_.size(); }
  const std::vector<AgentBody>& agents() const { return agents_; }
  std::vector<FoodItem> foods() const;
  std::optional<int> food_at(Cell c) const;
  int step_count() const { return step_count_; }
  bool done() const { return done_; }
  bool terminated() const { return terminated_; }
  int resource_budget() const { return scenario_.resource_budget; }

  // sum(consumed) + sum(on-grid levels) + sum(carried levels), in consumption units.
  std::int64_t accounted_units() const;

  nlohmann::json snapshot() const;

 private:
  explicit GridWorld(const Scenario& scenario);

  bool in_bounds(Cell c) const;
  int cell_id(Cell c) const { return c.row * scenario_.cols + c.col; }
  Cell cell_of(int id) const { return {id / scenario_.cols, id % scenario_.cols}; }
  bool agent_on(Cell c) const;
  std::optional<Cell> first_adjacent_food(Cell c) const;
  std::optional<Cell> first_free_neighbor(Cell c) const;

  void resolve_moves(std::span<const Action> actions);
  void resolve_load(std::span<const Action> actions);
  void resolve_carry(std::span<const Action> actions);
  void resolve_leave(std::span<const Action> actions);

  Scenario scenario_;
  std::map<int, int> foods_;  // cell id -> level, ordered row-major
  std::vector<AgentBody> agents_;
  std::vector<std::optional<Action>> last_actions_;
  int step_count_ = 0;
  bool done_ = false;
  bool terminated_ = false;
};

// Shared reward between two consecutive consumption snapshots:
//   (1/T) sum_i [min(c'_i, T_i) - min(c_i, T_i)]
//   - (lambda/T) sum_i [max(0, c'_i - T_i) - max(0, c_i - T_i)]
double compute_reward(std::span<const double> consumed_before, std::span<const double> consumed_after,
                      std::span<const double> targets, double budget, double overshoot_penalty);
double compute_reward(const GridWorld& before, const GridWorld& after);

}  // namespace dsdf::env
