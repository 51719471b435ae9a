#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace dsdf {

// Relation between the sum of per-agent targets and the food budget.
enum class ResourceCase {
  Unspecified,
  Enough,  // sum(targets) == budget
  Scarce,  // sum(targets) > budget
};

struct Scenario {
  std::string name = "custom";
  int rows = 30;
  int cols = 30;
  int agent_count = 6;
  int food_count = 100;
  int resource_budget = 220;  // T: sum of all food levels at reset
  std::vector<double> targets;
  std::vector<double> beta;  // degree of stochasticity per agent
  int episode_limit = 500;
  int sight_radius = 2;
  double overshoot_penalty = 0.5;  // lambda in the shared reward
  int max_food_level = 3;
  ResourceCase resource_case = ResourceCase::Unspecified;

  double target_sum() const;

  // Throws ConfigError on any inconsistency, including a violated case relation.
  void validate() const;
};

// paper_case1, paper_case2, desk_case1, desk_case2. Throws UsageError otherwise.
Scenario builtin_scenario(std::string_view name);
std::vector<std::string> builtin_scenario_names();

nlohmann::json to_json(const Scenario& s);
// Accepts either a builtin name (string) or an object; an object may set
// "base" to a builtin name and override individual fields.
Scenario scenario_from_json(const nlohmann::json& j);

}  // namespace dsdf
