#include "dsdf/scenario.hpp"

#include <numeric>

#include "dsdf/errors.hpp"

namespace dsdf {
namespace {

std::string_view case_name(ResourceCase c) {
  switch (c) {
    case ResourceCase::Enough:
      return "enough";
    case ResourceCase::Scarce:
      return "scarce";
    case ResourceCase::Unspecified:
      break;
  }
  return "unspecified";
}

ResourceCase case_from_name(std::string_view s) {
  if (s == "enough") return ResourceCase::Enough;
  if (s == "scarce") return ResourceCase::Scarce;
  if (s == "unspecified") return ResourceCase::Unspecified;
  throw ConfigError("unknown resource_case '" + std::string(s) + "'");
}

Scenario paper_base() {
  Scenario s;
  s.rows = 30;
  s.cols = 30;
  s.agent_count = 6;
  s.food_count = 100;
  s.targets = {20, 20, 30, 60, 30, 60};
  s.beta = {0.0, 0.2, 0.0, 0.0, 0.4, 0.6};
  s.episode_limit = 500;
  return s;
}

Scenario desk_base() {
  Scenario s;
  s.rows = 10;
  s.cols = 10;
  s.agent_count = 4;
  s.food_count = 12;
  s.targets = {4, 4, 6, 6};
  s.beta = {0.0, 0.0, 0.3, 0.6};
  s.episode_limit = 100;
  return s;
}

}  // namespace

double Scenario::target_sum() const { return std::accumulate(targets.begin(), targets.end(), 0.0); }

void Scenario::validate() const {
  auto fail = [this](const std::string& msg) { throw ConfigError("scenario '" + name + "': " + msg); };
  if (rows <= 0 || cols <= 0) fail("grid dimensions must be positive");
  if (agent_count <= 0) fail("agent_count must be positive");
  if (food_count <= 0) fail("food_count must be positive");
  if (static_cast<long>(food_count) + agent_count > static_cast<long>(rows) * cols) {
    fail("food_count + agent_count exceeds the number of cells");
  }
  if (max_food_level < 1) fail("max_food_level must be >= 1");
  if (resource_budget < food_count || resource_budget > food_count * max_food_level) {
    fail("resource budget " + std::to_string(resource_budget) + " is infeasible for " +
         std::to_string(food_count) + " foods with levels in [1, " +
         std::to_string(max_food_level) + "]");
  }
  if (targets.size() != static_cast<std::size_t>(agent_count)) fail("need one target per agent");
  for (double t : targets) {
    if (!(t > 0.0)) fail("targets must be positive");
  }
  if (beta.size() != static_cast<std::size_t>(agent_count)) fail("need one beta per agent");
  for (double b : beta) {
    if (!(b >= 0.0 && b <= 1.0)) fail("beta values must lie in [0, 1]");
  }
  if (episode_limit <= 0) fail("episode_limit must be positive");
  if (sight_radius < 0) fail("sight_radius must be >= 0");
  if (!(overshoot_penalty >= 0.0)) fail("overshoot_penalty must be >= 0");
  const double sum = target_sum();
  if (resource_case == ResourceCase::Enough && sum != resource_budget) {
    fail("enough-resources case requires sum(targets) == budget");
  }
  if (resource_case == ResourceCase::Scarce && !(sum > resource_budget)) {
    fail("scarce-resources case requires sum(targets) > budget");
  }
}

Scenario builtin_scenario(std::string_view name) {
  Scenario s;
  if (name == "paper_case1") {
    s = paper_base();
    s.resource_budget = 220;
    s.resource_case = ResourceCase::Enough;
  } else if (name == "paper_case2") {
    s = paper_base();
    s.resource_budget = 200;
    s.resource_case = ResourceCase::Scarce;
  } else if (name == "desk_case1") {
    s = desk_base();
    s.resource_budget = 20;
    s.resource_case = ResourceCase::Enough;
  } else if (name == "desk_case2") {
    s = desk_base();
    s.resource_budget = 17;
    s.resource_case = ResourceCase::Scarce;
  } else {
    throw UsageError("unknown scenario '" + std::string(name) + "'");
  }
  s.name = std::string(name);
  s.validate();
  return s;
}

std::vector<std::string> builtin_scenario_names() {
  return {"paper_case1", "paper_case2", "desk_case1", "desk_case2"};
}

nlohmann::json to_json(const Scenario& s) {
  return {{"name", s.name},
          {"rows", s.rows},
          {"cols", s.cols},
          {"agent_count", s.agent_count},
          {"food_count", s.food_count},
          {"resource_budget", s.resource_budget},
          {"targets", s.targets},
          {"beta", s.beta},
          {"episode_limit", s.episode_limit},
          {"sight_radius", s.sight_radius},
          {"overshoot_penalty", s.overshoot_penalty},
          {"max_food_level", s.max_food_level},
          {"resource_case", case_name(s.resource_case)}};
}

Scenario scenario_from_json(const nlohmann::json& j) {
  if (j.is_string()) return builtin_scenario(j.get<std::string>());
  if (!j.is_object()) throw ConfigError("scenario must be a builtin name or an object");
  try {
    Scenario s = j.contains("base") ? builtin_scenario(j.at("base").get<std::string>()) : Scenario{};
    s.name = j.value("name", s.name);
    s.rows = j.value("rows", s.rows);
    s.cols = j.value("cols", s.cols);
    s.agent_count = j.value("agent_count", s.agent_count);
    s.food_count = j.value("food_count", s.food_count);
    s.resource_budget = j.value("resource_budget", s.resource_budget);
    if (j.contains("targets")) s.targets = j.at("targets").get<std::vector<double>>();
    if (j.contains("beta")) s.beta = j.at("beta").get<std::vector<double>>();
    s.episode_limit = j.value("episode_limit", s.episode_limit);
    s.sight_radius = j.value("sight_radius", s.sight_radius);
    s.overshoot_penalty = j.value("overshoot_penalty", s.overshoot_penalty);
    s.max_food_level = j.value("max_food_level", s.max_food_level);
    if (j.contains("resource_case")) s.resource_case = case_from_name(j.at("resource_case").get<std::string>());
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scenario block: ") + e.what());
  }
}

}  // namespace dsdf
