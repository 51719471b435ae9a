#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dsdf/config.hpp"
#include "dsdf/errors.hpp"
#include "support.hpp"

using namespace dsdf;
namespace fs = std::filesystem;

TEST_CASE("builtin scenarios") {
  for (const auto& name : builtin_scenario_names()) {
    const auto s = builtin_scenario(name);
    CHECK(s.name == name);
    CHECK_NOTHROW(s.validate());
    CHECK(s.targets.size() == static_cast<std::size_t>(s.agent_count));
    CHECK(s.beta.size() == static_cast<std::size_t>(s.agent_count));
    CHECK(scenario_from_json(nlohmann::json::parse(to_json(s).dump())).resource_budget == s.resource_budget);
  }
  const auto p1 = builtin_scenario("paper_case1");
  CHECK(p1.rows == 30);
  CHECK(p1.agent_count == 6);
  CHECK(p1.food_count == 100);
  CHECK(p1.resource_budget == 220);
  CHECK(p1.episode_limit == 500);
  CHECK(p1.target_sum() == 220.0);
  const auto p2 = builtin_scenario("paper_case2");
  CHECK(p2.resource_budget == 200);
  CHECK(p2.target_sum() > 200.0);
  CHECK_THROWS_AS(builtin_scenario("desk_case3"), UsageError);
}

TEST_CASE("scenario overrides and validation") {
  const auto s = scenario_from_json(nlohmann::json::parse(R"({"base": "desk_case1", "episode_limit": 40})"));
  CHECK(s.episode_limit == 40);
  CHECK(s.resource_budget == 20);

  CHECK_THROWS_AS(scenario_from_json(nlohmann::json::parse(R"({"base": "desk_case1", "resource_budget": 19})")),
                  ConfigError);
  CHECK_THROWS_AS(scenario_from_json(nlohmann::json::parse(R"({"base": "desk_case1", "beta": [0, 0, 0.3, 1.5]})")),
                  ConfigError);
  CHECK_THROWS_AS(scenario_from_json(nlohmann::json::parse(R"({"base": "desk_case1", "targets": [1, 2]})")),
                  ConfigError);
  CHECK_THROWS_AS(scenario_from_json(nlohmann::json(3)), ConfigError);

  Scenario scarce = builtin_scenario("desk_case2");
  scarce.resource_budget = 20;
  CHECK_THROWS_AS(scarce.validate(), ConfigError);
}

TEST_CASE("train configs") {
  TrainConfig c;
  c.scenario = tiny_scenario();
  c.method = Method::Penalize;
  c.seed = 42;
  c.gamma_warmup_steps = 7;
  c.sizes.utility_hidden = {5, 6};
  const auto back = train_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(to_json(back) == to_json(c));

  CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"scenario": "desk_case1", "lr_thetaa": 1})")),
                  ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"scenario": "desk_case1", "batch_size": 0})")),
                  ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"scenario": "desk_case1", "gamma": 1.5})")),
                  ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"scenario": "desk_case1", "method": "vdn"})")),
                  UsageError);
  CHECK(method_from_string("iql") == Method::Iql);
  CHECK(to_string(Method::Dsdf) == "dsdf");
}

TEST_CASE("config files") {
  CHECK_THROWS_AS(load_train_config("/nonexistent/dsdf.json"), ConfigError);
  const auto p = fs::temp_directory_path() / "dsdf_test_bad.json";
  std::ofstream(p) << "{ not json";
  CHECK_THROWS_AS(load_train_config(p), ConfigError);
  fs::remove(p);

  for (const char* name : {"desk_case1", "desk_case2", "paper_case1", "paper_case2"}) {
    const auto c = load_train_config(fs::path(DSDF_CONFIG_DIR) / (std::string(name) + ".json"));
    CHECK(c.scenario.name == name);
  }
}
