#pragma once
// Run configuration and its JSON file format (see README "Config files").

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dsdf/agents.hpp"
#include "dsdf/gamma_dsdf.hpp"
#include "dsdf/gamma_penalize.hpp"
#include "dsdf/scenario.hpp"
#include "json.hpp"

namespace dsdf {

enum class Method { Dsdf, Penalize, Qmix, Iql };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);  // throws UsageError

struct NetworkSizes {
  std::vector<std::size_t> utility_hidden = {64, 64};
  std::size_t history_k = 4;
  std::size_t mixer_embed = 32;
  std::size_t gamma_hidden = 32;
  std::size_t gamma_hyper_hidden = 64;
};

struct TrainConfig {
  Scenario scenario = builtin_scenario("desk_case1");
  Method method = Method::Dsdf;
  std::uint64_t seed = 0;

  double lr_theta = 5e-4;
  double lr_gamma = 5e-4;
  std::size_t batch_size = 32;  // episodes
  std::size_t buffer_capacity = 5000;  // episodes
  std::size_t target_sync_interval = 200;  // train steps
  std::uint64_t step_max = 200'000;  // environment steps
  agents::EpsilonSchedule epsilon;
  double gamma = 0.99;  // fixed discount (qmix, iql)
  gamma::PenaltySchedule penalty;
  gamma::ConvergenceConfig convergence;
  // theta_h is left untouched for this many train steps so the utilities and
  // mixer fit something before the discount factors are fitted to them.
  std::size_t gamma_warmup_steps = 500;
  double grad_clip_norm = 10.0;  // 0 disables
  NetworkSizes sizes;

  std::size_t log_interval_episodes = 10;
  std::uint64_t eval_interval_steps = 20'000;  // 0 disables periodic evaluation
  std::size_t eval_episodes = 10;

  void validate() const;  // throws ConfigError
};

nlohmann::json to_json(const TrainConfig& c);
// Unknown keys are rejected so typos surface as errors.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);  // ConfigError, also for a missing file

}  // namespace dsdf
