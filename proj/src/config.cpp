#include "dsdf/config.hpp"

#include <fstream>
#include <set>

#include "dsdf/errors.hpp"

namespace dsdf {
namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Dsdf:
      return "dsdf";
    case Method::Penalize:
      return "penalize";
    case Method::Qmix:
      return "qmix";
    case Method::Iql:
      return "iql";
  }
  return "dsdf";
}

Method method_from_string(std::string_view name) {
  if (name == "dsdf") return Method::Dsdf;
  if (name == "penalize") return Method::Penalize;
  if (name == "qmix") return Method::Qmix;
  if (name == "iql") return Method::Iql;
  throw UsageError("unknown method '" + std::string(name) + "' (expected dsdf|penalize|qmix|iql)");
}

void TrainConfig::validate() const {
  scenario.validate();
  if (!(lr_theta > 0.0) || !(lr_gamma > 0.0)) throw ConfigError("learning rates must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (buffer_capacity < batch_size) throw ConfigError("buffer_capacity must be >= batch_size");
  if (target_sync_interval == 0) throw ConfigError("target_sync_interval must be positive");
  if (!(epsilon.start >= 0.0 && epsilon.start <= 1.0 && epsilon.end >= 0.0 && epsilon.end <= epsilon.start)) {
    throw ConfigError("epsilon schedule must satisfy 0 <= end <= start <= 1");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(penalty.floor > 0.0 && penalty.floor <= 1.0)) throw ConfigError("penalty floor must lie in (0, 1]");
  if (!(penalty.initial >= 0.0 && penalty.initial < 1.0)) throw ConfigError("penalty must lie in [0, 1)");
  if (convergence.window < 2 || convergence.max_updates == 0) throw ConfigError("invalid convergence settings");
  if (!(grad_clip_norm >= 0.0)) throw ConfigError("grad_clip_norm must be >= 0");
  if (sizes.history_k == 0 || sizes.mixer_embed == 0 || sizes.gamma_hidden == 0 ||
      sizes.gamma_hyper_hidden == 0) {
    throw ConfigError("network sizes must be positive");
  }
  for (std::size_t h : sizes.utility_hidden) {
    if (h == 0) throw ConfigError("utility hidden widths must be positive");
  }
  if (log_interval_episodes == 0) throw ConfigError("log_interval_episodes must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"scenario", to_json(c.scenario)},
      {"method", to_string(c.method)},
      {"seed", c.seed},
      {"lr_theta", c.lr_theta},
      {"lr_gamma", c.lr_gamma},
      {"batch_size", c.batch_size},
      {"buffer_capacity", c.buffer_capacity},
      {"target_sync_interval", c.target_sync_interval},
      {"step_max", c.step_max},
      {"epsilon", {{"start", c.epsilon.start}, {"end", c.epsilon.end}, {"decay_steps", c.epsilon.decay_steps}}},
      {"gamma", c.gamma},
      {"penalty",
       {{"initial", c.penalty.initial}, {"decay_steps", c.penalty.decay_steps}, {"floor", c.penalty.floor}}},
      {"convergence",
       {{"window", c.convergence.window},
        {"tolerance", c.convergence.tolerance},
        {"max_updates", c.convergence.max_updates}}},
      {"gamma_warmup_steps", c.gamma_warmup_steps},
      {"grad_clip_norm", c.grad_clip_norm},
      {"networks",
       {{"utility_hidden", c.sizes.utility_hidden},
        {"history_k", c.sizes.history_k},
        {"mixer_embed", c.sizes.mixer_embed},
        {"gamma_hidden", c.sizes.gamma_hidden},
        {"gamma_hyper_hidden", c.sizes.gamma_hyper_hidden}}},
      {"log_interval_episodes", c.log_interval_episodes},
      {"eval_interval_steps", c.eval_interval_steps},
      {"eval_episodes", c.eval_episodes},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"scenario", "method", "seed", "lr_theta", "lr_gamma", "batch_size", "buffer_capacity",
                  "target_sync_interval", "step_max", "epsilon", "gamma", "penalty", "convergence",
                  "gamma_warmup_steps", "grad_clip_norm", "networks", "log_interval_episodes", "eval_interval_steps",
                  "eval_episodes"},
                 "config");
  try {
    TrainConfig c;
    if (j.contains("scenario")) c.scenario = scenario_from_json(j.at("scenario"));
    if (j.contains("method")) c.method = method_from_string(j.at("method").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.lr_theta = j.value("lr_theta", c.lr_theta);
    c.lr_gamma = j.value("lr_gamma", c.lr_gamma);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
    c.target_sync_interval = j.value("target_sync_interval", c.target_sync_interval);
    c.step_max = j.value("step_max", c.step_max);
    if (j.contains("epsilon")) {
      const auto& e = j.at("epsilon");
      reject_unknown(e, {"start", "end", "decay_steps"}, "epsilon");
      c.epsilon.start = e.value("start", c.epsilon.start);
      c.epsilon.end = e.value("end", c.epsilon.end);
      c.epsilon.decay_steps = e.value("decay_steps", c.epsilon.decay_steps);
    }
    c.gamma = j.value("gamma", c.gamma);
    if (j.contains("penalty")) {
      const auto& p = j.at("penalty");
      reject_unknown(p, {"initial", "decay_steps", "floor"}, "penalty");
      c.penalty.initial = p.value("initial", c.penalty.initial);
      c.penalty.decay_steps = p.value("decay_steps", c.penalty.decay_steps);
      c.penalty.floor = p.value("floor", c.penalty.floor);
    }
    if (j.contains("convergence")) {
      const auto& v = j.at("convergence");
      reject_unknown(v, {"window", "tolerance", "max_updates"}, "convergence");
      c.convergence.window = v.value("window", c.convergence.window);
      c.convergence.tolerance = v.value("tolerance", c.convergence.tolerance);
      c.convergence.max_updates = v.value("max_updates", c.convergence.max_updates);
    }
    c.gamma_warmup_steps = j.value("gamma_warmup_steps", c.gamma_warmup_steps);
    c.grad_clip_norm = j.value("grad_clip_norm", c.grad_clip_norm);
    if (j.contains("networks")) {
      const auto& n = j.at("networks");
      reject_unknown(n, {"utility_hidden", "history_k", "mixer_embed", "gamma_hidden", "gamma_hyper_hidden"},
                     "networks");
      if (n.contains("utility_hidden")) c.sizes.utility_hidden = n.at("utility_hidden").get<std::vector<std::size_t>>();
      c.sizes.history_k = n.value("history_k", c.sizes.history_k);
      c.sizes.mixer_embed = n.value("mixer_embed", c.sizes.mixer_embed);
      c.sizes.gamma_hidden = n.value("gamma_hidden", c.sizes.gamma_hidden);
      c.sizes.gamma_hyper_hidden = n.value("gamma_hyper_hidden", c.sizes.gamma_hyper_hidden);
    }
    c.log_interval_episodes = j.value("log_interval_episodes", c.log_interval_episodes);
    c.eval_interval_steps = j.value("eval_interval_steps", c.eval_interval_steps);
    c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return train_config_from_json(j);
}

}  // namespace dsdf
