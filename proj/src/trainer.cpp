#include "dsdf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <sstream>

#include "dsdf/agents.hpp"
#include "dsdf/env.hpp"
#include "dsdf/errors.hpp"
#include "dsdf/eval.hpp"
#include "dsdf/targets.hpp"

namespace dsdf::train {
namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kActStream = 2;
constexpr std::uint64_t kSampleStream = 3;
constexpr std::uint64_t kEnvStreamBase = 1'000'000;
constexpr std::uint64_t kEvalStreamBase = 2'000'000;
constexpr std::size_t kRecentEpisodes = 10;

std::vector<double> column_means(const nn::Matrix& m) {
  std::vector<double> mean(m.cols(), 0.0);
  if (m.rows() == 0) return mean;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) mean[c] += m(r, c);
  }
  for (double& v : mean) v /= static_cast<double>(m.rows());
  return mean;
}

nn::Matrix chosen_utilities(std::span<const nn::Mlp> utilities, const replay::TrainingBatch& batch,
                            std::vector<nn::BatchForward>* forwards) {
  nn::Matrix chosen(batch.rows, batch.agents);
  for (std::size_t i = 0; i < batch.agents; ++i) {
    nn::BatchForward fwd;
    if (forwards) {
      fwd = nn::forward(utilities[i], batch.histories[i]);
    } else {
      fwd.output = nn::infer(utilities[i], batch.histories[i]);
    }
    for (std::size_t r = 0; r < batch.rows; ++r) {
      chosen(r, i) = fwd.output(r, batch.actions[r * batch.agents + i]);
    }
    if (forwards) forwards->push_back(std::move(fwd));
  }
  return chosen;
}

void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw TrainingError(std::string("non-finite ") + what);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Learner Learner::create(const TrainConfig& config, std::mt19937_64& rng) {
  config.validate();
  const Scenario& sc = config.scenario;
  Learner l;
  l.method = config.method;
  l.history_k = config.sizes.history_k;
  l.obs_dim = env::GridWorld::observation_size(sc);
  l.state_dim = env::GridWorld::state_size(sc);
  const std::size_t agents = static_cast<std::size_t>(sc.agent_count);
  const std::size_t hist = agents::history_size(l.history_k, l.obs_dim);
  const nn::AdamConfig theta_cfg{config.lr_theta};
  for (std::size_t i = 0; i < agents; ++i) {
    l.utilities.push_back(nn::Mlp::glorot(agents::utility_shapes(hist, config.sizes.utility_hidden), rng));
    l.utility_opt.emplace_back(l.utilities.back().param_count(), theta_cfg);
  }
  l.mixer = config.method == Method::Iql
                ? mixer::MixingNet::sum(agents, l.state_dim)
                : mixer::MixingNet::qmix(agents, l.state_dim, config.sizes.mixer_embed, rng);
  for (const auto* part : l.mixer.parts()) l.mixer_opt.emplace_back(part->param_count(), theta_cfg);
  if (config.method == Method::Dsdf) {
    gamma::GammaNetShape shape{agents, l.obs_dim, config.sizes.gamma_hidden};
    l.gamma_net.emplace(shape, l.state_dim, config.sizes.gamma_hyper_hidden, rng);
    l.gamma_opt = nn::OptimizerState(l.gamma_net->hyper().param_count(), nn::AdamConfig{config.lr_gamma});
  }
  if (config.method == Method::Penalize) l.penalize.emplace(agents, config.penalty);
  l.target_utilities = l.utilities;
  l.target_mixer = l.mixer;
  return l;
}

void sync_targets(Learner& learner) {
  learner.target_utilities = learner.utilities;
  learner.target_mixer = learner.mixer;
  ++learner.syncs;
}

CollectedEpisode collect_episode(const Scenario& scenario, std::uint64_t env_seed,
                                 std::span<const nn::Mlp> utilities, std::size_t history_k,
                                 const StochasticityProfile& profile, double epsilon,
                                 std::mt19937_64& rng, gamma::PenalizeState* penalize,
                                 std::ostream* trajectory) {
  env::GridWorld world = env::GridWorld::reset(scenario, env_seed);
  const std::size_t agents = world.agent_count();
  if (utilities.size() != agents || profile.size() != agents) {
    throw ConfigError("networks/profile do not match the scenario agent count");
  }
  replay::Episode ep(agents, world.observation_size(), world.state_size());
  auto obs = world.observations();
  ep.begin(world.state(), obs);

  std::vector<agents::HistoryWindow> histories;
  for (std::size_t i = 0; i < agents; ++i) {
    histories.emplace_back(history_k, world.observation_size());
    histories.back().push(obs[i], std::nullopt);
  }

  EpisodeStats stats;
  stats.mismatches.assign(agents, 0);
  stats.intended_counts.assign(env::kActionCount, 0);
  if (trajectory) *trajectory << world.snapshot().dump() << '\n';

  std::vector<env::Action> intended(agents);
  while (!world.done()) {
    for (std::size_t i = 0; i < agents; ++i) {
      const auto q = agents::q_values(utilities[i], histories[i].flattened());
      intended[i] = env::action_from_index(agents::select_action(q, epsilon, rng));
      ++stats.intended_counts[env::index(intended[i])];
    }
    Actuation act = actuate(intended, profile, rng);
    if (penalize) penalize->on_transition(act.mismatch);
    const env::StepResult res = world.step(act.executed);
    obs = world.observations();
    ep.append(intended, act.executed, res.reward, world.state(), obs);
    for (std::size_t i = 0; i < agents; ++i) {
      histories[i].push(obs[i], env::index(act.executed[i]));
      if (act.mismatch[i]) ++stats.mismatches[i];
    }
    stats.episode_return += res.reward;
    if (trajectory) {
      auto snap = world.snapshot();
      snap["reward"] = res.reward;
      std::vector<std::string> names;
      for (auto a : act.executed) names.emplace_back(env::to_string(a));
      snap["executed"] = names;
      *trajectory << snap.dump() << '\n';
    }
  }
  ep.finish(world.terminated());
  stats.length = ep.length();
  for (const auto& a : world.agents()) {
    stats.consumed.push_back(a.consumed());
    stats.targets.push_back(a.target);
  }
  return {std::move(ep), std::move(stats)};
}

namespace {

// Quantities shared by the hypernetwork step and the value step of one train
// step: neither the target networks nor theta change in between.
struct SharedValues {
  targets::NextValues next;
  std::vector<nn::BatchForward> online;
  nn::Matrix chosen;
};

SharedValues shared_values(const Learner& learner, const replay::TrainingBatch& batch, bool tapes) {
  SharedValues v;
  v.next = targets::greedy_next_values(learner.target_utilities, batch.next_histories);
  v.chosen = chosen_utilities(learner.utilities, batch, tapes ? &v.online : nullptr);
  return v;
}

HyperStep hyper_impl(const Learner& learner, const replay::TrainingBatch& batch, const SharedValues& v) {
  if (!learner.gamma_net) throw UsageError("learner has no gamma hypernetwork");
  const std::size_t rows = batch.rows;
  const auto q_tot = mixer::mix_batch(learner.mixer, v.chosen, batch.states);
  const auto gb = gamma::predict_gammas_batch(*learner.gamma_net, batch.next_states,
                                              batch.next_observations, true);
  nn::Matrix scaled(rows, batch.agents);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < batch.agents; ++i) scaled(r, i) = gb.gammas(r, i) * v.next.max_q(r, i);
  }
  const auto target_mix = mixer::mix_forward(learner.target_mixer, scaled, batch.next_states);

  HyperStep out;
  std::vector<double> d_target(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double y = batch.rewards[r] + (batch.terminal[r] ? 0.0 : target_mix.q_tot[r]);
    const double diff = y - q_tot[r];
    out.loss += diff * diff;
    if (!batch.terminal[r]) d_target[r] = 2.0 * diff / static_cast<double>(rows);
  }
  out.loss /= static_cast<double>(rows);
  require_finite(out.loss, "hypernetwork loss");

  const auto mix_grad = mixer::mix_backward(learner.target_mixer, target_mix.tape, d_target, false);
  nn::Matrix d_gamma(rows, batch.agents);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < batch.agents; ++i) d_gamma(r, i) = mix_grad.q(r, i) * v.next.max_q(r, i);
  }
  out.gradient = gamma::hyper_backward(*learner.gamma_net, gb, d_gamma);
  out.mean_gammas = column_means(gb.gammas);
  return out;
}

double apply_hyper(Learner& learner, const HyperStep& step) {
  if (learner.gamma_net->frozen()) return step.loss;
  nn::optimizer_step(learner.gamma_net->mutable_hyper(), step.gradient, learner.gamma_opt);
  learner.gamma_net->count_update();
  return step.loss;
}

std::vector<double> targets_impl(const Learner& learner, const replay::TrainingBatch& batch,
                                 const TrainConfig& config, std::vector<double>* mean_gammas,
                                 const targets::NextValues& next) {
  switch (learner.method) {
    case Method::Dsdf:
    case Method::Penalize: {
      const nn::Matrix gammas = current_gammas(learner, batch);
      if (mean_gammas) *mean_gammas = column_means(gammas);
      return targets::td_targets_scaled(batch, next, learner.target_mixer, gammas);
    }
    case Method::Qmix:
      if (mean_gammas) mean_gammas->assign(batch.agents, config.gamma);
      return targets::td_targets_fixed(batch, next, learner.target_mixer, config.gamma);
    case Method::Iql: {
      if (mean_gammas) mean_gammas->assign(batch.agents, config.gamma);
      const nn::Matrix y = targets::td_targets_iql(batch, next, config.gamma);
      return {y.data().begin(), y.data().end()};
    }
  }
  return {};
}

ThetaLoss theta_impl(const Learner& learner, const replay::TrainingBatch& batch, std::span<const double> y,
                     const SharedValues& v) {
  const std::size_t rows = batch.rows;
  const std::size_t agents = batch.agents;
  const double scale = 2.0 / static_cast<double>(rows);
  const nn::Matrix& chosen = v.chosen;

  ThetaLoss out;
  nn::Matrix d_chosen(rows, agents);
  std::vector<std::vector<double>> mixer_grads;
  if (learner.method == Method::Iql) {
    if (y.size() != rows * agents) throw UsageError("independent targets must be rows x agents");
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < agents; ++i) {
        const double diff = chosen(r, i) - y[r * agents + i];
        out.loss += diff * diff;
        d_chosen(r, i) = scale * diff;
      }
    }
  } else {
    if (y.size() != rows) throw UsageError("mixed targets must have one value per row");
    const auto mf = mixer::mix_forward(learner.mixer, chosen, batch.states);
    std::vector<double> d_tot(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double diff = mf.q_tot[r] - y[r];
      out.loss += diff * diff;
      d_tot[r] = scale * diff;
    }
    auto mg = mixer::mix_backward(learner.mixer, mf.tape, d_tot, true);
    d_chosen = std::move(mg.q);
    mixer_grads = std::move(mg.params);
  }
  out.loss /= static_cast<double>(rows);
  require_finite(out.loss, "training loss");

  for (std::size_t i = 0; i < agents; ++i) {
    nn::Matrix d_q(rows, learner.utilities[i].output_dim());
    for (std::size_t r = 0; r < rows; ++r) d_q(r, batch.actions[r * agents + i]) = d_chosen(r, i);
    out.gradients.push_back(nn::backward(learner.utilities[i], v.online[i].tape, d_q, false).params);
  }
  for (auto& g : mixer_grads) out.gradients.push_back(std::move(g));
  return out;
}

}  // namespace

HyperStep hyper_loss_and_gradient(const Learner& learner, const replay::TrainingBatch& batch) {
  return hyper_impl(learner, batch, shared_values(learner, batch, false));
}

double hyper_grad_step(Learner& learner, const replay::TrainingBatch& batch, const TrainConfig& config) {
  (void)config;
  if (!learner.gamma_net) throw UsageError("learner has no gamma hypernetwork");
  if (learner.gamma_net->frozen()) return hyper_loss_and_gradient(learner, batch).loss;
  return apply_hyper(learner, hyper_loss_and_gradient(learner, batch));
}

nn::Matrix current_gammas(const Learner& learner, const replay::TrainingBatch& batch) {
  if (learner.method == Method::Dsdf) {
    return gamma::predict_gammas_batch(*learner.gamma_net, batch.next_states, batch.next_observations, false)
        .gammas;
  }
  if (learner.method == Method::Penalize) {
    nn::Matrix g(batch.rows, batch.agents);
    const auto current = learner.penalize->gammas();
    for (std::size_t r = 0; r < batch.rows; ++r) std::copy(current.begin(), current.end(), g.row(r).begin());
    return g;
  }
  return {};
}

std::vector<double> compute_targets(const Learner& learner, const replay::TrainingBatch& batch,
                                    const TrainConfig& config, std::vector<double>* mean_gammas) {
  return targets_impl(learner, batch, config, mean_gammas,
                      targets::greedy_next_values(learner.target_utilities, batch.next_histories));
}

ThetaLoss theta_loss_and_gradient(const Learner& learner, const replay::TrainingBatch& batch,
                                  std::span<const double> y) {
  return theta_impl(learner, batch, y, shared_values(learner, batch, true));
}

StepMetrics train_step(Learner& learner, const replay::TrainingBatch& batch, const TrainConfig& config) {
  StepMetrics m;
  const SharedValues shared = shared_values(learner, batch, true);
  if (learner.method == Method::Dsdf && !learner.gamma_net->frozen() &&
      learner.train_steps >= config.gamma_warmup_steps) {
    m.hyper_loss = apply_hyper(learner, hyper_impl(learner, batch, shared));
    m.hyper_updated = true;
  }
  // Targets use the freshly updated hypernetwork.
  const auto y = targets_impl(learner, batch, config, &m.mean_gammas, shared.next);
  if (m.hyper_updated) {
    learner.gamma_history.push_back(m.mean_gammas);
    if (gamma::convergence_check(learner.gamma_history, config.convergence)) learner.gamma_net->freeze();
  }

  ThetaLoss tl = theta_impl(learner, batch, y, shared);
  m.loss = tl.loss;
  if (config.grad_clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& g : tl.gradients) {
      for (double v : g) sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm > config.grad_clip_norm) {
      const double s = config.grad_clip_norm / norm;
      for (auto& g : tl.gradients) {
        for (double& v : g) v *= s;
      }
    }
  }
  const std::size_t agents = learner.agents();
  for (std::size_t i = 0; i < agents; ++i) {
    nn::optimizer_step(learner.utilities[i], tl.gradients[i], learner.utility_opt[i]);
  }
  auto parts = learner.mixer.parts();
  for (std::size_t p = 0; p < parts.size(); ++p) {
    nn::optimizer_step(*parts[p], tl.gradients[agents + p], learner.mixer_opt[p]);
  }
  ++learner.train_steps;
  if (learner.train_steps % config.target_sync_interval == 0) sync_targets(learner);
  return m;
}

RunResult run(const TrainConfig& config, const RunHooks& hooks) {
  config.validate();
  RunResult result;
  result.config = config;
  std::mt19937_64 init_rng(derive_seed(config.seed, kInitStream));
  std::mt19937_64 act_rng(derive_seed(config.seed, kActStream));
  std::mt19937_64 sample_rng(derive_seed(config.seed, kSampleStream));
  result.learner = Learner::create(config, init_rng);
  Learner& learner = result.learner;

  const StochasticityProfile profile(config.scenario.beta);
  replay::ReplayBuffer buffer(config.buffer_capacity);
  const std::size_t agents = learner.agents();

  std::deque<EpisodeStats> recent;
  double window_return = 0.0;
  std::size_t window_episodes = 0;
  std::vector<std::uint64_t> window_mismatch(agents, 0);
  double last_loss = std::nan("");
  std::vector<double> last_gammas;
  std::uint64_t next_eval = config.eval_interval_steps;
  std::uint64_t eval_index = 0;

  auto current_gamma_snapshot = [&]() -> std::vector<double> {
    if (learner.method == Method::Penalize) {
      return {learner.penalize->gammas().begin(), learner.penalize->gammas().end()};
    }
    if (learner.method == Method::Dsdf) return last_gammas;
    return std::vector<double>(agents, config.gamma);
  };

  auto flush_metrics = [&] {
    if (window_episodes == 0) return;
    MetricsRow row;
    row.env_steps = result.env_steps;
    row.episodes = result.episodes;
    row.train_steps = learner.train_steps;
    row.loss = last_loss;
    row.mean_return = window_return / static_cast<double>(window_episodes);
    row.epsilon = config.epsilon.at(result.env_steps);
    row.gammas = current_gamma_snapshot();
    row.mismatches = window_mismatch;
    result.metrics.push_back(row);
    if (hooks.on_metrics) hooks.on_metrics(row);
    window_return = 0.0;
    window_episodes = 0;
    std::fill(window_mismatch.begin(), window_mismatch.end(), 0);
  };

  while (result.env_steps < config.step_max) {
    const double eps = config.epsilon.at(result.env_steps);
    CollectedEpisode ce = collect_episode(
        config.scenario, derive_seed(config.seed, kEnvStreamBase + result.episodes), learner.utilities,
        learner.history_k, profile, eps, act_rng, learner.penalize ? &*learner.penalize : nullptr);
    result.env_steps += ce.stats.length;
    ++result.episodes;
    window_return += ce.stats.episode_return;
    ++window_episodes;
    for (std::size_t i = 0; i < agents; ++i) window_mismatch[i] += ce.stats.mismatches[i];
    recent.push_back(ce.stats);
    if (recent.size() > kRecentEpisodes) recent.pop_front();
    buffer.push(std::move(ce.episode));

    if (buffer.size() >= config.batch_size) {
      const auto idx = buffer.sample(config.batch_size, sample_rng);
      std::vector<const replay::Episode*> eps_ptrs;
      for (std::size_t i : idx) eps_ptrs.push_back(&buffer.at(i));
      const auto batch = replay::assemble_batch(eps_ptrs, learner.history_k);
      const StepMetrics sm = train_step(learner, batch, config);
      last_loss = sm.loss;
      last_gammas = sm.mean_gammas;
      if (sm.hyper_updated) {
        result.gamma_log.push_back({learner.gamma_net->updates(), sm.mean_gammas});
      } else if (learner.method == Method::Penalize) {
        result.gamma_log.push_back({learner.train_steps, sm.mean_gammas});
      }
    }

    if (result.episodes % config.log_interval_episodes == 0) flush_metrics();

    if (config.eval_interval_steps > 0 && result.env_steps >= next_eval) {
      const auto summary = eval::evaluate(learner, config.scenario, config.eval_episodes,
                                          derive_seed(config.seed, kEvalStreamBase + eval_index));
      result.eval_points.push_back({result.env_steps, summary.mean_return, summary.ci_half_width,
                                    summary.returns.size()});
      ++eval_index;
      while (next_eval <= result.env_steps) next_eval += config.eval_interval_steps;
    }
  }
  flush_metrics();
  result.recent_training.assign(recent.begin(), recent.end());
  std::ostringstream rng_state;
  rng_state << act_rng << ' ' << sample_rng;
  result.rng_state = rng_state.str();
  return result;
}

nlohmann::json to_json(const Learner& l) {
  nlohmann::json utils = nlohmann::json::array(), target_utils = nlohmann::json::array();
  nlohmann::json utility_opt = nlohmann::json::array(), mixer_opt = nlohmann::json::array();
  for (const auto& u : l.utilities) utils.push_back(nn::to_json(u));
  for (const auto& u : l.target_utilities) target_utils.push_back(nn::to_json(u));
  for (const auto& o : l.utility_opt) utility_opt.push_back(nn::to_json(o));
  for (const auto& o : l.mixer_opt) mixer_opt.push_back(nn::to_json(o));
  nlohmann::json j = {{"method", to_string(l.method)},
                      {"history_k", l.history_k},
                      {"obs_dim", l.obs_dim},
                      {"state_dim", l.state_dim},
                      {"utilities", utils},
                      {"target_utilities", target_utils},
                      {"mixer", mixer::to_json(l.mixer)},
                      {"target_mixer", mixer::to_json(l.target_mixer)},
                      {"utility_opt", utility_opt},
                      {"mixer_opt", mixer_opt},
                      {"gamma_history", l.gamma_history},
                      {"train_steps", l.train_steps},
                      {"syncs", l.syncs}};
  if (l.gamma_net) {
    j["gamma_net"] = gamma::to_json(*l.gamma_net);
    j["gamma_opt"] = nn::to_json(l.gamma_opt);
  }
  if (l.penalize) j["penalize"] = gamma::to_json(*l.penalize);
  return j;
}

Learner learner_from_json(const nlohmann::json& j) {
  try {
    Learner l;
    l.method = method_from_string(j.at("method").get<std::string>());
    l.history_k = j.at("history_k").get<std::size_t>();
    l.obs_dim = j.at("obs_dim").get<std::size_t>();
    l.state_dim = j.at("state_dim").get<std::size_t>();
    for (const auto& u : j.at("utilities")) l.utilities.push_back(nn::mlp_from_json(u));
    for (const auto& u : j.at("target_utilities")) l.target_utilities.push_back(nn::mlp_from_json(u));
    l.mixer = mixer::mixer_from_json(j.at("mixer"));
    l.target_mixer = mixer::mixer_from_json(j.at("target_mixer"));
    for (const auto& o : j.at("utility_opt")) l.utility_opt.push_back(nn::optimizer_from_json(o));
    for (const auto& o : j.at("mixer_opt")) l.mixer_opt.push_back(nn::optimizer_from_json(o));
    l.gamma_history = j.at("gamma_history").get<std::vector<std::vector<double>>>();
    l.train_steps = j.at("train_steps").get<std::uint64_t>();
    l.syncs = j.at("syncs").get<std::uint64_t>();
    if (j.contains("gamma_net")) {
      l.gamma_net = gamma::gamma_hyper_from_json(j.at("gamma_net"));
      l.gamma_opt = nn::optimizer_from_json(j.at("gamma_opt"));
    }
    if (j.contains("penalize")) l.penalize = gamma::penalize_from_json(j.at("penalize"));
    if (l.utilities.size() != l.target_utilities.size() || l.utilities.empty()) {
      throw ConfigError("checkpoint utility networks are inconsistent");
    }
    return l;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed learner checkpoint: ") + e.what());
  }
}

nlohmann::json checkpoint_json(const RunResult& result) {
  return {{"format", "dsdf-checkpoint"},
          {"version", 1},
          {"config", to_json(result.config)},
          {"learner", to_json(result.learner)},
          {"env_steps", result.env_steps},
          {"episodes", result.episodes},
          {"rng_state", result.rng_state}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "dsdf-checkpoint") throw ConfigError("not a checkpoint file");
    return {train_config_from_json(j.at("config")), learner_from_json(j.at("learner"))};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace dsdf::train
