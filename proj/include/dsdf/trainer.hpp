#pragma once
// Centralised training loop: episode collection through the stochastic
// actuator, whole-episode replay, per-agent-gamma TD targets and the
// alternating hypernetwork / value-network updates.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "dsdf/actuator.hpp"
#include "dsdf/config.hpp"
#include "dsdf/gamma_dsdf.hpp"
#include "dsdf/gamma_penalize.hpp"
#include "dsdf/mixer.hpp"
#include "dsdf/nn.hpp"
#include "dsdf/replay.hpp"
#include "json.hpp"

namespace dsdf::train {

// Deterministic stream derivation (SplitMix64 of seed and stream id).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Every learnable network of a run, its target copies and optimiser state.
struct Learner {
  Method method = Method::Dsdf;
  std::size_t history_k = 4;
  std::size_t obs_dim = 0;
  std::size_t state_dim = 0;

  std::vector<nn::Mlp> utilities;
  std::vector<nn::Mlp> target_utilities;
  mixer::MixingNet mixer;
  mixer::MixingNet target_mixer;
  std::optional<gamma::GammaHyperNet> gamma_net;   // dsdf only
  std::optional<gamma::PenalizeState> penalize;    // penalize only

  std::vector<nn::OptimizerState> utility_opt;
  std::vector<nn::OptimizerState> mixer_opt;       // parallel to mixer.parts()
  nn::OptimizerState gamma_opt;

  std::vector<std::vector<double>> gamma_history;  // per hypernetwork update, mean gamma per agent
  std::uint64_t train_steps = 0;
  std::uint64_t syncs = 0;

  static Learner create(const TrainConfig& config, std::mt19937_64& rng);

  std::size_t agents() const { return utilities.size(); }
};

void sync_targets(Learner& learner);

nlohmann::json to_json(const Learner& l);
Learner learner_from_json(const nlohmann::json& j);

struct EpisodeStats {
  double episode_return = 0.0;
  std::size_t length = 0;
  std::vector<double> consumed;
  std::vector<double> targets;
  std::vector<std::uint64_t> mismatches;
  std::vector<std::uint64_t> intended_counts;  // per action index, summed over agents
};

struct CollectedEpisode {
  replay::Episode episode;
  EpisodeStats stats;
};

// Runs one episode: per-agent epsilon-greedy choice from its own history,
// actuation, environment step. Histories receive the EXECUTED actions. The
// penalisation state, if given, is updated every step.
CollectedEpisode collect_episode(const Scenario& scenario, std::uint64_t env_seed,
                                 std::span<const nn::Mlp> utilities, std::size_t history_k,
                                 const StochasticityProfile& profile, double epsilon,
                                 std::mt19937_64& rng, gamma::PenalizeState* penalize = nullptr,
                                 std::ostream* trajectory = nullptr);

struct HyperStep {
  double loss = 0.0;
  std::vector<double> gradient;  // d loss / d theta_h
  std::vector<double> mean_gammas;
};

// Squared TD error of the per-agent-gamma target against the online Q_tot,
// differentiated only through the gamma dependence of the target.
HyperStep hyper_loss_and_gradient(const Learner& learner, const replay::TrainingBatch& batch);

// One optimiser step on theta_h with theta fixed; no-op if frozen.
// Returns the loss before the step.
double hyper_grad_step(Learner& learner, const replay::TrainingBatch& batch, const TrainConfig& config);

struct StepMetrics {
  double loss = 0.0;
  double hyper_loss = 0.0;
  bool hyper_updated = false;
  std::vector<double> mean_gammas;
};

// Per-row gamma matrix the target uses for this learner (dsdf/penalize);
// empty for fixed-gamma methods.
nn::Matrix current_gammas(const Learner& learner, const replay::TrainingBatch& batch);

// Regression loss of the online networks against the supplied targets and its
// gradient, parallel to (utilities..., mixer parts...). targets is rows
// (mixed methods) or rows x agents (iql) long.
struct ThetaLoss {
  double loss = 0.0;
  std::vector<std::vector<double>> gradients;
};
ThetaLoss theta_loss_and_gradient(const Learner& learner, const replay::TrainingBatch& batch,
                                  std::span<const double> targets);

std::vector<double> compute_targets(const Learner& learner, const replay::TrainingBatch& batch,
                                    const TrainConfig& config, std::vector<double>* mean_gammas = nullptr);

StepMetrics train_step(Learner& learner, const replay::TrainingBatch& batch, const TrainConfig& config);

struct MetricsRow {
  std::uint64_t env_steps = 0;
  std::uint64_t episodes = 0;
  std::uint64_t train_steps = 0;
  double loss = 0.0;
  double mean_return = 0.0;
  double epsilon = 0.0;
  std::vector<double> gammas;
  std::vector<std::uint64_t> mismatches;
};

struct GammaLogRow {
  std::uint64_t update = 0;
  std::vector<double> gammas;
};

struct EvalPoint {
  std::uint64_t env_steps = 0;
  double mean_return = 0.0;
  double ci_half_width = 0.0;
  std::size_t episodes = 0;
};

struct RunResult {
  TrainConfig config;
  Learner learner;
  std::vector<MetricsRow> metrics;
  std::vector<GammaLogRow> gamma_log;
  std::vector<EvalPoint> eval_points;
  std::vector<EpisodeStats> recent_training;  // last 10 training episodes
  std::uint64_t env_steps = 0;
  std::uint64_t episodes = 0;
  std::string rng_state;
};

struct RunHooks {
  std::function<void(const MetricsRow&)> on_metrics;
};

RunResult run(const TrainConfig& config, const RunHooks& hooks = {});

// Checkpoint bundle: config + learner + counters + RNG state.
nlohmann::json checkpoint_json(const RunResult& result);

struct Checkpoint {
  TrainConfig config;
  Learner learner;
};
Checkpoint checkpoint_from_json(const nlohmann::json& j);

}  // namespace dsdf::train
