#pragma once
// State-conditioned discount-factor generator.
//
// A hypernetwork maps the global state to the full parameter vector of a
// small "gamma network"; the gamma network maps the concatenated local
// observations of all agents to one sigmoid discount factor per agent.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dsdf/nn.hpp"
#include "json.hpp"

namespace dsdf::gamma {

struct GammaNetShape {
  std::size_t agents = 0;
  std::size_t obs_dim = 0;
  std::size_t hidden = 32;

  // agents*obs_dim -> hidden (relu) -> agents (sigmoid)
  std::vector<nn::LayerShape> layers() const;
  std::size_t param_count() const { return nn::param_count(layers()); }
};

class GammaHyperNet {
 public:
  GammaHyperNet() = default;
  GammaHyperNet(GammaNetShape shape, std::size_t state_dim, std::size_t hyper_hidden,
                std::mt19937_64& rng);
  GammaHyperNet(GammaNetShape shape, nn::Mlp hyper);

  const GammaNetShape& shape() const { return shape_; }
  const nn::Mlp& hyper() const { return hyper_; }
  // Throws UsageError once frozen.
  nn::Mlp& mutable_hyper();

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  std::size_t updates() const { return updates_; }
  void count_update() { ++updates_; }

  friend nlohmann::json to_json(const GammaHyperNet& net);
  friend GammaHyperNet gamma_hyper_from_json(const nlohmann::json& j);

 private:
  GammaNetShape shape_;
  nn::Mlp hyper_;
  bool frozen_ = false;
  std::size_t updates_ = 0;
};

nlohmann::json to_json(const GammaHyperNet& net);
GammaHyperNet gamma_hyper_from_json(const nlohmann::json& j);

// Deterministic reshape of f_h(theta_h, state) into a gamma network.
nn::Mlp materialize(const GammaHyperNet& net, std::span<const double> state);
// Reshape of an explicit parameter vector (inverse of Mlp::params()).
nn::Mlp materialize_params(const GammaNetShape& shape, std::span<const double> params);

// obs_concat = o_1 | o_2 | ... | o_N. Every entry lies strictly in (0, 1).
std::vector<double> predict_gammas(const nn::Mlp& gamma_net, std::span<const double> obs_concat);

struct GammaBatch {
  nn::Matrix gammas;  // rows x agents
  // Kept for hyper_backward when tapes are requested.
  bool has_tapes = false;
  nn::Matrix states;
  nn::Matrix hyper_hidden;  // rows x hyper hidden, post-relu
  nn::Matrix gamma_pre;     // rows x gamma hidden, pre-relu
  nn::Matrix dense;         // rows x generated params that do not touch observations
  // Nonzero observation entries grouped by input feature.
  std::vector<std::size_t> col_begin;
  std::vector<std::uint32_t> col_row;
  std::vector<double> col_value;
};

// One generated gamma network per row: states[r] generates the weights applied
// to obs_concat[r]. Only the generated first-layer columns that meet a nonzero
// observation entry are evaluated, so the result equals materialize() followed
// by predict_gammas() without building the full parameter vector. The work is
// grouped by observation feature so each feature's block of hypernetwork rows
// is loaded once per batch. Rows are independent of each other.
GammaBatch predict_gammas_batch(const GammaHyperNet& net, const nn::Matrix& states,
                                const nn::Matrix& obs_concat, bool keep_tapes);

// Gradient of a loss w.r.t. theta_h given dL/dgamma (rows x agents).
std::vector<double> hyper_backward(const GammaHyperNet& net, const GammaBatch& batch,
                                   const nn::Matrix& gamma_grad);

struct ConvergenceConfig {
  std::size_t window = 20;      // W, compared as two halves
  double tolerance = 0.01;      // tau_gamma
  std::size_t max_updates = 2000;  // hard cap K
};

// history[u] = per-agent mean gamma after hypernetwork update u.
// Converged when the two most recent half-windows differ by less than the
// tolerance for every agent, or when the cap is reached.
bool convergence_check(const std::vector<std::vector<double>>& history, const ConvergenceConfig& cfg);

}  // namespace dsdf::gamma
