#include "dsdf/targets.hpp"

#include "dsdf/agents.hpp"
#include "dsdf/errors.hpp"

namespace dsdf::targets {

NextValues greedy_next_values(std::span<const nn::Mlp> target_utilities,
                              const std::vector<nn::Matrix>& next_histories) {
  if (target_utilities.size() != next_histories.size()) {
    throw ConfigError("one target utility network per agent required");
  }
  const std::size_t agents = target_utilities.size();
  const std::size_t rows = agents ? next_histories.front().rows() : 0;
  NextValues out{nn::Matrix(rows, agents), std::vector<std::size_t>(rows * agents, 0)};
  for (std::size_t i = 0; i < agents; ++i) {
    const nn::Matrix q = nn::infer(target_utilities[i], next_histories[i]);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t a = agents::greedy_action(q.row(r));
      out.argmax[r * agents + i] = a;
      out.max_q(r, i) = q(r, a);
    }
  }
  return out;
}

std::vector<double> td_targets_scaled(const replay::TrainingBatch& batch, const NextValues& next,
                                      const mixer::MixingNet& target_mixer, const nn::Matrix& gammas) {
  if (gammas.rows() != batch.rows || gammas.cols() != batch.agents) {
    throw ConfigError("gamma matrix shape mismatch");
  }
  nn::Matrix scaled(batch.rows, batch.agents);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    for (std::size_t i = 0; i < batch.agents; ++i) scaled(r, i) = gammas(r, i) * next.max_q(r, i);
  }
  const auto mixed = mixer::mix_batch(target_mixer, scaled, batch.next_states);
  std::vector<double> y(batch.rows);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    y[r] = batch.terminal[r] ? batch.rewards[r] : batch.rewards[r] + mixed[r];
  }
  return y;
}

std::vector<double> td_targets_dsdf(const replay::TrainingBatch& batch,
                                    std::span<const nn::Mlp> target_utilities,
                                    const mixer::MixingNet& target_mixer,
                                    const gamma::GammaHyperNet& gamma_net) {
  const NextValues next = greedy_next_values(target_utilities, batch.next_histories);
  const auto g = gamma::predict_gammas_batch(gamma_net, batch.next_states, batch.next_observations, false);
  return td_targets_scaled(batch, next, target_mixer, g.gammas);
}

std::vector<double> td_targets_fixed(const replay::TrainingBatch& batch, const NextValues& next,
                                     const mixer::MixingNet& target_mixer, double gamma,
                                     GammaPlacement placement) {
  if (placement == GammaPlacement::Inside) {
    return td_targets_scaled(batch, next, target_mixer, nn::Matrix(batch.rows, batch.agents, gamma));
  }
  const auto mixed = mixer::mix_batch(target_mixer, next.max_q, batch.next_states);
  std::vector<double> y(batch.rows);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    y[r] = batch.terminal[r] ? batch.rewards[r] : batch.rewards[r] + gamma * mixed[r];
  }
  return y;
}

std::vector<double> td_targets_fixed(const replay::TrainingBatch& batch,
                                     std::span<const nn::Mlp> target_utilities,
                                     const mixer::MixingNet& target_mixer, double gamma,
                                     GammaPlacement placement) {
  return td_targets_fixed(batch, greedy_next_values(target_utilities, batch.next_histories), target_mixer,
                          gamma, placement);
}

nn::Matrix td_targets_iql(const replay::TrainingBatch& batch, const NextValues& next, double gamma) {
  nn::Matrix y(batch.rows, batch.agents);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    for (std::size_t i = 0; i < batch.agents; ++i) {
      y(r, i) = batch.terminal[r] ? batch.rewards[r] : batch.rewards[r] + gamma * next.max_q(r, i);
    }
  }
  return y;
}

nn::Matrix td_targets_iql(const replay::TrainingBatch& batch, std::span<const nn::Mlp> target_utilities,
                          double gamma) {
  return td_targets_iql(batch, greedy_next_values(target_utilities, batch.next_histories), gamma);
}

}  // namespace dsdf::targets
