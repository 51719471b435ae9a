#pragma once
// Bootstrap regression targets for the four training methods.
//
// Per-agent greedy next actions always come from the unscaled target
// utilities; for any gamma_i > 0 this is also the argmax of gamma_i * Q_i.

#include <span>
#include <vector>

#include "dsdf/gamma_dsdf.hpp"
#include "dsdf/mixer.hpp"
#include "dsdf/nn.hpp"
#include "dsdf/replay.hpp"

namespace dsdf::targets {

struct NextValues {
  nn::Matrix max_q;                 // rows x agents: max_a Q_i^-(tau'_i, a)
  std::vector<std::size_t> argmax;  // rows x agents
};

NextValues greedy_next_values(std::span<const nn::Mlp> target_utilities,
                              const std::vector<nn::Matrix>& next_histories);

// y = r + [not terminal] * g(s', gamma_i * max Q_i^-; theta_tot^-), gammas rows x agents.
std::vector<double> td_targets_scaled(const replay::TrainingBatch& batch, const NextValues& next,
                                      const mixer::MixingNet& target_mixer, const nn::Matrix& gammas);

// Gammas predicted per row from (s', o'_1..o'_N) by the hypernetwork.
std::vector<double> td_targets_dsdf(const replay::TrainingBatch& batch,
                                    std::span<const nn::Mlp> target_utilities,
                                    const mixer::MixingNet& target_mixer,
                                    const gamma::GammaHyperNet& gamma_net);

enum class GammaPlacement {
  Outside,  // y = r + gamma * g(s', max Q^-)        (standard QMIX)
  Inside,   // y = r + g(s', gamma * max Q^-)        (uniformly pre-scaled utilities)
};

std::vector<double> td_targets_fixed(const replay::TrainingBatch& batch, const NextValues& next,
                                     const mixer::MixingNet& target_mixer, double gamma,
                                     GammaPlacement placement = GammaPlacement::Outside);
std::vector<double> td_targets_fixed(const replay::TrainingBatch& batch,
                                     std::span<const nn::Mlp> target_utilities,
                                     const mixer::MixingNet& target_mixer, double gamma,
                                     GammaPlacement placement = GammaPlacement::Outside);

// Independent learners: y_i = r + [not terminal] * gamma * max_a Q_i^-(tau'_i, a). rows x agents.
nn::Matrix td_targets_iql(const replay::TrainingBatch& batch, const NextValues& next, double gamma);
nn::Matrix td_targets_iql(const replay::TrainingBatch& batch, std::span<const nn::Mlp> target_utilities,
                          double gamma);

}  // namespace dsdf::targets
