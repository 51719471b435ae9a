#pragma once
// Monotonic value mixer. Mixing weights are generated from the global state
// by small hypernetworks and passed through |.|, so dQ_tot/dq_i >= 0:
//
//   hidden = elu(q^T |W1(s)| + b1(s)),   Q_tot = hidden . |w2(s)| + b2(s)
//
// W1 is agents x embed (row i holds agent i's weights). The Sum kind is the
// additive reduction Q_tot = sum_i q_i and has no parameters.

#include <random>
#include <span>
#include <vector>

#include "dsdf/nn.hpp"
#include "json.hpp"

namespace dsdf::mixer {

enum class MixerKind { Qmix, Sum };

struct MixingNet {
  MixerKind kind = MixerKind::Qmix;
  std::size_t agents = 0;
  std::size_t state_dim = 0;
  std::size_t embed = 32;
  nn::Mlp hyper_w1;  // state -> agents * embed
  nn::Mlp hyper_b1;  // state -> embed
  nn::Mlp hyper_w2;  // state -> embed
  nn::Mlp hyper_b2;  // state -> embed (relu) -> 1

  static MixingNet qmix(std::size_t agents, std::size_t state_dim, std::size_t embed,
                        std::mt19937_64& rng);
  static MixingNet sum(std::size_t agents, std::size_t state_dim);

  // Learnable parts in a fixed order (empty for Sum).
  std::vector<nn::Mlp*> parts();
  std::vector<const nn::Mlp*> parts() const;
  std::size_t param_count() const;

  friend bool operator==(const MixingNet&, const MixingNet&) = default;
};

struct MixTape {
  nn::Matrix q;
  std::vector<nn::Tape> hyper;  // w1, b1, w2, b2
  nn::Matrix w1_raw;
  nn::Matrix w2_raw;
  nn::Matrix hidden_pre;
  nn::Matrix hidden;
};

struct MixForward {
  std::vector<double> q_tot;
  MixTape tape;
};

struct MixGradients {
  std::vector<std::vector<double>> params;  // parallel to parts(); empty if not requested
  nn::Matrix q;                             // dL/dq, rows x agents
};

// q: rows x agents, states: rows x state_dim.
MixForward mix_forward(const MixingNet& net, const nn::Matrix& q, const nn::Matrix& states);
std::vector<double> mix_batch(const MixingNet& net, const nn::Matrix& q, const nn::Matrix& states);
double mix(const MixingNet& net, std::span<const double> q, std::span<const double> state);

MixGradients mix_backward(const MixingNet& net, const MixTape& tape, std::span<const double> q_tot_grad,
                          bool want_param_grads = true);

nlohmann::json to_json(const MixingNet& net);
MixingNet mixer_from_json(const nlohmann::json& j);

}  // namespace dsdf::mixer
