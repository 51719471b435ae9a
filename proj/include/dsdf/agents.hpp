#pragma once
// Decentralised agents: per-agent utility networks over a fixed window of
// recent (observation, previous executed action) pairs, and epsilon-greedy
// action selection.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "dsdf/env.hpp"
#include "dsdf/nn.hpp"

namespace dsdf::agents {

inline std::size_t history_size(std::size_t k, std::size_t obs_dim,
                                std::size_t action_count = env::kActionCount) {
  return k * (obs_dim + action_count);
}

// Flattened oldest-to-newest; entries not yet written are zeros.
class HistoryWindow {
 public:
  HistoryWindow(std::size_t k, std::size_t obs_dim, std::size_t action_count = env::kActionCount);

  // previous_action is the action executed on the step that produced `observation`;
  // empty at episode start.
  void push(std::span<const double> observation, std::optional<std::size_t> previous_action);

  std::span<const double> flattened() const { return data_; }
  std::size_t filled() const { return filled_; }
  std::size_t capacity() const { return k_; }

 private:
  std::size_t k_;
  std::size_t obs_dim_;
  std::size_t action_count_;
  std::size_t filled_ = 0;
  std::vector<double> data_;
};

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  std::uint64_t decay_steps = 50'000;

  // Linear from start to end over decay_steps, then flat.
  double at(std::uint64_t step) const;
};

std::vector<nn::LayerShape> utility_shapes(std::size_t history_dim, std::span<const std::size_t> hidden,
                                           std::size_t action_count = env::kActionCount);

std::vector<double> q_values(const nn::Mlp& net, std::span<const double> history);

// Lowest index wins exact ties.
std::size_t greedy_action(std::span<const double> q);

// Draws the exploration coin first; a uniform action is drawn only when exploring.
std::size_t select_action(std::span<const double> q, double epsilon, std::mt19937_64& rng);

}  // namespace dsdf::agents
