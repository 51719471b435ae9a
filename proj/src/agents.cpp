#include "dsdf/agents.hpp"

#include <algorithm>

#include "dsdf/errors.hpp"

namespace dsdf::agents {

HistoryWindow::HistoryWindow(std::size_t k, std::size_t obs_dim, std::size_t action_count)
    : k_(k), obs_dim_(obs_dim), action_count_(action_count),
      data_(history_size(k, obs_dim, action_count), 0.0) {
  if (k == 0) throw ConfigError("history window needs k >= 1");
}

void HistoryWindow::push(std::span<const double> observation,
                         std::optional<std::size_t> previous_action) {
  if (observation.size() != obs_dim_) throw ConfigError("observation width mismatch in history");
  const std::size_t entry = obs_dim_ + action_count_;
  std::copy(data_.begin() + static_cast<std::ptrdiff_t>(entry), data_.end(), data_.begin());
  auto last = data_.begin() + static_cast<std::ptrdiff_t>((k_ - 1) * entry);
  std::copy(observation.begin(), observation.end(), last);
  std::fill(last + static_cast<std::ptrdiff_t>(obs_dim_), data_.end(), 0.0);
  if (previous_action) {
    if (*previous_action >= action_count_) throw UsageError("action index out of range");
    *(last + static_cast<std::ptrdiff_t>(obs_dim_ + *previous_action)) = 1.0;
  }
  filled_ = std::min(filled_ + 1, k_);
}

double EpsilonSchedule::at(std::uint64_t step) const {
  if (decay_steps == 0 || step >= decay_steps) return end;
  const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
  return std::max(end, start + (end - start) * frac);
}

std::vector<nn::LayerShape> utility_shapes(std::size_t history_dim, std::span<const std::size_t> hidden,
                                           std::size_t action_count) {
  return nn::chain(history_dim, hidden, action_count, nn::Activation::Relu, nn::Activation::Identity);
}

std::vector<double> q_values(const nn::Mlp& net, std::span<const double> history) {
  return nn::infer(net, history);
}

std::size_t greedy_action(std::span<const double> q) {
  return static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
}

std::size_t select_action(std::span<const double> q, double epsilon, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> any(0, q.size() - 1);
    return any(rng);
  }
  return greedy_action(q);
}

}  // namespace dsdf::agents
