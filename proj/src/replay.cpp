#include "dsdf/replay.hpp"

#include <algorithm>
#include <numeric>

#include "dsdf/agents.hpp"
#include "dsdf/errors.hpp"

namespace dsdf::replay {
namespace {

void append_floats(std::vector<float>& dst, std::span<const double> src) {
  for (double v : src) dst.push_back(static_cast<float>(v));
}

std::vector<double> to_doubles(std::span<const float> src) { return {src.begin(), src.end()}; }

}  // namespace

Episode::Episode(std::size_t agents, std::size_t obs_dim, std::size_t state_dim)
    : agents_(agents), obs_dim_(obs_dim), state_dim_(state_dim) {}

void Episode::begin(const env::GlobalState& state, const std::vector<env::Observation>& observations) {
  if (!states_.empty()) throw UsageError("episode already started");
  if (state.size() != state_dim_ || observations.size() != agents_) {
    throw ConfigError("episode start shape mismatch");
  }
  append_floats(states_, state);
  for (const auto& o : observations) {
    if (o.size() != obs_dim_) throw ConfigError("observation width mismatch");
    append_floats(observations_, o);
  }
}

void Episode::append(std::span<const env::Action> intended, std::span<const env::Action> executed,
                     double reward, const env::GlobalState& next_state,
                     const std::vector<env::Observation>& next_observations) {
  if (states_.empty()) throw UsageError("episode not started");
  if (intended.size() != agents_ || executed.size() != agents_) {
    throw ConfigError("joint action width mismatch");
  }
  for (auto a : intended) intended_.push_back(static_cast<std::uint8_t>(a));
  for (auto a : executed) executed_.push_back(static_cast<std::uint8_t>(a));
  rewards_.push_back(reward);
  append_floats(states_, next_state);
  for (const auto& o : next_observations) append_floats(observations_, o);
}

void Episode::finish(bool terminated) { terminated_ = terminated; }

std::span<const float> Episode::state(std::size_t t) const {
  return {states_.data() + t * state_dim_, state_dim_};
}

std::span<const float> Episode::observation(std::size_t t, std::size_t agent) const {
  return {observations_.data() + (t * agents_ + agent) * obs_dim_, obs_dim_};
}

env::Action Episode::intended(std::size_t t, std::size_t agent) const {
  return static_cast<env::Action>(intended_[t * agents_ + agent]);
}

env::Action Episode::executed(std::size_t t, std::size_t agent) const {
  return static_cast<env::Action>(executed_[t * agents_ + agent]);
}

Transition Episode::transition(std::size_t t) const {
  if (t >= length()) throw UsageError("transition index out of range");
  Transition tr;
  tr.state = to_doubles(state(t));
  tr.next_state = to_doubles(state(t + 1));
  for (std::size_t i = 0; i < agents_; ++i) {
    tr.observations.push_back(to_doubles(observation(t, i)));
    tr.next_observations.push_back(to_doubles(observation(t + 1, i)));
    tr.intended.push_back(intended(t, i));
    tr.executed.push_back(executed(t, i));
  }
  tr.reward = rewards_[t];
  tr.done = t + 1 == length();
  tr.terminal = is_terminal(t);
  return tr;
}

double Episode::total_reward() const { return std::accumulate(rewards_.begin(), rewards_.end(), 0.0); }

void write_history(const Episode& ep, std::size_t agent, std::size_t t, std::size_t k,
                   std::span<double> out) {
  const std::size_t entry = ep.obs_dim() + env::kActionCount;
  if (out.size() != k * entry) throw ConfigError("history buffer width mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t slot = 0; slot < k; ++slot) {
    const std::size_t back = k - 1 - slot;  // steps before t
    if (back > t) continue;
    const std::size_t s = t - back;
    auto dst = out.subspan(slot * entry, entry);
    auto obs = ep.observation(s, agent);
    std::copy(obs.begin(), obs.end(), dst.begin());
    if (s > 0) dst[ep.obs_dim() + env::index(ep.executed(s - 1, agent))] = 1.0;
  }
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::push(Episode episode) {
  if (episode.length() == 0) throw UsageError("cannot store an empty episode");
  if (episodes_.size() == capacity_) episodes_.pop_front();
  episodes_.push_back(std::move(episode));
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t count, std::mt19937_64& rng) const {
  if (count > episodes_.size()) throw UsageError("not enough episodes to sample");
  std::vector<std::size_t> idx(episodes_.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

TrainingBatch assemble_batch(std::span<const Episode* const> episodes, std::size_t k) {
  TrainingBatch b;
  if (episodes.empty()) return b;
  const Episode& first = *episodes.front();
  b.agents = first.agents();
  const std::size_t obs_dim = first.obs_dim();
  const std::size_t state_dim = first.state_dim();
  for (const Episode* ep : episodes) b.rows += ep->length();
  const std::size_t hist = agents::history_size(k, obs_dim);

  b.histories.assign(b.agents, nn::Matrix(b.rows, hist));
  b.next_histories.assign(b.agents, nn::Matrix(b.rows, hist));
  b.actions.assign(b.rows * b.agents, 0);
  b.states = nn::Matrix(b.rows, state_dim);
  b.next_states = nn::Matrix(b.rows, state_dim);
  b.next_observations = nn::Matrix(b.rows, b.agents * obs_dim);
  b.rewards.assign(b.rows, 0.0);
  b.terminal.assign(b.rows, false);

  std::size_t row = 0;
  for (const Episode* ep : episodes) {
    for (std::size_t t = 0; t < ep->length(); ++t, ++row) {
      for (std::size_t i = 0; i < b.agents; ++i) {
        if (t == 0) {
          write_history(*ep, i, 0, k, b.histories[i].row(row));
        } else {
          auto prev = b.next_histories[i].row(row - 1);
          std::copy(prev.begin(), prev.end(), b.histories[i].row(row).begin());
        }
        write_history(*ep, i, t + 1, k, b.next_histories[i].row(row));
        b.actions[row * b.agents + i] = env::index(ep->executed(t, i));
        auto o = ep->observation(t + 1, i);
        std::copy(o.begin(), o.end(), b.next_observations.row(row).begin() + static_cast<std::ptrdiff_t>(i * obs_dim));
      }
      auto s = ep->state(t);
      auto s1 = ep->state(t + 1);
      std::copy(s.begin(), s.end(), b.states.row(row).begin());
      std::copy(s1.begin(), s1.end(), b.next_states.row(row).begin());
      b.rewards[row] = ep->reward(t);
      b.terminal[row] = ep->is_terminal(t);
    }
  }
  return b;
}

}  // namespace dsdf::replay
