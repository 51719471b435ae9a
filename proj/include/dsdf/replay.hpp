#pragma once
// Episode replay. Only whole episodes are stored because history windows
// need contiguous steps; observations and states are kept as float (the
// environment emits float-representable values, so nothing is lost).

#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <vector>

#include "dsdf/env.hpp"
#include "dsdf/nn.hpp"

namespace dsdf::replay {

struct Transition {
  env::GlobalState state;
  std::vector<env::Observation> observations;
  std::vector<env::Action> intended;
  std::vector<env::Action> executed;
  double reward = 0.0;
  env::GlobalState next_state;
  std::vector<env::Observation> next_observations;
  bool done = false;      // last transition of the episode
  bool terminal = false;  // environment terminated (no bootstrap)
};

class Episode {
 public:
  Episode(std::size_t agents, std::size_t obs_dim, std::size_t state_dim);

  void begin(const env::GlobalState& state, const std::vector<env::Observation>& observations);
  void append(std::span<const env::Action> intended, std::span<const env::Action> executed,
              double reward, const env::GlobalState& next_state,
              const std::vector<env::Observation>& next_observations);
  void finish(bool terminated);

  std::size_t length() const { return rewards_.size(); }  // transitions
  std::size_t agents() const { return agents_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t state_dim() const { return state_dim_; }
  bool terminated() const { return terminated_; }

  // t in [0, length()]
  std::span<const float> state(std::size_t t) const;
  std::span<const float> observation(std::size_t t, std::size_t agent) const;
  env::Action intended(std::size_t t, std::size_t agent) const;
  env::Action executed(std::size_t t, std::size_t agent) const;
  double reward(std::size_t t) const { return rewards_[t]; }
  bool is_terminal(std::size_t t) const { return terminated_ && t + 1 == length(); }

  Transition transition(std::size_t t) const;
  double total_reward() const;

 private:
  std::size_t agents_;
  std::size_t obs_dim_;
  std::size_t state_dim_;
  std::vector<float> states_;
  std::vector<float> observations_;
  std::vector<std::uint8_t> intended_;
  std::vector<std::uint8_t> executed_;
  std::vector<double> rewards_;
  bool terminated_ = false;
};

// Rebuilds the history window an agent held at step t (t in [0, length()]):
// entries for steps t-k+1..t, each (observation_s, one-hot executed action_{s-1}).
void write_history(const Episode& ep, std::size_t agent, std::size_t t, std::size_t k,
                   std::span<double> out);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Episode episode);  // FIFO eviction at capacity
  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Episode& at(std::size_t i) const { return episodes_.at(i); }

  // Distinct uniformly chosen episode indices.
  std::vector<std::size_t> sample(std::size_t count, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Episode> episodes_;
};

// Flattened training rows, one per transition of the selected episodes.
struct TrainingBatch {
  std::size_t rows = 0;
  std::size_t agents = 0;
  std::vector<nn::Matrix> histories;       // per agent: rows x history_dim
  std::vector<nn::Matrix> next_histories;  // per agent
  std::vector<std::size_t> actions;        // rows x agents, executed
  nn::Matrix states;
  nn::Matrix next_states;
  nn::Matrix next_observations;  // rows x (agents * obs_dim)
  std::vector<double> rewards;
  std::vector<bool> terminal;
};

TrainingBatch assemble_batch(std::span<const Episode* const> episodes, std::size_t k);

}  // namespace dsdf::replay
