#pragma once
// Worn-actuator model: with probability beta_i an agent's intended action is
// replaced by a uniform draw over the full action set (which may coincide
// with the intended action).

#include <random>
#include <span>
#include <vector>

#include "dsdf/env.hpp"

namespace dsdf {

class StochasticityProfile {
 public:
  StochasticityProfile() = default;
  explicit StochasticityProfile(std::vector<double> beta);  // throws ConfigError outside [0, 1]

  std::size_t size() const { return beta_.size(); }
  double operator[](std::size_t i) const { return beta_[i]; }
  std::span<const double> values() const { return beta_; }

 private:
  std::vector<double> beta_;
};

struct Actuation {
  std::vector<env::Action> executed;
  std::vector<bool> mismatch;  // executed != intended
};

Actuation actuate(std::span<const env::Action> intended, const StochasticityProfile& profile,
                  std::mt19937_64& rng);

// beta * (1 - 1/action_count)
double expected_mismatch_rate(double beta, std::size_t action_count = env::kActionCount);

}  // namespace dsdf
