#pragma once
// Iterative penalisation baseline: every agent starts with gamma = 1 and is
// multiplied by (1 - P_t) on each step where its executed action differs from
// the intended one. P_t decays linearly to zero.

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace dsdf::gamma {

struct PenaltySchedule {
  double initial = 0.01;
  std::uint64_t decay_steps = 50'000;
  double floor = 0.05;  // gamma_min

  double at(std::uint64_t step) const;
};

class PenalizeState {
 public:
  PenalizeState() = default;
  PenalizeState(std::size_t agents, PenaltySchedule schedule);

  std::span<const double> gammas() const { return gamma_; }
  std::uint64_t step() const { return step_; }
  const PenaltySchedule& schedule() const { return schedule_; }

  // Applies P_t for the current step to every mismatching agent, then advances.
  void on_transition(const std::vector<bool>& mismatch);

  friend nlohmann::json to_json(const PenalizeState& s);
  friend PenalizeState penalize_from_json(const nlohmann::json& j);

 private:
  PenaltySchedule schedule_;
  std::vector<double> gamma_;
  std::uint64_t step_ = 0;
};

nlohmann::json to_json(const PenalizeState& s);
PenalizeState penalize_from_json(const nlohmann::json& j);

}  // namespace dsdf::gamma
