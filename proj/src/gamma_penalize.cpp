#include "dsdf/gamma_penalize.hpp"

#include <algorithm>

#include "dsdf/errors.hpp"

namespace dsdf::gamma {

double PenaltySchedule::at(std::uint64_t step) const {
  if (decay_steps == 0 || step >= decay_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
  return std::max(0.0, initial * (1.0 - frac));
}

PenalizeState::PenalizeState(std::size_t agents, PenaltySchedule schedule)
    : schedule_(schedule), gamma_(agents, 1.0) {
  if (!(schedule.floor > 0.0 && schedule.floor <= 1.0)) throw ConfigError("gamma floor must lie in (0, 1]");
  if (!(schedule.initial >= 0.0 && schedule.initial < 1.0)) throw ConfigError("penalty must lie in [0, 1)");
}

void PenalizeState::on_transition(const std::vector<bool>& mismatch) {
  if (mismatch.size() != gamma_.size()) throw UsageError("mismatch flags/agent count mismatch");
  const double p = schedule_.at(step_);
  for (std::size_t i = 0; i < gamma_.size(); ++i) {
    if (mismatch[i]) gamma_[i] = std::max(schedule_.floor, gamma_[i] * (1.0 - p));
  }
  ++step_;
}

nlohmann::json to_json(const PenalizeState& s) {
  return {{"initial", s.schedule_.initial},
          {"decay_steps", s.schedule_.decay_steps},
          {"floor", s.schedule_.floor},
          {"gamma", s.gamma_},
          {"step", s.step_}};
}

PenalizeState penalize_from_json(const nlohmann::json& j) {
  try {
    PenaltySchedule sched{j.at("initial").get<double>(), j.at("decay_steps").get<std::uint64_t>(),
                          j.at("floor").get<double>()};
    PenalizeState s(j.at("gamma").size(), sched);
    s.gamma_ = j.at("gamma").get<std::vector<double>>();
    s.step_ = j.at("step").get<std::uint64_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed penalisation state: ") + e.what());
  }
}

}  // namespace dsdf::gamma
