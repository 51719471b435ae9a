#include "dsdf/actuator.hpp"

#include "dsdf/errors.hpp"

namespace dsdf {

StochasticityProfile::StochasticityProfile(std::vector<double> beta) : beta_(std::move(beta)) {
  for (double b : beta_) {
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("stochasticity must lie in [0, 1]");
  }
}

Actuation actuate(std::span<const env::Action> intended, const StochasticityProfile& profile,
                  std::mt19937_64& rng) {
  if (intended.size() != profile.size()) throw UsageError("profile/agent count mismatch");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any_action(0, env::kActionCount - 1);
  Actuation out;
  out.executed.assign(intended.begin(), intended.end());
  out.mismatch.assign(intended.size(), false);
  for (std::size_t i = 0; i < intended.size(); ++i) {
    // One coin per agent per step keeps the random stream independent of beta.
    if (coin(rng) < profile[i]) {
      out.executed[i] = env::action_from_index(any_action(rng));
      out.mismatch[i] = out.executed[i] != intended[i];
    }
  }
  return out;
}

double expected_mismatch_rate(double beta, std::size_t action_count) {
  return beta * (1.0 - 1.0 / static_cast<double>(action_count));
}

}  // namespace dsdf
