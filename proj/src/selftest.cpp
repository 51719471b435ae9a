#include "dsdf/selftest.hpp"

#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>

#include "dsdf/actuator.hpp"
#include "dsdf/config.hpp"
#include "dsdf/env.hpp"
#include "dsdf/gamma_penalize.hpp"
#include "dsdf/kernels.hpp"
#include "dsdf/mixer.hpp"
#include "dsdf/nn.hpp"

namespace dsdf::selftest {
namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

Check kernels_agree() {
  Check c{"kernels scalar/simd agreement", true, ""};
  const auto* simd = kernels::avx2_table();
  if (!simd) {
    c.detail = "simd variant unavailable, scalar only";
    return c;
  }
  const auto& ref = kernels::scalar_table();
  std::mt19937_64 rng(11);
  const std::size_t rows = 7, in = 37, out = 13;
  auto x = random_vector(rows * in, rng), w = random_vector(out * in, rng), dy = random_vector(rows * out, rng);
  std::vector<double> y1(rows * out), y2(rows * out), dx1(rows * in), dx2(rows * in);
  std::vector<double> dw1(out * in, 0.0), dw2(out * in, 0.0);
  ref.gemm_nt(x.data(), w.data(), y1.data(), rows, in, out);
  simd->gemm_nt(x.data(), w.data(), y2.data(), rows, in, out);
  ref.gemm_nn(dy.data(), w.data(), dx1.data(), rows, in, out);
  simd->gemm_nn(dy.data(), w.data(), dx2.data(), rows, in, out);
  ref.gemm_tn(dy.data(), x.data(), dw1.data(), rows, in, out);
  simd->gemm_tn(dy.data(), x.data(), dw2.data(), rows, in, out);
  double worst = 0.0;
  auto cmp = [&](const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  };
  cmp(y1, y2);
  cmp(dx1, dx2);
  cmp(dw1, dw2);
  c.passed = worst < 1e-12;
  c.detail = "max abs diff " + std::to_string(worst);
  return c;
}

Check gradients_match() {
  Check c{"network gradients vs finite differences", true, ""};
  std::mt19937_64 rng(5);
  const std::size_t hidden[] = {9};
  auto net = nn::Mlp::glorot(nn::chain(6, hidden, 5, nn::Activation::Relu, nn::Activation::Identity), rng);
  const auto input = random_vector(6, rng);
  const auto weights = random_vector(5, rng);
  nn::LossFn loss = [&](std::span<const double> y, std::span<double> dy) {
    double l = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      l += weights[i] * y[i] * y[i];
      dy[i] = 2.0 * weights[i] * y[i];
    }
    return l;
  };
  const double err = nn::grad_check(net, input, loss);
  c.passed = err < 1e-3;
  c.detail = "max relative error " + std::to_string(err);
  return c;
}

Check mixer_monotone() {
  Check c{"mixer monotone in every utility", true, ""};
  std::mt19937_64 rng(9);
  auto net = mixer::MixingNet::qmix(3, 5, 8, rng);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto q = random_vector(3, rng), s = random_vector(5, rng);
    for (double& v : q) v *= 5.0;
    const double base = mixer::mix(net, q, s);
    for (std::size_t i = 0; i < q.size(); ++i) {
      auto qp = q;
      qp[i] += 1e-3;
      worst = std::min(worst, mixer::mix(net, qp, s) - base);
    }
  }
  c.passed = worst >= -1e-12;
  c.detail = "min delta " + std::to_string(worst);
  return c;
}

Check actuator_rate() {
  Check c{"actuator mismatch rate", true, ""};
  std::mt19937_64 rng(3);
  const StochasticityProfile profile({0.4});
  const std::size_t draws = 20000;
  std::size_t mism = 0;
  const env::Action intended[] = {env::Action::Load};
  for (std::size_t n = 0; n < draws; ++n) mism += actuate(intended, profile, rng).mismatch[0] ? 1 : 0;
  const double rate = static_cast<double>(mism) / draws;
  c.passed = std::abs(rate - expected_mismatch_rate(0.4)) < 0.02;
  c.detail = "rate " + std::to_string(rate);
  return c;
}

Check conservation() {
  Check c{"food conservation under random play", true, ""};
  const Scenario sc = builtin_scenario("desk_case1");
  const std::int64_t total = static_cast<std::int64_t>(sc.resource_budget) * env::kUnitsPerLevel;
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> pick(0, env::kActionCount - 1);
  std::size_t steps = 0;
  for (std::uint64_t ep = 0; ep < 5 && c.passed; ++ep) {
    auto world = env::GridWorld::reset(sc, ep);
    std::vector<env::Action> acts(world.agent_count());
    while (!world.done()) {
      for (auto& a : acts) a = env::action_from_index(pick(rng));
      world.step(acts);
      ++steps;
      if (world.accounted_units() != total) {
        c.passed = false;
        c.detail = "imbalance at episode " + std::to_string(ep);
        return c;
      }
    }
  }
  c.detail = std::to_string(steps) + " steps balanced";
  return c;
}

Check penalization() {
  Check c{"penalised gammas monotone and bounded", true, ""};
  gamma::PenalizeState state(3, gamma::PenaltySchedule{});
  const StochasticityProfile profile({0.0, 0.3, 0.6});
  std::mt19937_64 rng(4);
  std::vector<double> prev(state.gammas().begin(), state.gammas().end());
  const std::vector<env::Action> intended(3, env::Action::Noop);
  for (int t = 0; t < 2000; ++t) {
    state.on_transition(actuate(intended, profile, rng).mismatch);
    for (std::size_t i = 0; i < 3; ++i) {
      const double g = state.gammas()[i];
      if (g > prev[i] || g < 0.05 || g > 1.0 || (i == 0 && g != 1.0)) {
        c.passed = false;
        c.detail = "violation at step " + std::to_string(t);
        return c;
      }
      prev[i] = g;
    }
  }
  std::ostringstream os;
  os << "final " << prev[0] << ' ' << prev[1] << ' ' << prev[2];
  c.detail = os.str();
  return c;
}

Check config_roundtrip() {
  Check c{"config round trip", true, ""};
  TrainConfig cfg;
  cfg.method = Method::Penalize;
  cfg.seed = 17;
  const auto back = train_config_from_json(to_json(cfg));
  c.passed = to_json(back) == to_json(cfg);
  return c;
}

}  // namespace

std::vector<Check> run_all() {
  std::vector<std::function<Check()>> checks = {kernels_agree,  gradients_match, mixer_monotone,
                                                actuator_rate, conservation,    penalization,
                                                config_roundtrip};
  std::vector<Check> out;
  for (const auto& fn : checks) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({"(exception)", false, e.what()});
    }
  }
  return out;
}

bool report(const std::vector<Check>& checks, std::ostream& out) {
  bool ok = true;
  for (const auto& c : checks) {
    out << (c.passed ? "ok   " : "FAIL ") << c.name;
    if (!c.detail.empty()) out << " (" << c.detail << ')';
    out << '\n';
    ok = ok && c.passed;
  }
  return ok;
}

}  // namespace dsdf::selftest
