#include <random>

#include "doctest.h"
#include "dsdf/errors.hpp"
#include "dsdf/gamma_dsdf.hpp"
#include "dsdf/gamma_penalize.hpp"
#include "support.hpp"

using namespace dsdf;
using gamma::GammaHyperNet;
using gamma::GammaNetShape;

namespace {

nn::Matrix sparse_obs(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  nn::Matrix m(rows, cols);
  std::bernoulli_distribution keep(0.35);
  std::normal_distribution<double> d(0.0, 1.0);
  for (auto& v : m.data()) v = keep(rng) ? d(rng) : 0.0;
  return m;
}

nn::Matrix dense(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  nn::Matrix m(rows, cols);
  std::normal_distribution<double> d(0.0, 1.0);
  for (auto& v : m.data()) v = d(rng);
  return m;
}

// gamma via the hypernetwork evaluated by the oracle, then the gamma net by the oracle.
std::vector<double> gammas_oracle(const GammaHyperNet& net, std::span<const double> s,
                                  std::span<const double> o) {
  const auto theta = oracle::mlp_forward(net.hyper().shapes(), net.hyper().params(), s);
  const auto layers = net.shape().layers();
  return oracle::mlp_forward(layers, theta, o);
}

}  // namespace

TEST_CASE("materialize") {
  const GammaNetShape shape{3, 4, 5};
  std::mt19937_64 rng(1);
  GammaHyperNet net(shape, 6, 7, rng);
  const auto s = oracle::random_vector(6, rng);
  const auto a = gamma::materialize(net, s);
  CHECK(a == gamma::materialize(net, s));
  CHECK(a.param_count() == shape.param_count());

  const auto v = oracle::random_vector(shape.param_count(), rng);
  const auto m = gamma::materialize_params(shape, v);
  CHECK(std::equal(v.begin(), v.end(), m.params().begin(), m.params().end()));
  CHECK_THROWS_AS(gamma::materialize_params(shape, std::vector<double>(3, 0.0)), ConfigError);

  nn::Mlp zero_hyper = net.hyper();
  for (double& x : zero_hyper.params()) x = 0.0;
  GammaHyperNet zero(shape, zero_hyper);
  const auto g = gamma::predict_gammas(gamma::materialize(zero, s), oracle::random_vector(12, rng));
  for (double x : g) CHECK(x == 0.5);
}

TEST_CASE("predicted gammas lie strictly inside (0, 1)") {
  const GammaNetShape shape{2, 3, 4};
  std::mt19937_64 rng(2);
  GammaHyperNet net(shape, 5, 6, rng);
  const auto m = gamma::materialize(net, oracle::random_vector(5, rng, 3.0));
  for (int i = 0; i < 10000; ++i) {
    for (double g : gamma::predict_gammas(m, oracle::random_vector(6, rng, 30.0))) {
      CHECK(g > 0.0);
      CHECK(g < 1.0);
    }
  }
}

TEST_CASE("batched prediction equals per-row materialisation") {
  const GammaNetShape shape{3, 7, 6};
  std::mt19937_64 rng(3);
  GammaHyperNet net(shape, 9, 8, rng);
  const auto s = dense(25, 9, rng);
  const auto o = sparse_obs(25, 21, rng);
  const auto b = gamma::predict_gammas_batch(net, s, o, false);
  for (std::size_t r = 0; r < 25; ++r) {
    const auto via_net = gamma::predict_gammas(gamma::materialize(net, s.row(r)), o.row(r));
    const auto via_oracle = gammas_oracle(net, s.row(r), o.row(r));
    for (std::size_t a = 0; a < 3; ++a) {
      CHECK(std::abs(b.gammas(r, a) - via_net[a]) < 1e-12);
      CHECK(std::abs(b.gammas(r, a) - via_oracle[a]) < 1e-12);
    }
  }
  // A row gets identical bits alone or inside any batch.
  for (std::size_t r : {0, 7, 24}) {
    nn::Matrix s1(1, 9), o1(1, 21);
    std::copy(s.row(r).begin(), s.row(r).end(), s1.row(0).begin());
    std::copy(o.row(r).begin(), o.row(r).end(), o1.row(0).begin());
    const auto one = gamma::predict_gammas_batch(net, s1, o1, false);
    for (std::size_t a = 0; a < 3; ++a) CHECK(one.gammas(0, a) == b.gammas(r, a));
  }
  CHECK_THROWS_AS(gamma::predict_gammas_batch(net, s, dense(25, 20, rng), false), ConfigError);
}

TEST_CASE("hypernetwork gradient matches central differences") {
  const GammaNetShape shape{3, 5, 4};
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    GammaHyperNet net(shape, 6, 5, rng);
    const auto s = dense(8, 6, rng);
    const auto o = sparse_obs(8, 15, rng);
    const auto w = dense(8, 3, rng);
    auto loss = [&](std::span<const double> theta) {
      double l = 0.0;
      for (std::size_t r = 0; r < 8; ++r) {
        const auto gen = oracle::mlp_forward(net.hyper().shapes(), theta, s.row(r));
        const auto g = oracle::mlp_forward(shape.layers(), gen, o.row(r));
        for (std::size_t a = 0; a < 3; ++a) l += w(r, a) * g[a];
      }
      return l;
    };
    const auto b = gamma::predict_gammas_batch(net, s, o, true);
    const auto analytic = gamma::hyper_backward(net, b, w);
    const std::vector<double> theta(net.hyper().params().begin(), net.hyper().params().end());
    const auto numeric = oracle::numeric_gradient(loss, theta);
    CHECK(oracle::worst_rel_err(analytic, numeric, 1e-4) < 1e-4);
  }
}

TEST_CASE("frozen hypernetworks cannot be modified") {
  std::mt19937_64 rng(5);
  GammaHyperNet net({2, 2, 3}, 3, 4, rng);
  CHECK_NOTHROW(net.mutable_hyper());
  net.freeze();
  CHECK(net.frozen());
  CHECK_THROWS_AS(net.mutable_hyper(), UsageError);
  const auto back = gamma::gamma_hyper_from_json(nlohmann::json::parse(gamma::to_json(net).dump()));
  CHECK(back.frozen());
  CHECK(back.hyper() == net.hyper());
}

TEST_CASE("convergence rule") {
  gamma::ConvergenceConfig cfg;  // W = 20, tau = 0.01, K = 2000
  std::vector<std::vector<double>> h;
  for (int u = 0; u < 19; ++u) h.push_back({0.7, 0.4});
  CHECK_FALSE(gamma::convergence_check(h, cfg));
  h.push_back({0.7, 0.4});
  CHECK(gamma::convergence_check(h, cfg));

  // Square wave with period 20: the two half-window means differ by the amplitude.
  std::vector<std::vector<double>> osc;
  for (int u = 0; u < 200; ++u) osc.push_back({0.5, (u / 10) % 2 ? 0.6 : 0.4});
  CHECK_FALSE(gamma::convergence_check(osc, cfg));

  std::vector<std::vector<double>> capped;
  for (int u = 0; u < 2000; ++u) capped.push_back({0.5, (u / 10) % 2 ? 0.9 : 0.1});
  CHECK(gamma::convergence_check(capped, cfg));
  capped.pop_back();
  CHECK_FALSE(gamma::convergence_check(capped, cfg));
}

TEST_CASE("penalty schedule") {
  gamma::PenaltySchedule p;
  CHECK(p.at(0) == 0.01);
  CHECK(p.at(25'000) == doctest::Approx(0.005).epsilon(1e-15));
  CHECK(p.at(50'000) == 0.0);
  CHECK(p.at(1'000'000) == 0.0);
}

TEST_CASE("penalisation") {
  gamma::PenalizeState st(3, {});
  for (double g : st.gammas()) CHECK(g == 1.0);
  st.on_transition({false, false, false});
  for (double g : st.gammas()) CHECK(g == 1.0);
  CHECK(st.step() == 1);

  gamma::PenalizeState one(1, {});
  one.on_transition({true});
  CHECK(one.gammas()[0] == doctest::Approx(0.99).epsilon(1e-15));

  std::mt19937_64 rng(6);
  std::bernoulli_distribution flip(0.5);
  gamma::PenalizeState run(3, {.initial = 0.05, .decay_steps = 20'000, .floor = 0.05});
  std::vector<double> prev(run.gammas().begin(), run.gammas().end());
  for (int t = 0; t < 30'000; ++t) {
    run.on_transition({false, flip(rng), true});
    const auto g = run.gammas();
    CHECK(g[0] == 1.0);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(g[i] <= prev[i]);
      CHECK(g[i] >= 0.05);
      CHECK(g[i] <= 1.0);
      prev[i] = g[i];
    }
  }
  CHECK(run.gammas()[2] == 0.05);

  const auto back = gamma::penalize_from_json(nlohmann::json::parse(gamma::to_json(run).dump()));
  CHECK(back.step() == run.step());
  CHECK(std::equal(back.gammas().begin(), back.gammas().end(), run.gammas().begin()));
}
