#include <map>
#include <random>

#include "doctest.h"
#include "dsdf/trainer.hpp"
#include "support.hpp"

using namespace dsdf;

namespace {

TrainConfig small_config(Method m) {
  TrainConfig c;
  c.scenario = tiny_scenario();
  c.method = m;
  c.seed = 3;
  c.batch_size = 4;
  c.buffer_capacity = 50;
  c.target_sync_interval = 5;
  c.step_max = 600;
  c.epsilon.decay_steps = 300;
  c.gamma_warmup_steps = 3;
  c.sizes.utility_hidden = {8};
  c.sizes.history_k = 2;
  c.sizes.mixer_embed = 4;
  c.sizes.gamma_hidden = 4;
  c.sizes.gamma_hyper_hidden = 6;
  c.log_interval_episodes = 5;
  c.eval_interval_steps = 300;
  c.eval_episodes = 2;
  return c;
}

replay::TrainingBatch sample_batch(const TrainConfig& c, const train::Learner& l, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const StochasticityProfile profile(c.scenario.beta);
  std::vector<replay::Episode> eps;
  for (std::uint64_t e = 0; e < 3; ++e) {
    eps.push_back(train::collect_episode(c.scenario, seed * 10 + e, l.utilities, l.history_k, profile, 1.0, rng).episode);
  }
  std::vector<const replay::Episode*> ptrs;
  for (const auto& e : eps) ptrs.push_back(&e);
  return replay::assemble_batch(ptrs, l.history_k);
}

// Q_tot of the executed joint action, computed from the public pieces.
std::vector<double> online_q_tot(const train::Learner& l, const replay::TrainingBatch& b) {
  nn::Matrix chosen(b.rows, b.agents);
  for (std::size_t i = 0; i < b.agents; ++i) {
    const auto q = nn::infer(l.utilities[i], b.histories[i]);
    for (std::size_t r = 0; r < b.rows; ++r) chosen(r, i) = q(r, b.actions[r * b.agents + i]);
  }
  return mixer::mix_batch(l.mixer, chosen, b.states);
}

}  // namespace

TEST_CASE("episode collection") {
  const Scenario s = tiny_scenario();
  const auto c = small_config(Method::Qmix);
  std::mt19937_64 init(1);
  const auto l = train::Learner::create(c, init);

  SUBCASE("uniform intended actions under full exploration") {
    std::mt19937_64 rng(2);
    std::vector<std::uint64_t> counts(env::kActionCount, 0);
    std::uint64_t total = 0;
    for (std::uint64_t e = 0; e < 300; ++e) {
      const auto ce = train::collect_episode(s, e, l.utilities, 2, StochasticityProfile({0.0, 0.0}), 1.0, rng);
      CHECK(ce.stats.length <= static_cast<std::size_t>(s.episode_limit));
      for (std::size_t a = 0; a < counts.size(); ++a) counts[a] += ce.stats.intended_counts[a];
      CHECK(ce.stats.mismatches == std::vector<std::uint64_t>{0, 0});
      for (std::size_t t = 0; t < ce.episode.length(); ++t) {
        for (std::size_t i = 0; i < 2; ++i) CHECK(ce.episode.intended(t, i) == ce.episode.executed(t, i));
      }
    }
    for (auto v : counts) total += v;
    const double expect = static_cast<double>(total) / static_cast<double>(counts.size());
    double chi = 0.0;
    for (auto v : counts) chi += (v - expect) * (v - expect) / expect;
    CHECK(chi < 24.32);  // 7 degrees of freedom, p = 0.001
  }
  SUBCASE("same seeds give the same episode") {
    std::mt19937_64 a(9), b(9);
    const StochasticityProfile p(s.beta);
    const auto x = train::collect_episode(s, 4, l.utilities, 2, p, 0.3, a);
    const auto y = train::collect_episode(s, 4, l.utilities, 2, p, 0.3, b);
    CHECK(x.stats.episode_return == y.stats.episode_return);
    CHECK(x.episode.length() == y.episode.length());
    for (std::size_t t = 0; t < x.episode.length(); ++t) {
      for (std::size_t i = 0; i < 2; ++i) CHECK(x.episode.executed(t, i) == y.episode.executed(t, i));
    }
  }
}

TEST_CASE("targets equal to the online estimate give a zero gradient") {
  for (Method m : {Method::Qmix, Method::Dsdf}) {
    const auto c = small_config(m);
    std::mt19937_64 init(4);
    const auto l = train::Learner::create(c, init);
    const auto b = sample_batch(c, l, 5);
    const auto q = online_q_tot(l, b);
    const auto tl = train::theta_loss_and_gradient(l, b, q);
    CHECK(tl.loss == doctest::Approx(0.0).epsilon(1e-14));
    for (const auto& g : tl.gradients) {
      for (double v : g) CHECK(std::abs(v) < 1e-13);
    }
  }
}

TEST_CASE("the loss falls when fitting a fixed batch") {
  auto c = small_config(Method::Qmix);
  c.gamma = 0.0;  // targets are the rewards and do not move
  c.lr_theta = 3e-3;
  std::mt19937_64 init(6);
  auto l = train::Learner::create(c, init);
  const auto b = sample_batch(c, l, 7);
  const double first = train::train_step(l, b, c).loss;
  double last = first;
  for (int i = 0; i < 300; ++i) last = train::train_step(l, b, c).loss;
  CHECK(last < 0.2 * first);
}

TEST_CASE("target networks follow the sync interval") {
  auto c = small_config(Method::Qmix);
  std::mt19937_64 init(7);
  auto l = train::Learner::create(c, init);
  const auto b = sample_batch(c, l, 8);
  for (int i = 0; i < 4; ++i) train::train_step(l, b, c);
  CHECK_FALSE(l.utilities[0] == l.target_utilities[0]);
  CHECK(l.syncs == 0);
  train::train_step(l, b, c);
  CHECK(l.syncs == 1);
  CHECK(l.utilities[0] == l.target_utilities[0]);
  CHECK(l.mixer == l.target_mixer);
}

TEST_CASE("the hypernetwork waits for the warmup") {
  auto c = small_config(Method::Dsdf);
  std::mt19937_64 init(8);
  auto l = train::Learner::create(c, init);
  const auto b = sample_batch(c, l, 9);
  const nn::Mlp before = l.gamma_net->hyper();
  for (int i = 0; i < 3; ++i) CHECK_FALSE(train::train_step(l, b, c).hyper_updated);
  CHECK(l.gamma_net->hyper() == before);
  CHECK(train::train_step(l, b, c).hyper_updated);
  CHECK_FALSE(l.gamma_net->hyper() == before);
  CHECK(l.gamma_history.size() == 1);
}

TEST_CASE("hyper gradient matches central differences") {
  auto c = small_config(Method::Dsdf);
  std::mt19937_64 init(9);
  auto l = train::Learner::create(c, init);
  const auto b = sample_batch(c, l, 10);
  const auto hs = train::hyper_loss_and_gradient(l, b);
  const std::vector<double> theta(l.gamma_net->hyper().params().begin(), l.gamma_net->hyper().params().end());
  auto loss = [&](std::span<const double> x) {
    auto copy = l;
    auto p = copy.gamma_net->mutable_hyper().params();
    std::copy(x.begin(), x.end(), p.begin());
    return train::hyper_loss_and_gradient(copy, b).loss;
  };
  const auto numeric = oracle::numeric_gradient(loss, theta);
  CHECK(oracle::worst_rel_err(hs.gradient, numeric, 1e-6) < 1e-3);
}

TEST_CASE("runs") {
  SUBCASE("no steps") {
    auto c = small_config(Method::Dsdf);
    c.step_max = 0;
    const auto r = train::run(c);
    CHECK(r.metrics.empty());
    CHECK(r.episodes == 0);
    CHECK(r.learner.train_steps == 0);
  }
  for (Method m : {Method::Dsdf, Method::Penalize, Method::Qmix, Method::Iql}) {
    CAPTURE(to_string(m));
    const auto c = small_config(m);
    const auto a = train::run(c);
    const auto b = train::run(c);
    CHECK(a.env_steps >= c.step_max);
    CHECK(a.learner.train_steps > 0);
    CHECK(a.eval_points.size() == 2);
    CHECK(train::to_json(a.learner) == train::to_json(b.learner));
    CHECK(a.rng_state == b.rng_state);
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
      CHECK(a.metrics[i].mean_return == b.metrics[i].mean_return);
      CHECK(a.metrics[i].gammas == b.metrics[i].gammas);
    }

    const auto ck = train::checkpoint_from_json(nlohmann::json::parse(train::checkpoint_json(a).dump()));
    CHECK(train::to_json(ck.learner) == train::to_json(a.learner));
    CHECK(to_json(ck.config) == to_json(c));
  }
}
