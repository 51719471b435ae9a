// Acceptance suite: one PASS/FAIL line per criterion. Arguments select a
// subset of criteria by number; with none, all ten run.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "../support.hpp"
#include "dsdf/actuator.hpp"
#include "dsdf/alloc.hpp"
#include "dsdf/env.hpp"
#include "dsdf/eval.hpp"
#include "dsdf/mixer.hpp"
#include "dsdf/targets.hpp"
#include "dsdf/trainer.hpp"

using namespace dsdf;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------- 1

nn::Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  nn::Matrix m(r, c);
  std::normal_distribution<double> d(0.0, scale);
  for (auto& v : m.data()) v = d(rng);
  return m;
}

Verdict gradients() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> width(2, 7);
  double worst_util = 0.0, worst_mix = 0.0, worst_gamma = 0.0;

  for (int net = 0; net < 20; ++net) {
    // Utility network, squared loss on all outputs.
    const std::size_t in = width(rng), out = width(rng);
    const std::vector<std::size_t> hidden = {width(rng), width(rng)};
    auto u = nn::Mlp::glorot(agents::utility_shapes(in, hidden, out), rng);
    for (double& p : u.params()) p += std::normal_distribution<double>(0.0, 0.1)(rng);
    const auto x = oracle::random_vector(in, rng);
    const auto f = nn::forward(u, x);
    std::vector<double> dl(f.output.begin(), f.output.end());
    const auto g = nn::backward(u, f.tape, dl);
    auto uloss = [&](std::span<const double> p) {
      double l = 0.0;
      for (double v : oracle::mlp_forward(u.shapes(), p, x)) l += 0.5 * v * v;
      return l;
    };
    const std::vector<double> up(u.params().begin(), u.params().end());
    worst_util = std::max(worst_util, oracle::worst_rel_err(g.params, oracle::numeric_gradient(uloss, up)));

    // Mixing hypernetworks, weighted sum of Q_tot.
    const std::size_t agents = width(rng), state = width(rng), embed = width(rng), rows = 4;
    auto mix = mixer::MixingNet::qmix(agents, state, embed, rng);
    for (auto* part : mix.parts()) {
      for (double& p : part->params()) p += std::normal_distribution<double>(0.0, 0.2)(rng);
    }
    const auto q = random_matrix(rows, agents, rng);
    const auto s = random_matrix(rows, state, rng);
    const auto w = oracle::random_vector(rows, rng);
    const auto mf = mixer::mix_forward(mix, q, s);
    const auto mg = mixer::mix_backward(mix, mf.tape, w, true);
    auto mloss = [&](const mixer::MixingNet& m, const nn::Matrix& qq) {
      const auto out = mixer::mix_batch(m, qq, s);
      double l = 0.0;
      for (std::size_t r = 0; r < rows; ++r) l += w[r] * out[r];
      return l;
    };
    const std::vector<double> qv(q.data().begin(), q.data().end());
    worst_mix = std::max(worst_mix, oracle::worst_rel_err(mg.q.data(), oracle::numeric_gradient(
        [&](std::span<const double> v) { return mloss(mix, nn::Matrix(rows, agents, std::vector<double>(v.begin(), v.end()))); }, qv)));
    const auto parts = mix.parts();
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const std::vector<double> theta(parts[p]->params().begin(), parts[p]->params().end());
      const auto numeric = oracle::numeric_gradient(
          [&](std::span<const double> v) {
            auto copy = mix;
            auto dst = copy.parts()[p]->params();
            std::copy(v.begin(), v.end(), dst.begin());
            return mloss(copy, q);
          },
          theta);
      worst_mix = std::max(worst_mix, oracle::worst_rel_err(mg.params[p], numeric));
    }

    // Discount hypernetwork through the TD target of a small learner.
    TrainConfig c;
    c.scenario = tiny_scenario();
    c.method = Method::Dsdf;
    c.sizes.utility_hidden = {width(rng)};
    c.sizes.history_k = 2;
    c.sizes.mixer_embed = width(rng);
    c.sizes.gamma_hidden = width(rng);
    c.sizes.gamma_hyper_hidden = width(rng);
    auto l = train::Learner::create(c, rng);
    for (double& p : l.gamma_net->mutable_hyper().params()) p += std::normal_distribution<double>(0.0, 0.2)(rng);
    // Distinct online and target networks, as after some training.
    for (auto& t : l.target_utilities) {
      for (double& p : t.params()) p += std::normal_distribution<double>(0.0, 0.3)(rng);
    }
    const StochasticityProfile profile(c.scenario.beta);
    std::vector<replay::Episode> eps;
    for (std::uint64_t e = 0; e < 2; ++e) {
      eps.push_back(train::collect_episode(c.scenario, 1000 + net * 2 + e, l.utilities, 2, profile, 1.0, rng).episode);
    }
    std::vector<const replay::Episode*> ptrs = {&eps[0], &eps[1]};
    const auto batch = replay::assemble_batch(ptrs, 2);
    const auto hs = train::hyper_loss_and_gradient(l, batch);
    const std::vector<double> th(l.gamma_net->hyper().params().begin(), l.gamma_net->hyper().params().end());
    const auto numeric = oracle::numeric_gradient(
        [&](std::span<const double> v) {
          auto copy = l;
          auto dst = copy.gamma_net->mutable_hyper().params();
          std::copy(v.begin(), v.end(), dst.begin());
          return train::hyper_loss_and_gradient(copy, batch).loss;
        },
        th);
    worst_gamma = std::max(worst_gamma, oracle::worst_rel_err(hs.gradient, numeric));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double worst = std::max({worst_util, worst_mix, worst_gamma});
  return {worst < 1e-3 && secs < 60.0,
          "worst rel err utility " + fmt("%.2e", worst_util) + ", mixer " + fmt("%.2e", worst_mix) + ", gamma " +
              fmt("%.2e", worst_gamma) + " in " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------- 2

Verdict monotonicity() {
  std::mt19937_64 rng(202);
  auto mix = mixer::MixingNet::qmix(4, 20, 32, rng);
  for (auto* part : mix.parts()) {
    for (std::size_t l = 0; l < part->layer_count(); ++l) {
      for (double& b : part->bias(l)) b = std::normal_distribution<double>(0.0, 0.5)(rng);
    }
  }
  double worst = INFINITY;
  for (int pair = 0; pair < 1000; ++pair) {
    const auto q = oracle::random_vector(4, rng, 2.0);
    const auto s = oracle::random_vector(20, rng);
    const double base = mixer::mix(mix, q, s);
    for (std::size_t i = 0; i < 4; ++i) {
      auto up = q;
      up[i] += 1e-3;
      worst = std::min(worst, mixer::mix(mix, up, s) - base);
    }
  }
  return {worst >= -1e-12, "smallest change " + fmt("%.3e", worst) + " over 1000 pairs x 4 coordinates"};
}

// ---------------------------------------------------------------- 3

Verdict actuator() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> pick(0, env::kActionCount - 1);
  bool ok = true;
  std::string detail;
  for (double beta : {0.2, 0.4, 0.6}) {
    const StochasticityProfile p({beta});
    std::size_t mismatches = 0;
    for (int n = 0; n < 100000; ++n) {
      const env::Action a[] = {env::action_from_index(pick(rng))};
      mismatches += actuate(a, p, rng).mismatch[0];
    }
    const double rate = mismatches / 1e5, expect = beta * 7.0 / 8.0;
    ok = ok && std::abs(rate - expect) <= 0.01;
    detail += "beta " + fmt("%.1f", beta) + ": " + fmt("%.4f", rate) + " vs " + fmt("%.4f", expect) + "; ";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 4

Verdict conservation() {
  const Scenario s = builtin_scenario("desk_case1");
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> pick(0, env::kActionCount - 1);
  const std::int64_t total = static_cast<std::int64_t>(s.resource_budget) * env::kUnitsPerLevel;
  std::size_t steps = 0, violations = 0;
  for (std::uint64_t ep = 0; ep < 100; ++ep) {
    auto w = env::GridWorld::reset(s, ep);
    auto account = [&] {
      std::int64_t units = 0;
      for (const auto& a : w.agents()) units += a.consumed_units + a.carried.value_or(0) * env::kUnitsPerLevel;
      for (const auto& f : w.foods()) units += f.level * env::kUnitsPerLevel;
      return units;
    };
    violations += account() != total;
    while (!w.done()) {
      std::vector<env::Action> a(w.agent_count());
      for (auto& x : a) x = env::action_from_index(pick(rng));
      w.step(a);
      ++steps;
      violations += account() != total;
    }
  }
  return {violations == 0, std::to_string(violations) + " violations over " + std::to_string(steps) + " steps"};
}

// ---------------------------------------------------------------- 5

// Two agents, two actions, two states. Agent 0's action picks the next state;
// the reward splits into one term per agent, so the optimal joint Q is a sum.
struct TinyMdp {
  double r0[2][2] = {{0.3, -0.2}, {0.0, 0.8}};  // [s][a0]
  double r1[2][2] = {{-0.5, 0.4}, {0.6, 0.1}};  // [s][a1]
  double gamma = 0.9;
  int next(int, int a0) const { return a0; }
  double reward(int s, int a0, int a1) const { return r0[s][a0] + r1[s][a1]; }
};

Verdict value_iteration() {
  const TinyMdp m;
  // Brute force over joint actions.
  long double q[2][2][2] = {};
  for (int it = 0; it < 2000; ++it) {
    long double nq[2][2][2];
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const int n = m.next(s, a);
          long double best = -1e300L;
          for (int x = 0; x < 2; ++x)
            for (int y = 0; y < 2; ++y) best = std::max(best, q[n][x][y]);
          nq[s][a][b] = m.reward(s, a, b) + m.gamma * best;
        }
    std::copy(&nq[0][0][0], &nq[0][0][0] + 8, &q[0][0][0]);
  }

  // Library target iteration: tabular utilities (one-hot state -> action values)
  // through the identity mixer, each sweep refitting the utilities to the targets.
  replay::TrainingBatch batch;
  batch.rows = 8;
  batch.agents = 2;
  batch.histories.assign(2, nn::Matrix(8, 2));
  batch.next_histories.assign(2, nn::Matrix(8, 2));
  batch.states = nn::Matrix(8, 1);
  batch.next_states = nn::Matrix(8, 1);
  batch.next_observations = nn::Matrix(8, 2);
  batch.actions.assign(16, 0);
  batch.rewards.assign(8, 0.0);
  batch.terminal.assign(8, false);
  for (int s = 0, row = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b, ++row) {
        const int n = m.next(s, a);
        for (std::size_t i = 0; i < 2; ++i) {
          batch.histories[i](row, s) = 1.0;
          batch.next_histories[i](row, n) = 1.0;
        }
        batch.actions[row * 2] = a;
        batch.actions[row * 2 + 1] = b;
        batch.rewards[row] = m.reward(s, a, b);
      }
  // params [W (action x state) | b]: Q_i(s, a) = W[a * 2 + s]
  std::vector<nn::Mlp> util(2, nn::Mlp({{2, 2, nn::Activation::Identity}}, std::vector<double>(6, 0.0)));
  const auto sum = mixer::MixingNet::sum(2, 1);
  for (int it = 0; it < 2000; ++it) {
    const auto y = targets::td_targets_fixed(batch, util, sum, m.gamma);
    // Least-squares fit of y(s, a, b) = Q_0(s, a) + Q_1(s, b).
    std::vector<double> w0(6, 0.0), w1(6, 0.0);
    for (int s = 0; s < 2; ++s) {
      const double mean = (y[s * 4] + y[s * 4 + 1] + y[s * 4 + 2] + y[s * 4 + 3]) / 4.0;
      for (int a = 0; a < 2; ++a) w0[a * 2 + s] = (y[s * 4 + a * 2] + y[s * 4 + a * 2 + 1]) / 2.0;
      for (int b = 0; b < 2; ++b) w1[b * 2 + s] = (y[s * 4 + b] + y[s * 4 + 2 + b]) / 2.0 - mean;
    }
    std::copy(w0.begin(), w0.end(), util[0].params().begin());
    std::copy(w1.begin(), w1.end(), util[1].params().begin());
  }
  double sup = 0.0;
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        const double mine = util[0].params()[a * 2 + s] + util[1].params()[b * 2 + s];
        sup = std::max(sup, static_cast<double>(std::abs(mine - q[s][a][b])));
      }
  return {sup < 1e-6, "sup-norm " + fmt("%.3e", sup)};
}

// ---------------------------------------------------------------- 6

Verdict reductions() {
  TrainConfig c;
  c.scenario = builtin_scenario("desk_case1");
  std::mt19937_64 rng(606);
  auto l = train::Learner::create(c, rng);
  const StochasticityProfile profile(c.scenario.beta);
  std::vector<replay::Episode> eps;
  for (std::uint64_t e = 0; e < 2; ++e) {
    eps.push_back(train::collect_episode(c.scenario, e, l.utilities, l.history_k, profile, 1.0, rng).episode);
  }
  std::vector<const replay::Episode*> ptrs = {&eps[0], &eps[1]};
  const auto batch = replay::assemble_batch(ptrs, l.history_k);

  // (a) gamma network forced to a constant.
  const double g = 0.93;
  nn::Mlp hyper = l.gamma_net->hyper();
  for (double& p : hyper.params()) p = 0.0;
  const auto& shape = l.gamma_net->shape();
  const std::size_t in = shape.agents * shape.obs_dim;
  const std::size_t b2 = shape.hidden * in + shape.hidden + shape.agents * shape.hidden;
  auto bias = hyper.bias(hyper.layer_count() - 1);
  for (std::size_t a = 0; a < shape.agents; ++a) bias[b2 + a] = std::log(g / (1.0 - g));
  const gamma::GammaHyperNet constant(shape, hyper);
  const auto yd = targets::td_targets_dsdf(batch, l.target_utilities, l.target_mixer, constant);
  const auto yq = targets::td_targets_fixed(batch, l.target_utilities, l.target_mixer, g,
                                            targets::GammaPlacement::Inside);
  double d_const = 0.0;
  for (std::size_t r = 0; r < batch.rows; ++r) d_const = std::max(d_const, std::abs(yd[r] - yq[r]));

  // (b) identity mixer, unit gammas.
  const auto sum = mixer::MixingNet::sum(batch.agents, l.state_dim);
  const auto next = targets::greedy_next_values(l.target_utilities, batch.next_histories);
  const auto ys = targets::td_targets_scaled(batch, next, sum, nn::Matrix(batch.rows, batch.agents, 1.0));
  double d_sum = 0.0;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    double want = batch.rewards[r];
    if (!batch.terminal[r]) {
      for (std::size_t i = 0; i < batch.agents; ++i) {
        const auto q = oracle::mlp_forward(l.target_utilities[i].shapes(), l.target_utilities[i].params(),
                                           batch.next_histories[i].row(r));
        want += *std::max_element(q.begin(), q.end());
      }
    }
    d_sum = std::max(d_sum, std::abs(ys[r] - want));
  }

  // (c) one agent through the identity mixer trains exactly like an independent learner.
  Scenario solo = tiny_scenario();
  solo.agent_count = 1;
  solo.targets = {4.0};
  solo.beta = {0.3};
  TrainConfig sc;
  sc.scenario = solo;
  sc.method = Method::Iql;
  sc.sizes.utility_hidden = {16};
  std::mt19937_64 r1(7), r2(7);
  const auto iql = train::Learner::create(sc, r1);
  sc.method = Method::Qmix;
  auto mixed = train::Learner::create(sc, r2);
  mixed.utilities = iql.utilities;
  mixed.target_utilities = iql.target_utilities;
  mixed.mixer = mixer::MixingNet::sum(1, mixed.state_dim);
  mixed.target_mixer = mixed.mixer;
  std::vector<replay::Episode> solo_eps;
  for (std::uint64_t e = 0; e < 3; ++e) {
    solo_eps.push_back(train::collect_episode(solo, e, iql.utilities, iql.history_k,
                                              StochasticityProfile(solo.beta), 0.5, rng).episode);
  }
  std::vector<const replay::Episode*> sp = {&solo_eps[0], &solo_eps[1], &solo_eps[2]};
  const auto sb = replay::assemble_batch(sp, iql.history_k);
  const auto yi = targets::td_targets_iql(sb, iql.target_utilities, 0.99);
  const auto ym = targets::td_targets_fixed(sb, mixed.target_utilities, mixed.target_mixer, 0.99);
  double d_iql = 0.0;
  for (std::size_t r = 0; r < sb.rows; ++r) d_iql = std::max(d_iql, std::abs(yi(r, 0) - ym[r]));
  const auto gi = train::theta_loss_and_gradient(iql, sb, yi.data());
  const auto gm = train::theta_loss_and_gradient(mixed, sb, ym);
  d_iql = std::max(d_iql, std::abs(gi.loss - gm.loss));
  for (std::size_t k = 0; k < gi.gradients[0].size(); ++k) {
    d_iql = std::max(d_iql, std::abs(gi.gradients[0][k] - gm.gradients[0][k]));
  }

  const bool ok = d_const < 1e-12 && d_sum < 1e-12 && d_iql < 1e-12;
  return {ok, "constant gamma " + fmt("%.1e", d_const) + ", sum-of-max " + fmt("%.1e", d_sum) +
                  ", single-agent/independent " + fmt("%.1e", d_iql)};
}

// ---------------------------------------------------------------- 7, 8

struct RunOutcome {
  double eval_return = 0.0;
  std::vector<double> gammas;
};

std::map<std::string, RunOutcome> g_runs;
std::ofstream g_log;

RunOutcome trained(const std::string& scenario, Method m, std::uint64_t seed) {
  const std::string key = scenario + "/" + std::string(to_string(m)) + "/" + std::to_string(seed);
  if (auto it = g_runs.find(key); it != g_runs.end()) return it->second;
  TrainConfig c = load_train_config(fs::path(DSDF_CONFIG_DIR) / (scenario + ".json"));
  c.method = m;
  c.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = train::run(c);
  const auto e = eval::evaluate(r.learner, c.scenario, c.eval_episodes, train::derive_seed(seed, 99));
  RunOutcome o{e.mean_return, e.mean_gammas};
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string gs;
  for (double v : o.gammas) gs += " " + fmt("%.4f", v);
  std::fprintf(stderr, "  %s: return %.4f gamma [%s ] (%.0f s)\n", key.c_str(), o.eval_return, gs.c_str(), secs);
  if (g_log) g_log << key << ',' << eval::format_double(o.eval_return) << ',' << gs << '\n' << std::flush;
  g_runs[key] = o;
  return o;
}

Verdict gamma_ordering() {
  const Scenario s = builtin_scenario("desk_case1");
  std::vector<std::size_t> det, high, mid;
  for (std::size_t i = 0; i < s.beta.size(); ++i) {
    if (s.beta[i] == 0.0) det.push_back(i);
    if (s.beta[i] == 0.6) high.push_back(i);
    if (s.beta[i] == 0.3) mid.push_back(i);
  }
  auto group = [](const std::vector<double>& g, const std::vector<std::size_t>& idx) {
    double m = 0.0;
    for (std::size_t i : idx) m += g[i];
    return m / static_cast<double>(idx.size());
  };
  int ordered = 0;
  std::string detail = "dsdf seeds with gamma(beta=0) > gamma(beta=0.6):";
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto o = trained("desk_case1", Method::Dsdf, seed);
    const double d = group(o.gammas, det), h = group(o.gammas, high);
    ordered += d > h;
    detail += " " + fmt("%.3f", d) + (d > h ? ">" : "<=") + fmt("%.3f", h);
  }
  bool pen_ok = true;
  detail += "; penalize:";
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto o = trained("desk_case1", Method::Penalize, seed);
    const double d = group(o.gammas, det), m = group(o.gammas, mid), h = group(o.gammas, high);
    bool exact = true;
    for (std::size_t i : det) exact = exact && o.gammas[i] == 1.0;
    pen_ok = pen_ok && exact && d >= m && m >= h;
    detail += " " + fmt("%.3f", d) + "/" + fmt("%.3f", m) + "/" + fmt("%.3f", h);
  }
  return {ordered >= 4 && pen_ok, std::to_string(ordered) + "/5 ordered; " + detail};
}

Verdict returns_vs_qmix() {
  bool ok = true;
  std::string detail;
  for (const char* scenario : {"desk_case1", "desk_case2"}) {
    int wins = 0;
    detail += std::string(scenario) + ":";
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const double d = trained(scenario, Method::Dsdf, seed).eval_return;
      const double q = trained(scenario, Method::Qmix, seed).eval_return;
      wins += d >= q;
      detail += " " + fmt("%.3f", d) + (d >= q ? ">=" : "<") + fmt("%.3f", q);
    }
    detail += " (" + std::to_string(wins) + "/5); ";
    ok = ok && wins >= 3;
  }
  // Full-scale configs must load and run.
  for (const char* scenario : {"paper_case1", "paper_case2"}) {
    TrainConfig c = load_train_config(fs::path(DSDF_CONFIG_DIR) / (std::string(scenario) + ".json"));
    c.step_max = 1000;
    c.batch_size = 1;
    c.eval_interval_steps = 0;
    const auto r = train::run(c);
    const auto e = eval::evaluate(r.learner, c.scenario, 1, 0);
    const bool ran = r.env_steps >= 1000 && r.learner.train_steps > 0 && e.returns.size() == 1;
    ok = ok && ran;
    detail += std::string(scenario) + (ran ? " runs; " : " FAILED to run; ");
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 9

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DSDF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Verdict reproducibility() {
  const auto dir = fs::temp_directory_path() / "dsdf_acceptance_repro";
  fs::remove_all(dir);
  // Long enough for the discount hypernetwork to start updating.
  const std::string base = "train --quiet --config " DSDF_CONFIG_DIR "/desk_case1.json --steps 60000 --seed 3 --out ";
  const int a = run_cli(base + (dir / "a").string());
  const int b = run_cli(base + (dir / "b").string());
  bool same = a == 0 && b == 0;
  std::size_t bytes = 0;
  for (const char* f : {"metrics.csv", "gamma_trajectory.csv", "returns.csv", "agents_consumption.csv"}) {
    const auto x = slurp(dir / "a" / f), y = slurp(dir / "b" / f);
    same = same && !x.empty() && x == y;
    bytes += x.size();
  }
  fs::remove_all(dir);
  return {same, "exit codes " + std::to_string(a) + "/" + std::to_string(b) + ", " + std::to_string(bytes) +
                    " bytes of logs compared"};
}

// ---------------------------------------------------------------- 10

Verdict penalize_bounds() {
  // Module driven by the real actuator for 10k steps ...
  const Scenario s = builtin_scenario("desk_case1");
  const StochasticityProfile profile(s.beta);
  gamma::PenalizeState st(s.beta.size(), {});
  std::mt19937_64 rng(1010);
  std::uniform_int_distribution<std::size_t> pick(0, env::kActionCount - 1);
  std::vector<double> prev(st.gammas().begin(), st.gammas().end());
  bool ok = true;
  for (int t = 0; t < 10000; ++t) {
    std::vector<env::Action> intended(s.beta.size());
    for (auto& a : intended) a = env::action_from_index(pick(rng));
    st.on_transition(actuate(intended, profile, rng).mismatch);
    for (std::size_t i = 0; i < prev.size(); ++i) {
      const double g = st.gammas()[i];
      ok = ok && g <= prev[i] && g >= 0.05 && g <= 1.0 && (s.beta[i] != 0.0 || g == 1.0);
      prev[i] = g;
    }
  }
  // ... and inside a 10k-step training run.
  TrainConfig c = load_train_config(DSDF_CONFIG_DIR "/desk_case1.json");
  c.method = Method::Penalize;
  c.step_max = 10000;
  c.eval_interval_steps = 0;
  const auto r = train::run(c);
  std::vector<double> last(s.beta.size(), 1.0);
  for (const auto& row : r.gamma_log) {
    for (std::size_t i = 0; i < last.size(); ++i) {
      const double g = row.gammas[i];
      ok = ok && g <= last[i] && g >= 0.05 && g <= 1.0 && (s.beta[i] != 0.0 || g == 1.0);
      last[i] = g;
    }
  }
  std::string gs;
  for (double v : prev) gs += " " + fmt("%.4f", v);
  return {ok && !r.gamma_log.empty(), "final gammas [" + gs + " ], " + std::to_string(r.gamma_log.size()) +
                                          " logged training updates"};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  if (const char* p = std::getenv("DSDF_ACCEPTANCE_LOG"); p && *p) g_log.open(p);

  const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {1, gradients},     {2, monotonicity},    {3, actuator},      {4, conservation},
      {5, value_iteration}, {6, reductions},    {7, gamma_ordering}, {8, returns_vs_qmix},
      {9, reproducibility}, {10, penalize_bounds}};
  int failed = 0;
  for (const auto& [n, fn] : criteria) {
    if (!wanted.empty() && !wanted.contains(n)) continue;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s criterion %d: %s\n", v.pass ? "PASS" : "FAIL", n, v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
