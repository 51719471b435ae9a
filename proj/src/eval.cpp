#include "dsdf/eval.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dsdf/agents.hpp"
#include "dsdf/env.hpp"
#include "dsdf/errors.hpp"

namespace dsdf::eval {
namespace {

void check_dimensions(const train::Learner& learner, const Scenario& scenario) {
  const std::size_t agents = static_cast<std::size_t>(scenario.agent_count);
  const std::size_t obs = env::GridWorld::observation_size(scenario);
  const std::size_t state = env::GridWorld::state_size(scenario);
  if (learner.agents() != agents) throw ConfigError("checkpoint agent count does not match the scenario");
  if (learner.obs_dim != obs || learner.state_dim != state) {
    throw ConfigError("checkpoint observation/state sizes do not match the scenario");
  }
  const std::size_t hist = agents::history_size(learner.history_k, obs);
  for (const auto& u : learner.utilities) {
    if (u.input_dim() != hist || u.output_dim() != env::kActionCount) {
      throw ConfigError("checkpoint utility network does not fit the scenario");
    }
  }
  if (learner.mixer.agents != agents) throw ConfigError("checkpoint mixer does not match the scenario");
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

void append_columns(std::ostringstream& os, const char* prefix, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) os << ',' << prefix << i;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double ci95_half_width(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(n));
}

EvalSummary evaluate(const train::Learner& learner, const Scenario& scenario, std::size_t episodes,
                     std::uint64_t seed) {
  scenario.validate();
  check_dimensions(learner, scenario);
  EvalSummary s;
  s.agents = learner.agents();
  for (double t : scenario.targets) s.targets.push_back(t);
  if (episodes == 0) {
    s.error = "no evaluation episodes requested";
    return s;
  }
  const StochasticityProfile profile(scenario.beta);
  std::vector<double> gamma_sum(s.agents, 0.0);
  std::size_t gamma_rows = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    std::mt19937_64 rng(train::derive_seed(seed, 2 * e + 1));
    auto ce = train::collect_episode(scenario, train::derive_seed(seed, 2 * e), learner.utilities,
                                     learner.history_k, profile, 0.0, rng, nullptr);
    s.returns.push_back(ce.stats.episode_return);
    s.consumed.push_back(ce.stats.consumed);
    s.mismatches.push_back(ce.stats.mismatches);
    std::vector<bool> hit;
    for (std::size_t i = 0; i < s.agents; ++i) hit.push_back(ce.stats.consumed[i] >= ce.stats.targets[i]);
    s.attained.push_back(std::move(hit));
    if (learner.gamma_net && ce.episode.length() > 0) {
      const replay::Episode* one[] = {&ce.episode};
      const auto batch = replay::assemble_batch(one, learner.history_k);
      const auto g = gamma::predict_gammas_batch(*learner.gamma_net, batch.next_states,
                                                 batch.next_observations, false);
      for (std::size_t r = 0; r < g.gammas.rows(); ++r) {
        for (std::size_t i = 0; i < s.agents; ++i) gamma_sum[i] += g.gammas(r, i);
      }
      gamma_rows += g.gammas.rows();
    }
  }
  s.mean_return = mean(s.returns);
  s.ci_half_width = ci95_half_width(s.returns);
  if (learner.gamma_net && gamma_rows > 0) {
    for (double& g : gamma_sum) g /= static_cast<double>(gamma_rows);
    s.mean_gammas = gamma_sum;
  } else if (learner.penalize) {
    s.mean_gammas.assign(learner.penalize->gammas().begin(), learner.penalize->gammas().end());
  }
  return s;
}

EvalSummary evaluate(const train::Checkpoint& checkpoint, std::size_t episodes, std::uint64_t seed) {
  return evaluate(checkpoint.learner, checkpoint.config.scenario, episodes, seed);
}

RunReport make_report(const train::RunResult& result, const EvalSummary& final_eval) {
  RunReport r;
  r.method = std::string(to_string(result.config.method));
  r.scenario = result.config.scenario.name;
  r.seed = result.config.seed;
  r.agents = result.learner.agents();
  r.recent_training = result.recent_training;
  r.final_eval = final_eval;
  r.gamma_log = result.gamma_log;
  r.metrics = result.metrics;
  r.eval_points = result.eval_points;
  r.env_steps = result.env_steps;
  r.config = to_json(result.config);
  return r;
}

std::string metrics_csv(std::span<const train::MetricsRow> rows, std::size_t agents) {
  std::ostringstream os;
  os << "env_steps,episodes,train_steps,loss,mean_return,epsilon";
  append_columns(os, "gamma_", agents);
  append_columns(os, "mismatch_", agents);
  os << '\n';
  for (const auto& m : rows) {
    os << m.env_steps << ',' << m.episodes << ',' << m.train_steps << ',' << format_double(m.loss) << ','
       << format_double(m.mean_return) << ',' << format_double(m.epsilon);
    for (std::size_t i = 0; i < agents; ++i) {
      os << ',';
      if (i < m.gammas.size()) os << format_double(m.gammas[i]);
    }
    for (std::size_t i = 0; i < agents; ++i) {
      os << ',';
      if (i < m.mismatches.size()) os << m.mismatches[i];
    }
    os << '\n';
  }
  return os.str();
}

std::string gamma_csv(std::span<const train::GammaLogRow> rows, std::size_t agents) {
  std::ostringstream os;
  os << "update";
  append_columns(os, "gamma_", agents);
  os << '\n';
  for (const auto& g : rows) {
    os << g.update;
    for (std::size_t i = 0; i < agents; ++i) {
      os << ',';
      if (i < g.gammas.size()) os << format_double(g.gammas[i]);
    }
    os << '\n';
  }
  return os.str();
}

std::string returns_csv(const RunReport& report) {
  std::ostringstream os;
  os << "phase,env_steps,episodes,mean_return,ci_half_width\n";
  for (const auto& p : report.eval_points) {
    os << "periodic," << p.env_steps << ',' << p.episodes << ',' << format_double(p.mean_return) << ','
       << format_double(p.ci_half_width) << '\n';
  }
  if (!report.final_eval.returns.empty()) {
    os << "final," << report.env_steps << ',' << report.final_eval.returns.size() << ','
       << format_double(report.final_eval.mean_return) << ','
       << format_double(report.final_eval.ci_half_width) << '\n';
  }
  return os.str();
}

std::string consumption_csv(const RunReport& report) {
  std::ostringstream os;
  os << "phase,episode,agent,target,consumed,attained,return\n";
  auto rows = [&](const char* phase, std::size_t episode, std::span<const double> consumed,
                  std::span<const double> targets, double ret) {
    for (std::size_t i = 0; i < consumed.size(); ++i) {
      const double t = i < targets.size() ? targets[i] : 0.0;
      os << phase << ',' << episode << ',' << i << ',' << format_double(t) << ','
         << format_double(consumed[i]) << ',' << (consumed[i] >= t ? 1 : 0) << ',' << format_double(ret)
         << '\n';
    }
  };
  for (std::size_t e = 0; e < report.recent_training.size(); ++e) {
    const auto& st = report.recent_training[e];
    rows("training", e, st.consumed, st.targets, st.episode_return);
  }
  const auto& fe = report.final_eval;
  for (std::size_t e = 0; e < fe.consumed.size(); ++e) {
    rows("execution", e, fe.consumed[e], fe.targets, fe.returns[e]);
  }
  return os.str();
}

std::filesystem::path output_dir(const std::optional<std::filesystem::path>& requested,
                                 const std::filesystem::path& fallback) {
  if (requested) return *requested;
  if (const char* env = std::getenv("DSDF_OUT_DIR"); env && *env) return env;
  return fallback;
}

void emit_reports(const RunReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create output directory " + out_dir.string());
  }
  write_file(out_dir / "metrics.csv", metrics_csv(report.metrics, report.agents));
  write_file(out_dir / "gamma_trajectory.csv", gamma_csv(report.gamma_log, report.agents));
  write_file(out_dir / "returns.csv", returns_csv(report));
  write_file(out_dir / "agents_consumption.csv", consumption_csv(report));

  const auto& fe = report.final_eval;
  nlohmann::json final_eval = {{"episodes", fe.returns.size()},
                               {"mean_return", fe.mean_return},
                               {"ci_half_width", fe.ci_half_width},
                               {"mean_gammas", fe.mean_gammas}};
  if (fe.error) final_eval["error"] = *fe.error;
  nlohmann::json manifest = {
      {"schema_version", kReportSchemaVersion},
      {"code_version", kCodeVersion},
      {"method", report.method},
      {"scenario", report.scenario},
      {"seed", report.seed},
      {"env_steps", report.env_steps},
      {"return_normalization", "episode return divided by the resource budget T"},
      {"config", report.config},
      {"final_eval", final_eval},
      {"files", {"metrics.csv", "gamma_trajectory.csv", "returns.csv", "agents_consumption.csv"}}};
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace dsdf::eval
