// dsdf: train / eval / compare / selftest front end.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dsdf/alloc.hpp"
#include "dsdf/config.hpp"
#include "dsdf/errors.hpp"
#include "dsdf/eval.hpp"
#include "dsdf/selftest.hpp"
#include "dsdf/trainer.hpp"

namespace fs = std::filesystem;
using namespace dsdf;

namespace {

constexpr int kUsageExit = 2;
constexpr std::uint64_t kFinalEvalStream = 99;

struct TrainArgs {
  std::string config;
  std::string method;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> steps;
  std::optional<std::string> out;
  bool quiet = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::size_t episodes = 10;
  std::uint64_t seed = 0;
  std::optional<std::string> out;
};

struct CompareArgs {
  std::vector<std::string> configs;
  std::size_t seeds = 5;
  std::vector<std::string> methods = {"dsdf", "penalize", "qmix", "iql"};
  std::optional<std::uint64_t> steps;
  std::optional<std::string> out;
  bool quiet = false;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string join_gammas(const std::vector<double>& g) {
  std::string s;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i) s += ' ';
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", g[i]);
    s += buf;
  }
  return s;
}

train::RunHooks progress_hooks(bool quiet, const std::string& tag) {
  train::RunHooks hooks;
  if (!quiet) {
    hooks.on_metrics = [tag](const train::MetricsRow& m) {
      std::fprintf(stderr, "[%s] steps=%llu episodes=%llu loss=%.5g return=%.4f eps=%.3f gamma=[%s]\n",
                   tag.c_str(), static_cast<unsigned long long>(m.env_steps),
                   static_cast<unsigned long long>(m.episodes), m.loss, m.mean_return, m.epsilon,
                   join_gammas(m.gammas).c_str());
    };
  }
  return hooks;
}

struct Outcome {
  train::RunResult result;
  eval::EvalSummary final_eval;
};

Outcome train_and_evaluate(const TrainConfig& cfg, bool quiet) {
  const std::string tag = cfg.scenario.name + "/" + std::string(to_string(cfg.method)) + "/s" +
                          std::to_string(cfg.seed);
  Outcome o{train::run(cfg, progress_hooks(quiet, tag)), {}};
  o.final_eval = eval::evaluate(o.result.learner, cfg.scenario, cfg.eval_episodes,
                                train::derive_seed(cfg.seed, kFinalEvalStream));
  return o;
}

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg = load_train_config(a.config);
  if (!a.method.empty()) cfg.method = method_from_string(a.method);
  if (a.seed) cfg.seed = *a.seed;
  if (a.steps) cfg.step_max = *a.steps;
  cfg.validate();
  const fs::path fallback = fs::path("runs") / (cfg.scenario.name + "_" + std::string(to_string(cfg.method)) +
                                               "_s" + std::to_string(cfg.seed));
  const fs::path out = eval::output_dir(a.out ? std::optional<fs::path>(*a.out) : std::nullopt, fallback);

  const Outcome o = train_and_evaluate(cfg, a.quiet);
  eval::emit_reports(eval::make_report(o.result, o.final_eval), out);
  write_text(out / "checkpoint.json", train::checkpoint_json(o.result).dump() + "\n");
  std::printf("trained %s on %s (seed %llu): %llu env steps, %llu episodes\n",
              std::string(to_string(cfg.method)).c_str(), cfg.scenario.name.c_str(),
              static_cast<unsigned long long>(cfg.seed), static_cast<unsigned long long>(o.result.env_steps),
              static_cast<unsigned long long>(o.result.episodes));
  std::printf("eval return %.4f +/- %.4f over %zu episodes\n", o.final_eval.mean_return,
              o.final_eval.ci_half_width, o.final_eval.returns.size());
  if (!o.final_eval.mean_gammas.empty()) std::printf("mean gamma [%s]\n", join_gammas(o.final_eval.mean_gammas).c_str());
  std::printf("reports in %s\n", out.string().c_str());
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  std::ifstream in(a.checkpoint);
  if (!in) throw ConfigError("cannot open checkpoint " + a.checkpoint);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  const train::Checkpoint cp = train::checkpoint_from_json(j);
  const eval::EvalSummary s = eval::evaluate(cp, a.episodes, a.seed);
  if (s.error) {
    std::fprintf(stderr, "error: %s\n", s.error->c_str());
    return 1;
  }
  std::printf("episode,return");
  for (std::size_t i = 0; i < s.agents; ++i) std::printf(",consumed_%zu", i);
  std::printf("\n");
  for (std::size_t e = 0; e < s.returns.size(); ++e) {
    std::printf("%zu,%.6f", e, s.returns[e]);
    for (double c : s.consumed[e]) std::printf(",%.4f", c);
    std::printf("\n");
  }
  std::printf("mean return %.4f +/- %.4f\n", s.mean_return, s.ci_half_width);
  if (!s.mean_gammas.empty()) std::printf("mean gamma [%s]\n", join_gammas(s.mean_gammas).c_str());
  if (a.out) {
    eval::RunReport r;
    r.method = std::string(to_string(cp.config.method));
    r.scenario = cp.config.scenario.name;
    r.seed = a.seed;
    r.agents = s.agents;
    r.final_eval = s;
    r.config = to_json(cp.config);
    eval::emit_reports(r, *a.out);
  }
  return 0;
}

int cmd_compare(const CompareArgs& a) {
  std::vector<Method> methods;
  for (const auto& m : a.methods) methods.push_back(method_from_string(m));
  std::vector<TrainConfig> configs;
  for (const auto& path : a.configs) {
    TrainConfig cfg = load_train_config(path);
    if (a.steps) cfg.step_max = *a.steps;
    cfg.validate();
    configs.push_back(cfg);
  }
  const fs::path out = eval::output_dir(a.out ? std::optional<fs::path>(*a.out) : std::nullopt, "runs/compare");
  fs::create_directories(out);

  std::ostringstream runs;
  runs << "scenario,method,seed,mean_return,ci_half_width";
  std::size_t max_agents = 0;
  for (const auto& c : configs) max_agents = std::max(max_agents, static_cast<std::size_t>(c.scenario.agent_count));
  for (std::size_t i = 0; i < max_agents; ++i) runs << ",gamma_" << i;
  runs << '\n';

  // scenario -> method -> per-seed return
  std::map<std::string, std::map<std::string, std::vector<double>>> table;
  std::vector<std::string> scenario_order;
  for (const auto& base : configs) {
    scenario_order.push_back(base.scenario.name);
    for (Method m : methods) {
      for (std::size_t s = 0; s < a.seeds; ++s) {
        TrainConfig cfg = base;
        cfg.method = m;
        cfg.seed = s;
        const Outcome o = train_and_evaluate(cfg, a.quiet);
        const std::string name(to_string(m));
        const fs::path run_dir = out / (cfg.scenario.name + "_" + name + "_s" + std::to_string(s));
        eval::emit_reports(eval::make_report(o.result, o.final_eval), run_dir);
        table[cfg.scenario.name][name].push_back(o.final_eval.mean_return);
        runs << cfg.scenario.name << ',' << name << ',' << s << ',' << eval::format_double(o.final_eval.mean_return)
             << ',' << eval::format_double(o.final_eval.ci_half_width);
        for (std::size_t i = 0; i < max_agents; ++i) {
          runs << ',';
          if (i < o.final_eval.mean_gammas.size()) runs << eval::format_double(o.final_eval.mean_gammas[i]);
        }
        runs << '\n';
        std::fprintf(stderr, "done %s %s seed %zu: return %.4f\n", cfg.scenario.name.c_str(), name.c_str(), s,
                     o.final_eval.mean_return);
      }
    }
  }
  write_text(out / "compare_runs.csv", runs.str());

  // Side-by-side ranking: mean over seeds, CI across seeds, seeds beating qmix.
  std::ostringstream rank;
  rank << "scenario,method,mean_return,ci_half_width,rank,seeds_at_least_qmix\n";
  std::printf("%-14s %-9s %10s %10s %5s %8s\n", "scenario", "method", "return", "ci95", "rank", ">=qmix");
  for (const auto& sc : scenario_order) {
    const auto& by_method = table[sc];
    std::vector<std::pair<double, std::string>> order;
    for (const auto& [name, vals] : by_method) order.emplace_back(eval::mean(vals), name);
    std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    const auto qmix_it = by_method.find("qmix");
    for (std::size_t r = 0; r < order.size(); ++r) {
      const auto& vals = by_method.at(order[r].second);
      std::string wins;
      if (qmix_it != by_method.end()) {
        std::size_t w = 0;
        for (std::size_t s = 0; s < vals.size() && s < qmix_it->second.size(); ++s) w += vals[s] >= qmix_it->second[s];
        wins = std::to_string(w);
      }
      const double ci = eval::ci95_half_width(vals);
      rank << sc << ',' << order[r].second << ',' << eval::format_double(order[r].first) << ','
           << eval::format_double(ci) << ',' << r + 1 << ',' << wins << '\n';
      std::printf("%-14s %-9s %10.4f %10.4f %5zu %8s\n", sc.c_str(), order[r].second.c_str(), order[r].first, ci,
                  r + 1, wins.c_str());
    }
  }
  write_text(out / "ranking.csv", rank.str());
  std::printf("tables in %s\n", out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  dsdf::tune_allocator();
  CLI::App app{"Per-agent discount factor workbench for cooperative multi-agent Q-learning"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train one method on one scenario config");
  train_cmd->add_option("--config", ta.config, "Training config (JSON)")->required();
  train_cmd->add_option("--method", ta.method, "dsdf | penalize | qmix | iql (overrides config)");
  train_cmd->add_option("--seed", ta.seed, "Master seed (overrides config)");
  train_cmd->add_option("--steps", ta.steps, "Environment steps (overrides config)");
  train_cmd->add_option("--out", ta.out, "Output directory");
  train_cmd->add_flag("--quiet", ta.quiet, "No progress lines");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "checkpoint.json written by train")->required();
  eval_cmd->add_option("--episodes", ea.episodes, "Evaluation episodes")->capture_default_str();
  eval_cmd->add_option("--seed", ea.seed, "Evaluation seed")->capture_default_str();
  eval_cmd->add_option("--out", ea.out, "Write report files here");

  CompareArgs ca;
  auto* compare_cmd = app.add_subcommand("compare", "Run every method on shared seeds and rank them");
  compare_cmd->add_option("--configs", ca.configs, "Training configs")->required();
  compare_cmd->add_option("--seeds", ca.seeds, "Seeds 0..n-1")->capture_default_str();
  compare_cmd->add_option("--methods", ca.methods, "Methods to compare")->delimiter(',');
  compare_cmd->add_option("--steps", ca.steps, "Environment steps (overrides configs)");
  compare_cmd->add_option("--out", ca.out, "Output directory");
  compare_cmd->add_flag("--quiet", ca.quiet, "No progress lines");

  auto* selftest_cmd = app.add_subcommand("selftest", "Run the quick invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageExit;
  }

  try {
    if (*train_cmd) return cmd_train(ta);
    if (*eval_cmd) return cmd_eval(ea);
    if (*compare_cmd) return cmd_compare(ca);
    if (*selftest_cmd) return selftest::report(selftest::run_all(), std::cout) ? 0 : 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsageExit;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsageExit;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kUsageExit;
}
