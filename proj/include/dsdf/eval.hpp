#pragma once
// Greedy evaluation with the actuator still active, confidence intervals and
// plot-ready report files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsdf/trainer.hpp"
#include "json.hpp"

namespace dsdf::eval {

struct EvalSummary {
  std::size_t agents = 0;
  std::vector<std::vector<double>> consumed;  // episode x agent
  std::vector<double> targets;
  std::vector<double> returns;                // already normalised by T
  std::vector<std::vector<std::uint64_t>> mismatches;
  std::vector<std::vector<bool>> attained;    // consumed >= target
  double mean_return = 0.0;
  double ci_half_width = 0.0;
  std::vector<double> mean_gammas;  // per agent over every evaluated transition (dsdf/penalize)
  std::optional<std::string> error;
};

// 1.96 * sample standard deviation / sqrt(n); 0 for n < 2.
double ci95_half_width(std::span<const double> values);
double mean(std::span<const double> values);

// The learner is never modified. Throws ConfigError if its dimensions do not
// fit the scenario.
EvalSummary evaluate(const train::Learner& learner, const Scenario& scenario, std::size_t episodes,
                     std::uint64_t seed);
EvalSummary evaluate(const train::Checkpoint& checkpoint, std::size_t episodes, std::uint64_t seed);

struct RunReport {
  std::string method;
  std::string scenario;
  std::uint64_t seed = 0;
  std::size_t agents = 0;
  std::vector<train::EpisodeStats> recent_training;
  EvalSummary final_eval;
  std::vector<train::GammaLogRow> gamma_log;
  std::vector<train::MetricsRow> metrics;
  std::vector<train::EvalPoint> eval_points;
  std::uint64_t env_steps = 0;
  nlohmann::json config = nlohmann::json::object();
};

RunReport make_report(const train::RunResult& result, const EvalSummary& final_eval);

// Writes metrics.csv, gamma_trajectory.csv, returns.csv, agents_consumption.csv
// and manifest.json. Throws IoError if the directory cannot be written.
void emit_reports(const RunReport& report, const std::filesystem::path& out_dir);

std::string metrics_csv(std::span<const train::MetricsRow> rows, std::size_t agents);
std::string gamma_csv(std::span<const train::GammaLogRow> rows, std::size_t agents);
std::string returns_csv(const RunReport& report);
std::string consumption_csv(const RunReport& report);

// DSDF_OUT_DIR overrides the fallback when set and non-empty.
std::filesystem::path output_dir(const std::optional<std::filesystem::path>& requested,
                                 const std::filesystem::path& fallback);

std::string format_double(double v);

inline constexpr const char* kCodeVersion = "1.0.0";
inline constexpr int kReportSchemaVersion = 1;

}  // namespace dsdf::eval
