#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mlagent/backend.hpp"
#include "mlagent/csv.hpp"
#include "mlagent/executor.hpp"
#include "mlagent/json_io.hpp"
#include "mlagent/landscape.hpp"

namespace mlagent {

/// Offline stand-in for a real competition: a planted-rule classification
/// dataset whose achievable accuracy is governed by a landscape over solution
/// parameters. Solutions are directives, not programs.
struct SyntheticTaskConfig {
  LandscapeConfig landscape;
  int rows = 2000;
  int features = 5;
  double label_noise = 0.10;
  double base_cost_s = 2.0;          // full-run cost (seconds) before per-solution jitter
  double debug_cost_fraction = 0.10;
  double estimate_noise = 0.10;      // relative error of the debug-leg runtime estimate
  double time_scale = 0.0;           // real seconds slept per reported second (0 = no sleep)
  double bug_rate = 0.25;            // chance that a first draft crashes in debug
  double intuition_noise = 0.05;     // noise in the backend's read of a hypothesis' gain
  double follow_probability = 0.6;   // chance of adopting a prioritized shared candidate
  double step_scale = 0.45;          // proposal spread at full novelty
  double step_floor = 0.06;          // proposal spread at zero novelty
  std::uint64_t seed = 0;
};

void to_json(json& j, const SyntheticTaskConfig& c);
void from_json(const json& j, SyntheticTaskConfig& c);

/// Writes train.csv, task.json and description.md for a synthetic task.
void write_synthetic_task(const std::filesystem::path& dir, const SyntheticTaskConfig& config);

/// "params=[a, b, ...]" marker carried in hypothesis texts.
std::string params_marker(const std::vector<double>& params);
std::optional<std::vector<double>> parse_params_marker(std::string_view text);
/// "delta=[a, b, ...]" marker: a hypothesis is a shift applied to its parent's
/// configuration (the default configuration, all zeros, for a new root).
std::string delta_marker(const std::vector<double>& delta);
std::optional<std::vector<double>> parse_delta_marker(std::string_view text);

struct SolutionDirective {
  std::vector<double> params;
  double cost_s = 1.0;
  std::string bug = "none";
};

std::string render_directive(const SolutionDirective& d);
std::optional<SolutionDirective> parse_directive(std::string_view code);

/// Planted labelling rule shared by the generator and the executor.
class PlantedRule {
 public:
  PlantedRule(int features, std::uint64_t seed);
  int predict(const std::vector<double>& x) const;

 private:
  std::vector<double> weights_;
  double bias_ = 0.0;
};

/// Executes directives: predictions follow the planted rule, each flipped with
/// probability (1 - q) / 2 where q is the landscape score of the parameters.
class SyntheticExecutor final : public Executor {
 public:
  explicit SyntheticExecutor(SyntheticTaskConfig config);
  ExecOutcome execute(const ExecRequest& request) override;

  const Landscape& landscape() const { return landscape_; }
  const SyntheticTaskConfig& config() const { return config_; }

 private:
  std::shared_ptr<const CsvTable> load(const std::filesystem::path& path);

  SyntheticTaskConfig config_;
  Landscape landscape_;
  PlantedRule rule_;
  std::mutex cache_mutex_;
  std::map<std::string, std::shared_ptr<const CsvTable>> cache_;
};

/// Prompt backend for synthetic tasks. Reads the rendered prompts and answers
/// every step in the expected contract; randomness derives from the request's
/// idempotency key, so replays are exact.
class SyntheticBackend final : public PromptBackend {
 public:
  explicit SyntheticBackend(SyntheticTaskConfig config);
  PromptResponse complete(const PromptRequest& request) override;
  std::string id() const override { return "synthetic"; }

 private:
  std::string answer(const PromptRequest& request);
  std::string generate(const std::string& prompt, std::uint64_t seed) const;
  std::string select(const std::string& prompt, std::uint64_t seed) const;
  std::string draft(const std::string& prompt, std::uint64_t seed) const;
  std::string revise(const std::string& prompt) const;
  std::string choose_sota(const std::string& prompt) const;

  SyntheticTaskConfig config_;
  Landscape landscape_;
};

/// Landscape score of the parameters a solution directive carries.
std::optional<double> solution_quality(const Landscape& landscape, std::string_view code);

}  // namespace mlagent
