#include "mlagent/config.hpp"

#include <cmath>
#include <set>

#include <fmt/format.h>

#include "mlagent/csv.hpp"
#include "mlagent/errors.hpp"

namespace fs = std::filesystem;

namespace mlagent {

std::string_view to_string(ClockMode m) {
  switch (m) {
    case ClockMode::Wall: return "wall";
    case ClockMode::Simulated: return "simulated";
    case ClockMode::Loop: return "loop";
  }
  return "unknown";
}

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Synthetic: return "synthetic";
    case BackendKind::Scripted: return "scripted";
    case BackendKind::Http: return "http";
  }
  return "unknown";
}

double parse_duration(const std::string& text) {
  if (text.empty()) throw ConfigError("empty duration");
  double total = 0.0;
  std::size_t i = 0;
  bool any = false;
  while (i < text.size()) {
    std::size_t j = i;
    while (j < text.size() && (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '.')) ++j;
    if (j == i) throw ConfigError(fmt::format("bad duration '{}'", text));
    const double v = std::stod(text.substr(i, j - i));
    double unit = 1.0;
    if (j < text.size()) {
      switch (text[j]) {
        case 's': unit = 1.0; break;
        case 'm': unit = 60.0; break;
        case 'h': unit = 3600.0; break;
        case 'd': unit = 86400.0; break;
        default: throw ConfigError(fmt::format("bad duration unit in '{}'", text));
      }
      ++j;
    } else if (any) {
      throw ConfigError(fmt::format("bad duration '{}'", text));
    }
    total += v * unit;
    any = true;
    i = j;
  }
  if (!(total > 0.0) || !std::isfinite(total)) throw ConfigError(fmt::format("duration '{}' must be positive", text));
  return total;
}

void RunConfig::validate() const {
  if (!(budget_s > 0.0)) throw ConfigError("budget must be positive");
  if (branch_count < 1) throw ConfigError("branch_count must be >= 1");
  if (worker_count < 1) throw ConfigError("worker_count must be >= 1");
  if (hypotheses_per_loop < 1) throw ConfigError("hypotheses_per_loop must be >= 1");
  if (max_loops < 0) throw ConfigError("max_loops must be >= 0");
  if (!(loop_tick_s > 0.0)) throw ConfigError("loop_tick_s must be positive");
  if (dev.max_debug_attempts < 1) throw ConfigError("max_debug_attempts must be >= 1");
  if (!(dev.safety_factor > 0.0 && dev.safety_factor <= 1.0)) throw ConfigError("safety_factor must lie in (0, 1]");
  if (!(eval.train_fraction > 0.0 && eval.train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (eval.candidate_limit < 1) throw ConfigError("candidate_limit must be >= 1");
  if (!(prune.margin >= 0.0) || prune.patience < 1) throw ConfigError("invalid pruning settings");
  if (!(planner.debug_sample_fraction > 0.0 && planner.debug_sample_fraction <= 1.0)) {
    throw ConfigError("debug_sample_fraction must lie in (0, 1]");
  }
  try {
    kernel.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (backend.kind == BackendKind::Scripted && !backend.fixtures_dir) {
    throw ConfigError("the scripted backend needs backend.fixtures_dir");
  }
}

json config_to_json(const RunConfig& c) {
  auto opt_path = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
  return json{
      {"run",
       {{"budget_s", c.budget_s},
        {"branch_count", c.branch_count},
        {"worker_count", c.worker_count},
        {"seed", c.seed},
        {"hypotheses_per_loop", c.hypotheses_per_loop},
        {"max_loops", c.max_loops},
        {"collaborative", c.collaborative},
        {"backend_selection", c.backend_selection},
        {"clock", to_string(c.clock)},
        {"loop_tick_s", c.loop_tick_s},
        {"round_overhead_s", c.round_overhead_s},
        {"runs_dir", c.runs_dir.string()},
        {"run_name", c.run_name ? json(*c.run_name) : json(nullptr)},
        {"prompts_dir", opt_path(c.prompts_dir)},
        {"crash_after_loops", c.crash_after_loops}}},
      {"planner",
       {{"draft_max_s", c.planner.draft_max_s},
        {"draft_fraction", c.planner.draft_fraction},
        {"draft_branches", c.planner.draft_branches},
        {"merge_fraction", c.planner.merge_fraction},
        {"heavy_fraction", c.planner.heavy_fraction},
        {"novelty_horizon_fraction", c.planner.novelty_horizon_fraction},
        {"execution_cap_s", c.planner.execution_cap_s},
        {"debug_sample_fraction", c.planner.debug_sample_fraction}}},
      {"memory",
       {{"alpha", c.kernel.alpha},
        {"beta", c.kernel.beta},
        {"gamma", c.kernel.gamma},
        {"sample_count", c.kernel.sample_count},
        {"current_count", c.kernel.current_count}}},
      {"dev",
       {{"max_debug_attempts", c.dev.max_debug_attempts},
        {"safety_factor", c.dev.safety_factor},
        {"entry_file", c.dev.entry_file},
        {"debug_flag", c.dev.debug_flag}}},
      {"eval",
       {{"candidate_limit", c.eval.candidate_limit},
        {"rerun", c.eval.rerun},
        {"train_fraction", c.eval.train_fraction},
        {"grader_command", c.eval.grader_command ? json(*c.eval.grader_command) : json(nullptr)}}},
      {"prune", {{"enabled", c.prune.enabled}, {"margin", c.prune.margin}, {"patience", c.prune.patience}}},
      {"backend",
       {{"kind", to_string(c.backend.kind)},
        {"fixtures_dir", opt_path(c.backend.fixtures_dir)},
        {"research_temperature", c.backend.defaults.research_temperature},
        {"development_temperature", c.backend.defaults.development_temperature},
        {"max_tokens", c.backend.defaults.max_tokens},
        {"http_embeddings", c.backend.http_embeddings},
        {"base_url", c.backend.http.base_url},
        {"api_key_env", c.backend.http.api_key_env},
        {"research_model", c.backend.http.research_model},
        {"development_model", c.backend.http.development_model},
        {"embedding_model", c.backend.http.embedding_model},
        {"embedding_dimension", c.backend.http.embedding_dimension},
        {"send_temperature", c.backend.http.send_temperature},
        {"max_retries", c.backend.http.max_retries},
        {"timeout_s", c.backend.http.timeout_s},
        {"backoff_initial_s", c.backend.http.backoff_initial_s},
        {"backoff_multiplier", c.backend.http.backoff_multiplier},
        {"backoff_max_s", c.backend.http.backoff_max_s}}}};
}

namespace {

// Reads the keys of one section, rejecting any it does not know.
class Section {
 public:
  Section(const json& root, const char* name) : name_(name) {
    if (root.contains(name)) {
      j_ = &root.at(name);
      if (!j_->is_object()) throw ConfigError(fmt::format("section '{}' must be an object", name));
    }
  }
  ~Section() noexcept(false) {
    if (!j_ || std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_->items()) {
      if (!seen_.count(k)) throw ConfigError(fmt::format("unknown key '{}.{}'", name_, k));
    }
  }

  template <typename T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_ || !j_->contains(key) || j_->at(key).is_null()) return;
    try {
      j_->at(key).get_to(dst);
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("'{}.{}': {}", name_, key, e.what()));
    }
  }
  void get_duration(const char* key, double& dst) {
    seen_.insert(key);
    if (!j_ || !j_->contains(key) || j_->at(key).is_null()) return;
    const json& v = j_->at(key);
    if (v.is_number()) {
      dst = v.get<double>();
    } else if (v.is_string()) {
      dst = parse_duration(v.get<std::string>());
    } else {
      throw ConfigError(fmt::format("'{}.{}' must be seconds or a duration", name_, key));
    }
  }
  template <typename T>
  void get_optional(const char* key, std::optional<T>& dst) {
    seen_.insert(key);
    if (!j_ || !j_->contains(key)) return;
    if (j_->at(key).is_null()) {
      dst.reset();
      return;
    }
    try {
      dst = j_->at(key).get<std::string>();
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("'{}.{}': {}", name_, key, e.what()));
    }
  }

 private:
  const char* name_;
  const json* j_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  static const std::set<std::string> sections{"run", "planner", "memory", "dev", "eval", "prune", "backend"};
  for (const auto& [k, v] : j.items()) {
    if (!sections.count(k)) throw ConfigError(fmt::format("unknown section '{}'", k));
  }
  RunConfig c;
  {
    Section s(j, "run");
    s.get_duration("budget_s", c.budget_s);
    s.get("branch_count", c.branch_count);
    s.get("worker_count", c.worker_count);
    s.get("seed", c.seed);
    s.get("hypotheses_per_loop", c.hypotheses_per_loop);
    s.get("max_loops", c.max_loops);
    s.get("collaborative", c.collaborative);
    s.get("backend_selection", c.backend_selection);
    std::string clock(to_string(c.clock));
    s.get("clock", clock);
    if (clock == "wall") {
      c.clock = ClockMode::Wall;
    } else if (clock == "simulated") {
      c.clock = ClockMode::Simulated;
    } else if (clock == "loop") {
      c.clock = ClockMode::Loop;
    } else {
      throw ConfigError(fmt::format("unknown clock '{}'", clock));
    }
    s.get("loop_tick_s", c.loop_tick_s);
    s.get("round_overhead_s", c.round_overhead_s);
    std::string runs_dir = c.runs_dir.string();
    s.get("runs_dir", runs_dir);
    c.runs_dir = runs_dir;
    s.get_optional("run_name", c.run_name);
    std::optional<std::string> prompts;
    s.get_optional("prompts_dir", prompts);
    if (prompts) c.prompts_dir = *prompts;
    s.get("crash_after_loops", c.crash_after_loops);
  }
  {
    Section s(j, "planner");
    s.get_duration("draft_max_s", c.planner.draft_max_s);
    s.get("draft_fraction", c.planner.draft_fraction);
    s.get("draft_branches", c.planner.draft_branches);
    s.get("merge_fraction", c.planner.merge_fraction);
    s.get("heavy_fraction", c.planner.heavy_fraction);
    s.get("novelty_horizon_fraction", c.planner.novelty_horizon_fraction);
    s.get_duration("execution_cap_s", c.planner.execution_cap_s);
    s.get("debug_sample_fraction", c.planner.debug_sample_fraction);
  }
  {
    Section s(j, "memory");
    s.get("alpha", c.kernel.alpha);
    s.get("beta", c.kernel.beta);
    s.get("gamma", c.kernel.gamma);
    s.get("sample_count", c.kernel.sample_count);
    s.get("current_count", c.kernel.current_count);
  }
  {
    Section s(j, "dev");
    s.get("max_debug_attempts", c.dev.max_debug_attempts);
    s.get("safety_factor", c.dev.safety_factor);
    s.get("entry_file", c.dev.entry_file);
    s.get("debug_flag", c.dev.debug_flag);
  }
  {
    Section s(j, "eval");
    s.get("candidate_limit", c.eval.candidate_limit);
    s.get("rerun", c.eval.rerun);
    s.get("train_fraction", c.eval.train_fraction);
    s.get_optional("grader_command", c.eval.grader_command);
  }
  {
    Section s(j, "prune");
    s.get("enabled", c.prune.enabled);
    s.get("margin", c.prune.margin);
    s.get("patience", c.prune.patience);
  }
  {
    Section s(j, "backend");
    std::string kind(to_string(c.backend.kind));
    s.get("kind", kind);
    if (kind == "synthetic") {
      c.backend.kind = BackendKind::Synthetic;
    } else if (kind == "scripted") {
      c.backend.kind = BackendKind::Scripted;
    } else if (kind == "http") {
      c.backend.kind = BackendKind::Http;
    } else {
      throw ConfigError(fmt::format("unknown backend kind '{}'", kind));
    }
    std::optional<std::string> fixtures;
    s.get_optional("fixtures_dir", fixtures);
    if (fixtures) c.backend.fixtures_dir = *fixtures;
    s.get("research_temperature", c.backend.defaults.research_temperature);
    s.get("development_temperature", c.backend.defaults.development_temperature);
    s.get("max_tokens", c.backend.defaults.max_tokens);
    s.get("http_embeddings", c.backend.http_embeddings);
    s.get("base_url", c.backend.http.base_url);
    s.get("api_key_env", c.backend.http.api_key_env);
    s.get("research_model", c.backend.http.research_model);
    s.get("development_model", c.backend.http.development_model);
    s.get("embedding_model", c.backend.http.embedding_model);
    s.get("embedding_dimension", c.backend.http.embedding_dimension);
    s.get("send_temperature", c.backend.http.send_temperature);
    s.get("max_retries", c.backend.http.max_retries);
    s.get("timeout_s", c.backend.http.timeout_s);
    s.get("backoff_initial_s", c.backend.http.backoff_initial_s);
    s.get("backoff_multiplier", c.backend.http.backoff_multiplier);
    s.get("backoff_max_s", c.backend.http.backoff_max_s);
  }
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::string raw;
  try {
    raw = read_file(path);
  } catch (const SourceMissing& e) {
    throw ConfigError(e.what());
  }
  json j;
  try {
    j = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return config_from_json(j);
}

}  // namespace mlagent
