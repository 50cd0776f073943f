#include "mlagent/synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <regex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "mlagent/debug_block.hpp"
#include "mlagent/errors.hpp"
#include "mlagent/reasoning.hpp"
#include "mlagent/rng.hpp"
#include "mlagent/structured_response.hpp"

namespace fs = std::filesystem;

namespace mlagent {

void to_json(json& j, const SyntheticTaskConfig& c) {
  j = json{{"dimension", c.landscape.dimension},
           {"bump_count", c.landscape.bump_count},
           {"max_value", c.landscape.max_value},
           {"optimum_width", c.landscape.optimum_width},
           {"distractor_width_min", c.landscape.distractor_width_min},
           {"distractor_width_max", c.landscape.distractor_width_max},
           {"distractor_height_min", c.landscape.distractor_height_min},
           {"distractor_height_max", c.landscape.distractor_height_max},
           {"valley_width", c.landscape.valley_width},
           {"landscape_seed", c.landscape.seed},
           {"rows", c.rows},
           {"features", c.features},
           {"label_noise", c.label_noise},
           {"base_cost_s", c.base_cost_s},
           {"debug_cost_fraction", c.debug_cost_fraction},
           {"estimate_noise", c.estimate_noise},
           {"time_scale", c.time_scale},
           {"bug_rate", c.bug_rate},
           {"intuition_noise", c.intuition_noise},
           {"follow_probability", c.follow_probability},
           {"step_scale", c.step_scale},
           {"step_floor", c.step_floor},
           {"seed", c.seed}};
}

void from_json(const json& j, SyntheticTaskConfig& c) {
  auto get = [&j](const char* key, auto& dst) {
    if (j.contains(key)) j.at(key).get_to(dst);
  };
  get("dimension", c.landscape.dimension);
  get("bump_count", c.landscape.bump_count);
  get("max_value", c.landscape.max_value);
  get("optimum_width", c.landscape.optimum_width);
  get("distractor_width_min", c.landscape.distractor_width_min);
  get("distractor_width_max", c.landscape.distractor_width_max);
  get("distractor_height_min", c.landscape.distractor_height_min);
  get("distractor_height_max", c.landscape.distractor_height_max);
  get("valley_width", c.landscape.valley_width);
  get("landscape_seed", c.landscape.seed);
  get("rows", c.rows);
  get("features", c.features);
  get("label_noise", c.label_noise);
  get("base_cost_s", c.base_cost_s);
  get("debug_cost_fraction", c.debug_cost_fraction);
  get("estimate_noise", c.estimate_noise);
  get("time_scale", c.time_scale);
  get("bug_rate", c.bug_rate);
  get("intuition_noise", c.intuition_noise);
  get("follow_probability", c.follow_probability);
  get("step_scale", c.step_scale);
  get("step_floor", c.step_floor);
  get("seed", c.seed);
}

PlantedRule::PlantedRule(int features, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {fnv1a("planted-rule")}));
  for (int i = 0; i < features; ++i) weights_.push_back(rng.normal());
  bias_ = 0.1 * rng.normal();
}

int PlantedRule::predict(const std::vector<double>& x) const {
  double s = bias_;
  for (std::size_t i = 0; i < weights_.size() && i < x.size(); ++i) s += weights_[i] * x[i];
  return s > 0.0 ? 1 : 0;
}

void write_synthetic_task(const fs::path& dir, const SyntheticTaskConfig& config) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw WriteFailure("cannot create " + dir.string());
  const PlantedRule rule(config.features, config.seed);
  Rng rng(derive_seed(config.seed, {fnv1a("synthetic-data")}));
  CsvTable t;
  t.header.push_back("id");
  for (int f = 0; f < config.features; ++f) t.header.push_back(fmt::format("f{}", f));
  t.header.push_back("label");
  for (int i = 0; i < config.rows; ++i) {
    std::vector<double> x(static_cast<std::size_t>(config.features));
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    int label = rule.predict(x);
    if (rng.uniform() < config.label_noise) label = 1 - label;
    std::vector<std::string> row{fmt::format("{}", i)};
    for (double v : x) row.push_back(fmt::format("{:.6f}", v));
    row.push_back(std::to_string(label));
    t.rows.push_back(std::move(row));
  }
  write_csv(dir / "train.csv", t);
  json task{{"Task Type", "Classification"},
            {"Data Type", "Tabular"},
            {"Brief Description", "Predict the binary label of each row from five numeric features."},
            {"Metric Name", "accuracy"},
            {"Metric Direction", true},
            {"Longer time limit required", false},
            {"id_column", "id"},
            {"target_column", "label"},
            {"data_file", "train.csv"},
            {"synthetic", config}};
  write_file(dir / "task.json", task.dump(2) + "\n");
  write_file(dir / "description.md",
             "# Synthetic tabular classification\n\nEach row has five numeric features and a binary label. "
             "Submissions list an id and a predicted label for every test row; the score is accuracy.\n");
}

namespace {

std::string vector_marker(std::string_view name, const std::vector<double>& values) {
  std::vector<std::string> parts;
  for (double v : values) parts.push_back(fmt::format("{:.6f}", v));
  return fmt::format("{}=[{}]", name, fmt::join(parts, ", "));
}

std::optional<std::vector<double>> parse_vector_marker(std::string_view text, std::string_view name) {
  const std::string key = std::string(name) + "=[";
  const auto open = text.find(key);
  if (open == std::string_view::npos) return std::nullopt;
  const auto close = text.find(']', open);
  if (close == std::string_view::npos) return std::nullopt;
  std::vector<double> out;
  std::string_view body = text.substr(open + key.size(), close - open - key.size());
  while (!body.empty()) {
    const auto comma = body.find(',');
    auto v = parse_real(body.substr(0, comma));
    if (!v) return std::nullopt;
    out.push_back(*v);
    if (comma == std::string_view::npos) break;
    body.remove_prefix(comma + 1);
  }
  if (out.empty()) return std::nullopt;
  return out;
}

}  // namespace

std::string params_marker(const std::vector<double>& params) { return vector_marker("params", params); }
std::optional<std::vector<double>> parse_params_marker(std::string_view text) {
  return parse_vector_marker(text, "params");
}
std::string delta_marker(const std::vector<double>& delta) { return vector_marker("delta", delta); }
std::optional<std::vector<double>> parse_delta_marker(std::string_view text) {
  return parse_vector_marker(text, "delta");
}

std::string render_directive(const SolutionDirective& d) {
  std::vector<std::string> parts;
  for (double p : d.params) parts.push_back(fmt::format("{:.6f}", p));
  return fmt::format("# synthetic-solution v1\n# params: {}\n# cost: {:.4f}\n# bug: {}\n", fmt::join(parts, ", "),
                     d.cost_s, d.bug);
}

std::optional<SolutionDirective> parse_directive(std::string_view code) {
  if (code.find("# synthetic-solution v1") == std::string_view::npos) return std::nullopt;
  SolutionDirective d;
  bool have_params = false;
  std::istringstream in{std::string(code)};
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.rfind("# params:", 0) == 0) {
      auto v = parse_params_marker("params=[" + t.substr(9) + "]");
      if (!v) return std::nullopt;
      d.params = *v;
      have_params = true;
    } else if (t.rfind("# cost:", 0) == 0) {
      auto v = parse_real(t.substr(7));
      if (!v || *v <= 0.0) return std::nullopt;
      d.cost_s = *v;
    } else if (t.rfind("# bug:", 0) == 0) {
      d.bug = trim(t.substr(6));
    }
  }
  if (!have_params) return std::nullopt;
  return d;
}

std::optional<double> solution_quality(const Landscape& landscape, std::string_view code) {
  auto d = parse_directive(code);
  if (!d || d->params.size() != static_cast<std::size_t>(landscape.dimension())) return std::nullopt;
  return landscape.score(d->params);
}

namespace {

double unit_hash(std::uint64_t a, std::uint64_t b) {
  return static_cast<double>(mix64(a ^ mix64(b)) >> 11) * 0x1.0p-53;
}

double clamp_param(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

// ---- executor -----------------------------------------------------------------

SyntheticExecutor::SyntheticExecutor(SyntheticTaskConfig config)
    : config_(std::move(config)), landscape_(config_.landscape), rule_(config_.features, config_.seed) {}

std::shared_ptr<const CsvTable> SyntheticExecutor::load(const fs::path& path) {
  std::error_code ec;
  const std::string key = fs::canonical(path, ec).string();
  if (ec) throw SourceMissing("cannot read " + path.string());
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  auto table = std::make_shared<const CsvTable>(read_csv(key));
  std::lock_guard lock(cache_mutex_);
  return cache_.emplace(key, std::move(table)).first->second;
}

ExecOutcome SyntheticExecutor::execute(const ExecRequest& request) {
  ExecOutcome out;
  const fs::path entry = request.workdir / "main.py";
  std::string code;
  try {
    code = read_file(entry);
  } catch (const SourceMissing&) {
    out.exit_code = 2;
    out.stderr_tail = "python3: can't open file 'main.py': [Errno 2] No such file or directory\n";
    return out;
  }
  const auto directive = parse_directive(code);
  if (!directive || directive->params.size() != static_cast<std::size_t>(landscape_.dimension())) {
    out.exit_code = 1;
    out.stderr_tail = "Traceback (most recent call last):\n  File \"main.py\", line 1\nSyntaxError: not a valid "
                      "solution directive\n";
    return out;
  }
  const std::uint64_t salt = fnv1a(code);
  const double cost = directive->cost_s;
  const double reported = request.debug ? cost * config_.debug_cost_fraction : cost;
  out.wall_time_s = reported;
  if (reported > request.timeout_s) {
    out.timed_out = true;
    out.wall_time_s = request.timeout_s;
    if (config_.time_scale > 0.0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(request.timeout_s * config_.time_scale));
    }
    out.stdout_tail = "loading data...\n";
    return out;
  }
  if (config_.time_scale > 0.0) {
    std::this_thread::sleep_for(std::chrono::duration<double>(reported * config_.time_scale));
  }
  if (directive->bug != "none") {
    out.exit_code = 1;
    out.stdout_tail = "loading data...\n";
    out.stderr_tail = fmt::format(
        "Traceback (most recent call last):\n  File \"main.py\", line 42, in <module>\n    train(df)\n{}\n",
        directive->bug);
    return out;
  }

  const double q = landscape_.score(directive->params);
  const double flip = 0.5 * (1.0 - q);
  auto predict = [&](const std::vector<std::string>& row, std::size_t id_col, const std::vector<std::size_t>& cols) {
    std::vector<double> x;
    for (auto c : cols) x.push_back(parse_real(row[c]).value_or(0.0));
    int p = rule_.predict(x);
    if (unit_hash(salt, fnv1a(row[id_col])) < flip) p = 1 - p;
    return p;
  };

  std::string stdout_text = "loading data...\n";
  try {
    const auto train = load(request.workdir / "input" / "train.csv");
    const auto test = load(request.workdir / "input" / "test.csv");
    auto feature_cols = [](const CsvTable& t) {
      std::vector<std::size_t> cols;
      for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (t.header[i].size() > 1 && t.header[i][0] == 'f') cols.push_back(i);
      }
      return cols;
    };
    const auto tid = train->column("id"), tlabel = train->column("label"), sid = test->column("id");
    if (!tid || !tlabel || !sid) throw SourceMissing("expected id/label columns");
    const auto train_cols = feature_cols(*train), test_cols = feature_cols(*test);

    // Own validation split: every fifth id by hash.
    std::size_t seen = 0, correct = 0;
    for (const auto& row : train->rows) {
      if (mix64(fnv1a(row[*tid])) % 5 != 0) continue;
      ++seen;
      if (std::to_string(predict(row, *tid, train_cols)) == row[*tlabel]) ++correct;
    }
    CsvTable sub{{"id", "label"}, {}};
    for (const auto& row : test->rows) sub.rows.push_back({row[*sid], std::to_string(predict(row, *sid, test_cols))});
    fs::create_directories(request.workdir / "output");
    write_csv(request.workdir / "output" / "submission.csv", sub);
    const double val = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    stdout_text += fmt::format("validation_score: {:.6f}\n", val);
  } catch (const Error& e) {
    out.exit_code = 1;
    out.stdout_tail = stdout_text;
    out.stderr_tail = fmt::format("Traceback (most recent call last):\n  File \"main.py\", line 7\nOSError: {}\n",
                                  e.what());
    return out;
  }
  if (request.debug) {
    const double u1 = unit_hash(salt, fnv1a("debug-time"));
    const double u2 = unit_hash(salt, fnv1a("estimate"));
    const double debug_time = reported * (0.9 + 0.2 * u1);
    const double estimate = cost * (1.0 + config_.estimate_noise * (2.0 * u2 - 1.0));
    stdout_text += format_debug_block(debug_time, estimate);
  }
  out.exit_code = 0;
  out.stdout_tail = stdout_text;
  return out;
}

// ---- backend ------------------------------------------------------------------

SyntheticBackend::SyntheticBackend(SyntheticTaskConfig config)
    : config_(std::move(config)), landscape_(config_.landscape) {}

PromptResponse SyntheticBackend::complete(const PromptRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  PromptResponse r;
  r.text = answer(request);
  r.usage.prompt_tokens = static_cast<long>(request.rendered_prompt.size() / 4);
  r.usage.completion_tokens = static_cast<long>(r.text.size() / 4);
  r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  r.backend_id = id();
  return r;
}

std::string SyntheticBackend::answer(const PromptRequest& request) {
  const std::uint64_t seed = derive_seed(config_.seed, {fnv1a("backend"), fnv1a(request.idempotency_key)});
  const std::string& p = request.rendered_prompt;
  const std::string_view step = request.step_name;
  if (step == steps::kTaskAnalysis) {
    return json{{"Task Type", "Classification"},
                {"Data Type", "Tabular"},
                {"Brief Description", "Binary classification of synthetic tabular rows."},
                {"Metric Name", "accuracy"},
                {"Metric Direction", true},
                {"Longer time limit required", false}}
        .dump(2);
  }
  if (step == steps::kIdentifyProblems) {
    std::vector<KvRecord> recs;
    if (p.find("No solution exists yet") != std::string::npos) {
      recs.push_back({{"problem", "No baseline model exists for this task."}, {"category", "ImplementationRelated"}});
      recs.push_back({{"problem", "The useful region of the configuration space is unknown."},
                      {"category", "ModelRelated"}});
    } else {
      recs.push_back({{"problem", "The model configuration is not tuned around the best region found so far."},
                      {"category", "ModelRelated"}});
      recs.push_back({{"problem", "Validation estimates are noisy at this data size."}, {"category", "EvaluationRelated"}});
    }
    return render_kv_records(recs);
  }
  if (step == steps::kGenerateHypotheses) return generate(p, seed);
  if (step == steps::kSelectHypothesis) return select(p, seed);
  if (step == steps::kDraftSolution) return draft(p, seed);
  if (step == steps::kReviseSolution) return revise(p);
  if (step == steps::kSelectSota) return choose_sota(p);
  throw BackendError(fmt::format("synthetic backend has no answer for step '{}'", step));
}

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::optional<double> number_after(const std::string& text, const std::string& label) {
  const auto pos = text.find(label);
  if (pos == std::string::npos) return std::nullopt;
  std::size_t i = pos + label.size();
  std::size_t j = i;
  while (j < text.size() && (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '.' || text[j] == '-' ||
                             text[j] == '+' || text[j] == 'e')) {
    ++j;
  }
  return parse_real(text.substr(i, j - i));
}

struct ParentInfo {
  std::vector<double> params;
  std::optional<double> score;
};

std::vector<ParentInfo> parse_parents(const std::string& prompt) {
  std::vector<ParentInfo> out;
  for (const auto& line : lines_of(prompt)) {
    if (line.rfind("Parent node", 0) != 0) continue;
    // The parent's configuration is where its hypothesis led: origin plus shift.
    auto params = parse_params_marker(line);
    const auto delta = parse_delta_marker(line);
    if (!delta) continue;
    if (!params) params = std::vector<double>(delta->size(), 0.0);
    if (params->size() != delta->size()) continue;
    for (std::size_t i = 0; i < delta->size(); ++i) (*params)[i] = clamp_param((*params)[i] + (*delta)[i]);
    out.push_back({*params, number_after(line, "validation ")});
  }
  return out;
}

int to_score(double v) { return static_cast<int>(std::clamp(std::lround(v), 1L, 10L)); }

}  // namespace

std::string SyntheticBackend::generate(const std::string& prompt, std::uint64_t seed) const {
  Rng rng(seed);
  const double novelty = number_after(prompt, "explore new directions): ").value_or(1.0);
  const int count = static_cast<int>(number_after(prompt, "Propose up to ").value_or(3.0));
  const bool merge = prompt.find("Stage: Merge") != std::string::npos;
  const auto parents = parse_parents(prompt);
  const auto d = static_cast<std::size_t>(landscape_.dimension());

  // Merges start from the best-scoring parent and stay close to it.
  const ParentInfo* base = nullptr;
  for (const auto& p : parents) {
    if (p.params.size() != d) continue;
    if (!base || (p.score && (!base->score || *p.score > *base->score))) base = &p;
  }
  const double sigma = merge ? config_.step_floor : config_.step_floor + config_.step_scale * novelty;
  const double base_value = base ? landscape_.score(base->params) : 0.0;

  const std::vector<double> origin = base ? base->params : std::vector<double>(d, 0.0);
  std::vector<KvRecord> recs;
  for (int k = 0; k < std::max(1, count); ++k) {
    std::vector<double> target(d), delta(d);
    for (std::size_t i = 0; i < d; ++i) {
      target[i] = base ? clamp_param(base->params[i] + sigma * rng.normal()) : rng.uniform(-1.0, 1.0);
      delta[i] = target[i] - origin[i];
    }
    const double gain = landscape_.score(target) - base_value + config_.intuition_noise * rng.normal();
    const int impact = base ? to_score(5.5 + 20.0 * gain) : to_score(1.0 + 9.0 * gain);
    std::string text = base ? fmt::format("Retune the model configuration from {} by {}", params_marker(origin),
                                          delta_marker(delta))
                            : fmt::format("Baseline model: move the default configuration by {}", delta_marker(delta));
    if (merge) {
      text = fmt::format("Combine the strongest traces: move from {} by {}", params_marker(origin), delta_marker(delta));
    }
    recs.push_back({{"hypothesis", text},
                    {"component", k % 2 == 0 ? "Model" : "FeatureEng"},
                    {"problem", "1"},
                    {"alignment", std::to_string(to_score(6.0 + 2.0 * rng.uniform()))},
                    {"impact", std::to_string(impact)},
                    {"novelty", std::to_string(to_score(1.0 + 9.0 * novelty))},
                    {"feasibility", "7"},
                    {"risk_reward", std::to_string(to_score(4.0 + 3.0 * rng.uniform()))}});
  }
  return render_kv_records(recs);
}

std::string SyntheticBackend::select(const std::string& prompt, std::uint64_t seed) const {
  Rng rng(seed);
  struct Cand {
    int number;
    std::string origin;
    std::string text;
    int impact = 0;
    std::optional<double> observed;
  };
  static const std::regex head(R"(^(\d+)\. \[([a-z_]+); ([A-Za-z]+); ([^\]]*)\] (.*)$)");
  std::vector<Cand> cands;
  for (const auto& line : lines_of(prompt)) {
    std::smatch m;
    if (std::regex_match(line, m, head)) {
      cands.push_back({std::stoi(m[1]), m[2], m[5], 0, std::nullopt});
    } else if (!cands.empty() && line.find("scores:") != std::string::npos) {
      cands.back().impact = static_cast<int>(number_after(line, "impact=").value_or(0));
      const auto obs = line.find("observed ");
      if (obs != std::string::npos) {
        const auto eq = line.find('=', obs);
        if (eq != std::string::npos) cands.back().observed = parse_real(line.substr(eq + 1));
      }
    }
  }
  if (cands.empty()) return "```kv\naction: Select\ncandidate: 1\n```\n";

  const bool shared = prompt.find(directives::kPrioritizeShared) != std::string::npos;
  const bool merge = prompt.find("Stage: Merge") != std::string::npos;
  const Cand* best_current = nullptr;
  const Cand* best_shared = nullptr;
  for (const auto& c : cands) {
    if (c.origin == "current_branch") {
      if (!best_current || c.impact > best_current->impact) best_current = &c;
    } else if (c.observed) {
      if (!best_shared || *c.observed > *best_shared->observed) best_shared = &c;
    }
  }
  const bool follow = best_shared && (merge || (shared && rng.uniform() < config_.follow_probability));
  const auto dim = static_cast<std::size_t>(landscape_.dimension());
  // A hypothesis is a shift from the configuration it was proposed against;
  // one with no origin shifts the default configuration.
  auto origin_of = [&](const Cand* c) {
    auto o = c ? parse_params_marker(c->text) : std::nullopt;
    return o && o->size() == dim ? *o : std::vector<double>(dim, 0.0);
  };
  const auto shared_delta = best_shared ? parse_delta_marker(best_shared->text) : std::nullopt;
  if (follow && shared_delta && shared_delta->size() == dim) {
    // Adapting a shared idea: aim where it led its own trace, restated as a
    // shift from this branch's configuration, as freely as novelty asks.
    const auto from = origin_of(best_shared);
    const auto here = origin_of(best_current);
    const double novelty = merge ? 0.0 : number_after(prompt, "explore new directions): ").value_or(0.0);
    const double sigma = config_.step_floor + config_.step_scale * novelty;
    std::vector<double> delta(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      delta[i] = clamp_param(from[i] + (*shared_delta)[i] + sigma * rng.normal()) - here[i];
    }
    return fmt::format("```kv\naction: Modify\ncandidate: {}\nsources: {}\nhypothesis: Adapt candidate {}: move from {} by "
                       "{}\n```\n",
                       best_shared->number, best_shared->number, best_shared->number, params_marker(here),
                       delta_marker(delta));
  }
  const Cand& pick = best_current ? *best_current : cands.front();
  return fmt::format("```kv\naction: Select\ncandidate: {}\n```\n", pick.number);
}

std::string SyntheticBackend::draft(const std::string& prompt, std::uint64_t seed) const {
  Rng rng(seed);
  const auto dim = static_cast<std::size_t>(landscape_.dimension());
  std::optional<std::vector<double>> delta;
  for (const auto& line : lines_of(prompt)) {
    if (line.rfind("Hypothesis to implement", 0) == 0) {
      delta = parse_delta_marker(line);
      break;
    }
  }
  // The shift applies to the parent script's configuration, if there is one.
  std::vector<double> base(dim, 0.0);
  if (const auto at = prompt.find("Start from the parent solution"); at != std::string::npos) {
    const auto parent = parse_directive(std::string_view(prompt).substr(at));
    if (parent && parent->params.size() == dim) base = parent->params;
  }
  SolutionDirective d;
  if (delta && delta->size() == dim) {
    d.params.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) d.params[i] = clamp_param(base[i] + (*delta)[i]);
  } else {
    d.params.assign(dim, 0.0);
    for (auto& v : d.params) v = rng.uniform(-1.0, 1.0);
  }
  d.cost_s = config_.base_cost_s * (0.75 + 0.5 * rng.uniform());
  if (rng.uniform() < config_.bug_rate) d.bug = "KeyError: 'label'";
  return "```python\n" + render_directive(d) + "```\n";
}

std::string SyntheticBackend::revise(const std::string& prompt) const {
  const auto start = prompt.find("Current script:\n```\n");
  if (start == std::string::npos) throw BackendError("revise prompt without a script");
  const auto body = start + 20;
  const auto end = prompt.find("```", body);
  auto d = parse_directive(prompt.substr(body, end - body));
  if (!d) throw BackendError("revise prompt script is not a synthetic directive");
  d->bug = "none";
  return "```python\n" + render_directive(*d) + "```\n";
}

std::string SyntheticBackend::choose_sota(const std::string& prompt) const {
  static const std::regex row(R"(^(\d+)\. node \d+ .*validation ([-+0-9.eE]+|none))");
  std::optional<long> best;
  double best_v = -INFINITY;
  for (const auto& line : lines_of(prompt)) {
    std::smatch m;
    if (!std::regex_search(line, m, row)) continue;
    const auto v = parse_real(m[2].str());
    if (v && *v > best_v) {
      best_v = *v;
      best = std::stol(m[1]);
    }
  }
  return json{{"selected_SOTA_idx", best ? json(*best) : json(nullptr)}, {"explanation", "highest validation score"}}
      .dump();
}

}  // namespace mlagent
