#include "mlagent/memory_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "mlagent/errors.hpp"

namespace mlagent {

void KernelParams::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
    throw InvalidArgument("kernel weights must be non-negative");
  }
  if (alpha + beta > 2.0) {
    throw InvalidArgument(fmt::format("alpha + beta = {} exceeds 2", alpha + beta));
  }
  if (sample_count < 0) throw InvalidArgument("sample_count must be >= 0");
  if (current_count < 1) throw InvalidArgument("current_count must be >= 1");
}

double similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch(fmt::format("embedding sizes {} and {} differ", a.size(), b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ZeroVector();
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double delta(const ScoreRecord& branch_best, const ScoreRecord& global_best) {
  if (branch_best.metric_name != global_best.metric_name ||
      branch_best.higher_is_better != global_best.higher_is_better) {
    throw MetricMismatch("delta requires scores of the same metric and direction");
  }
  return branch_best.higher_is_better ? branch_best.value - global_best.value
                                      : global_best.value - branch_best.value;
}

double interaction_potential(double s, long path_length, double d, const KernelParams& params) {
  if (!(s >= -1.0 && s <= 1.0)) throw InvalidArgument(fmt::format("similarity {} outside [-1, 1]", s));
  if (path_length < 0) throw InvalidArgument("path length must be non-negative");
  return params.alpha * s * std::exp(-params.gamma * static_cast<double>(path_length)) +
         params.beta * std::tanh(d);
}

std::vector<double> sampling_distribution(std::span<const double> potentials) {
  if (potentials.empty()) throw EmptyInput("sampling distribution over no potentials");
  double top = -INFINITY;
  for (double u : potentials) {
    if (!std::isfinite(u)) throw InvalidArgument("potentials must be finite");
    top = std::max(top, u);
  }
  std::vector<double> p(potentials.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(potentials[i] - top);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

std::size_t draw_categorical(std::span<const double> probabilities, Rng& rng) {
  if (probabilities.empty()) throw EmptyInput("categorical draw over no outcomes");
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    cum += probabilities[i];
    if (u < cum) return i;
  }
  return probabilities.size() - 1;
}

SampleResult sample_candidates(const ExplorationGraph& graph, BranchId current, const KernelParams& params,
                               Rng& rng, const std::vector<double>* fallback_reference) {
  params.validate();
  SampleResult result;

  const Node* frontier = graph.frontier(current);
  const std::vector<double>* reference = nullptr;
  if (frontier && frontier->hypothesis.embedding) {
    reference = &*frontier->hypothesis.embedding;
  } else {
    reference = fallback_reference;
  }
  if (graph.has_branch(current)) result.path_length = static_cast<long>(graph.branches().at(current).size());

  const auto global = global_best(graph);
  struct Eligible {
    const Node* node;
    double s;
    double d;
  };
  std::vector<Eligible> eligible;
  if (reference && global) {
    std::set<std::string> texts;
    for (const auto& [b, ids] : graph.branches()) {
      if (b == current) continue;
      const auto best = branch_best(graph, b);
      if (!best) continue;
      // Failed nodes stay eligible; their delta always uses the branch best.
      const double d = delta(*best->score, *global->score);
      for (NodeId id : ids) {
        const Node& n = graph.node(id);
        if (!n.hypothesis.embedding) continue;
        if (!texts.insert(n.hypothesis.text).second) continue;
        eligible.push_back({&n, similarity(*reference, *n.hypothesis.embedding), d});
      }
    }
  }
  if (eligible.empty()) {
    result.no_eligible_history = true;
    return result;
  }

  std::vector<double> potentials;
  potentials.reserve(eligible.size());
  for (const auto& e : eligible) {
    potentials.push_back(interaction_potential(e.s, result.path_length, e.d, params));
  }

  const auto draws = std::min<std::size_t>(static_cast<std::size_t>(params.sample_count), eligible.size());
  for (std::size_t k = 0; k < draws; ++k) {
    const auto p = sampling_distribution(potentials);
    const std::size_t i = draw_categorical(p, rng);
    const Node& n = *eligible[i].node;
    Hypothesis h = n.hypothesis;
    h.origin = Origin::KernelSampled;
    result.hypotheses.push_back(std::move(h));
    result.source_nodes.push_back(n.id);
    result.draws.push_back({n.id, eligible[i].s, eligible[i].d, potentials[i], p[i]});
    eligible.erase(eligible.begin() + static_cast<std::ptrdiff_t>(i));
    potentials.erase(potentials.begin() + static_cast<std::ptrdiff_t>(i));
  }
  return result;
}

CandidatePool build_candidate_pool(const std::vector<Hypothesis>& branch_hypotheses, const ExplorationGraph& graph,
                                   BranchId current, const KernelParams& params, Rng& rng, bool collaborative) {
  if (branch_hypotheses.empty()) throw EmptyInput("candidate pool needs at least one current hypothesis");
  params.validate();
  CandidatePool pool;
  std::set<std::string> seen;
  const auto m = std::min<std::size_t>(static_cast<std::size_t>(params.current_count), branch_hypotheses.size());
  for (std::size_t i = 0; i < m; ++i) {
    Hypothesis h = branch_hypotheses[i];
    h.origin = Origin::CurrentBranch;
    if (!seen.insert(h.text).second) continue;
    pool.current.push_back(std::move(h));
  }
  if (!collaborative) return pool;

  if (auto best = global_best(graph)) {
    if (seen.insert(best->hypothesis.text).second) {
      Hypothesis h = best->hypothesis;
      h.origin = Origin::GlobalBest;
      pool.best = std::move(h);
      pool.best_node = best->id;
    }
  }

  const std::vector<double>* fallback = nullptr;
  for (const auto& h : pool.current) {
    if (h.embedding) {
      fallback = &*h.embedding;
      break;
    }
  }
  SampleResult sample = sample_candidates(graph, current, params, rng, fallback);
  pool.no_eligible_history = sample.no_eligible_history;
  pool.draws = sample.draws;
  for (std::size_t i = 0; i < sample.hypotheses.size(); ++i) {
    if (!seen.insert(sample.hypotheses[i].text).second) continue;
    pool.sampled.push_back(std::move(sample.hypotheses[i]));
    pool.sampled_nodes.push_back(sample.source_nodes[i]);
  }
  return pool;
}

std::vector<PoolEntry> flatten(const CandidatePool& pool, const ExplorationGraph& graph) {
  std::vector<PoolEntry> out;
  for (const auto& h : pool.current) out.push_back({h, std::nullopt, std::nullopt});
  if (pool.best) {
    const Node* n = pool.best_node ? graph.find(*pool.best_node) : nullptr;
    out.push_back({*pool.best, pool.best_node, n ? n->score : std::nullopt});
  }
  for (std::size_t i = 0; i < pool.sampled.size(); ++i) {
    const NodeId id = pool.sampled_nodes[i];
    const Node* n = graph.find(id);
    std::optional<ScoreRecord> score = n ? n->score : std::nullopt;
    out.push_back({pool.sampled[i], id, score});
  }
  return out;
}

}  // namespace mlagent
