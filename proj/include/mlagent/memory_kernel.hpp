#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mlagent/model.hpp"
#include "mlagent/rng.hpp"

namespace mlagent {

struct KernelParams {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.5;
  int sample_count = 2;   // n
  int current_count = 3;  // m

  /// Throws InvalidArgument unless all weights are non-negative, alpha + beta <= 2,
  /// n >= 0 and m >= 1.
  void validate() const;
};

/// Cosine of the angle between two embeddings. Throws ZeroVector or DimensionMismatch.
double similarity(std::span<const double> a, std::span<const double> b);

/// Direction-aware gap between the best score of a candidate's branch and the
/// global best (non-positive whenever the global best really is the best).
double delta(const ScoreRecord& branch_best, const ScoreRecord& global_best);

/// U = alpha * S * exp(-gamma * L) + beta * tanh(delta).
double interaction_potential(double similarity, long path_length, double delta, const KernelParams& params);

/// Softmax with max-subtraction. Throws EmptyInput.
std::vector<double> sampling_distribution(std::span<const double> potentials);

/// Index drawn from a probability vector.
std::size_t draw_categorical(std::span<const double> probabilities, Rng& rng);

struct KernelDraw {
  NodeId node = -1;
  double similarity = 0.0;
  double delta = 0.0;
  double potential = 0.0;
  double probability = 0.0;  // probability at the moment of the draw
};

struct SampleResult {
  std::vector<Hypothesis> hypotheses;
  std::vector<NodeId> source_nodes;
  std::vector<KernelDraw> draws;
  long path_length = 0;
  bool no_eligible_history = false;
};

/// Draws up to params.sample_count historical hypotheses from branches other
/// than `current`, without replacement. Similarity is measured against the
/// current branch's latest hypothesis, or `fallback_reference` when the branch
/// has no nodes yet. An empty eligible set sets `no_eligible_history`.
SampleResult sample_candidates(const ExplorationGraph& graph, BranchId current, const KernelParams& params,
                               Rng& rng, const std::vector<double>* fallback_reference = nullptr);

struct CandidatePool {
  std::vector<Hypothesis> current;
  std::optional<Hypothesis> best;
  std::vector<Hypothesis> sampled;

  std::optional<NodeId> best_node;
  std::vector<NodeId> sampled_nodes;
  std::vector<KernelDraw> draws;
  bool no_eligible_history = false;

  std::size_t size() const { return current.size() + (best ? 1 : 0) + sampled.size(); }
};

/// One flattened candidate, with the evidence a selector may look at.
struct PoolEntry {
  Hypothesis hypothesis;
  std::optional<NodeId> source;
  std::optional<ScoreRecord> score;
};

/// Current hypotheses, global best, then sampled, in that order.
std::vector<PoolEntry> flatten(const CandidatePool& pool, const ExplorationGraph& graph);

/// Builds current (first m inputs) + global best + kernel samples, removing
/// duplicate texts in priority order current > best > sampled. With
/// `collaborative` false only the current hypotheses are kept.
CandidatePool build_candidate_pool(const std::vector<Hypothesis>& branch_hypotheses, const ExplorationGraph& graph,
                                   BranchId current, const KernelParams& params, Rng& rng,
                                   bool collaborative = true);

}  // namespace mlagent
