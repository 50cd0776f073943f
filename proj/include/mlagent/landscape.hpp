#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mlagent {

struct LandscapeConfig {
  int dimension = 2;
  int bump_count = 6;  // planted optimum plus distractors
  double max_value = 1.0;
  double optimum_width = 0.22;
  double distractor_width_min = 0.30;
  double distractor_width_max = 0.55;
  double distractor_height_min = 0.35;
  double distractor_height_max = 0.75;
  // Distractor heights fall off with distance from the optimum at this scale,
  // so better regions cluster around it; 0 draws heights independently.
  double valley_width = 0.0;
  std::uint64_t seed = 0;
};

struct Bump {
  std::vector<double> center;
  double width = 0.0;
  double height = 0.0;  // in (0, 1]; only the planted optimum reaches 1
};

/// Seeded multimodal function on [-1, 1]^d with values in [0, max_value].
/// Bumps combine as 1 - prod(1 - h_k g_k), so the planted optimum (h = 1) is
/// the unique point reaching max_value.
class Landscape {
 public:
  explicit Landscape(const LandscapeConfig& config);

  double score(std::span<const double> params) const;  // throws DimensionMismatch
  const std::vector<double>& optimum() const { return bumps_.front().center; }
  const std::vector<Bump>& bumps() const { return bumps_; }
  const LandscapeConfig& config() const { return config_; }
  int dimension() const { return config_.dimension; }

 private:
  LandscapeConfig config_;
  std::vector<Bump> bumps_;
};

}  // namespace mlagent
