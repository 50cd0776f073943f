#include "mlagent/landscape.hpp"

#include <cmath>

#include <fmt/format.h>

#include "mlagent/errors.hpp"
#include "mlagent/rng.hpp"

namespace mlagent {

Landscape::Landscape(const LandscapeConfig& config) : config_(config) {
  if (config.dimension < 1) throw InvalidArgument("landscape dimension must be >= 1");
  if (config.bump_count < 1) throw InvalidArgument("landscape needs at least one bump");
  if (!(config.max_value > 0.0)) throw InvalidArgument("landscape max_value must be positive");
  if (!(config.distractor_height_max < 1.0)) throw InvalidArgument("distractor heights must stay below 1");
  if (!(config.valley_width >= 0.0)) throw InvalidArgument("valley width must be >= 0");
  Rng rng(derive_seed(config.seed, {fnv1a("landscape")}));
  const auto d = static_cast<std::size_t>(config.dimension);
  for (int k = 0; k < config.bump_count; ++k) {
    Bump b;
    b.center.resize(d);
    // Centres stay away from the box edge so every bump is fully inside.
    for (auto& c : b.center) c = rng.uniform(-0.8, 0.8);
    if (k == 0) {
      b.width = config.optimum_width;
      b.height = 1.0;
    } else {
      b.width = rng.uniform(config.distractor_width_min, config.distractor_width_max);
      b.height = rng.uniform(config.distractor_height_min, config.distractor_height_max);
      if (config.valley_width > 0.0) {
        double r2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double diff = b.center[i] - bumps_.front().center[i];
          r2 += diff * diff;
        }
        const double near = std::exp(-r2 / (2.0 * config.valley_width * config.valley_width));
        b.height = config.distractor_height_min + (config.distractor_height_max - config.distractor_height_min) * near;
      }
    }
    bumps_.push_back(std::move(b));
  }
}

double Landscape::score(std::span<const double> params) const {
  if (params.size() != static_cast<std::size_t>(config_.dimension)) {
    throw DimensionMismatch(fmt::format("landscape has dimension {}, got {}", config_.dimension, params.size()));
  }
  double miss = 1.0;
  for (const auto& b : bumps_) {
    double r2 = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double diff = params[i] - b.center[i];
      r2 += diff * diff;
    }
    miss *= 1.0 - b.height * std::exp(-r2 / (2.0 * b.width * b.width));
  }
  return config_.max_value * (1.0 - miss);
}

}  // namespace mlagent
