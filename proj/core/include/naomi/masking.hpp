#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "naomi/scheduler.hpp"

namespace naomi {

enum class MaskKind { random_count, forward_prediction, explicit_mask };

// Mask prior: draw the number of missing steps uniformly from
// [min_missing, max_missing], then the specific steps uniformly without
// replacement from the non-kept indices.
struct MaskSpec {
  MaskKind kind = MaskKind::random_count;
  int64_t min_missing = 0;
  int64_t max_missing = 0;
  bool keep_first = true;
  bool keep_last = false;
  int64_t observed_prefix = 5;  // forward_prediction: first steps observed
  Mask explicit_bits;           // explicit_mask pass-through
  uint64_t seed = 0;
};

Mask sample_mask(const MaskSpec& spec, int64_t T, std::mt19937_64& rng);
// Draws from a generator seeded with spec.seed.
Mask sample_mask(const MaskSpec& spec, int64_t T);

// "random:<min>:<max>", "forward[:prefix]" or "explicit:<0/1 string>".
MaskSpec parse_mask_spec(const std::string& text);

}  // namespace naomi
