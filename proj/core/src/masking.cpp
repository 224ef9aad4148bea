#include "naomi/masking.hpp"

#include <algorithm>
#include <stdexcept>

namespace naomi {

Mask sample_mask(const MaskSpec& spec, int64_t T, std::mt19937_64& rng) {
  if (T < 1) throw std::invalid_argument("sample_mask: T must be >= 1");

  if (spec.kind == MaskKind::explicit_mask) {
    if (spec.explicit_bits.size() != T) {
      throw std::invalid_argument("sample_mask: explicit mask length " +
                                  std::to_string(spec.explicit_bits.size()) +
                                  " vs T " + std::to_string(T));
    }
    return spec.explicit_bits;
  }

  if (spec.kind == MaskKind::forward_prediction) {
    const int64_t prefix = std::min(spec.observed_prefix, T);
    if (prefix < 1) {
      throw std::invalid_argument("sample_mask: forward prediction needs an observed prefix");
    }
    Mask m;
    m.bits.assign(static_cast<size_t>(T), 0);
    for (int64_t t = 0; t < prefix; ++t) m.bits[static_cast<size_t>(t)] = 1;
    return m;
  }

  std::vector<int64_t> maskable;
  maskable.reserve(static_cast<size_t>(T));
  for (int64_t t = 0; t < T; ++t) {
    if (spec.keep_first && t == 0) continue;
    if (spec.keep_last && t == T - 1) continue;
    maskable.push_back(t);
  }
  const int64_t max_possible = static_cast<int64_t>(maskable.size());
  if (spec.min_missing < 0 || spec.min_missing > spec.max_missing ||
      spec.max_missing > max_possible) {
    throw std::invalid_argument(
        "sample_mask: infeasible spec, need 0 <= " + std::to_string(spec.min_missing) +
        " <= " + std::to_string(spec.max_missing) + " <= " +
        std::to_string(max_possible) + " maskable indices");
  }

  std::uniform_int_distribution<int64_t> count_dist(spec.min_missing, spec.max_missing);
  const int64_t k = count_dist(rng);
  // Partial Fisher-Yates: the first k entries are a uniform k-subset.
  for (int64_t idx = 0; idx < k; ++idx) {
    std::uniform_int_distribution<int64_t> pick(idx, max_possible - 1);
    std::swap(maskable[static_cast<size_t>(idx)],
              maskable[static_cast<size_t>(pick(rng))]);
  }

  Mask m;
  m.bits.assign(static_cast<size_t>(T), 1);
  for (int64_t idx = 0; idx < k; ++idx) {
    m.bits[static_cast<size_t>(maskable[static_cast<size_t>(idx)])] = 0;
  }
  return m;
}

Mask sample_mask(const MaskSpec& spec, int64_t T) {
  std::mt19937_64 rng(spec.seed);
  return sample_mask(spec, T, rng);
}

MaskSpec parse_mask_spec(const std::string& text) {
  MaskSpec spec;
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
      size_t pos = s.find(':', start);
      if (pos == std::string::npos) {
        parts.push_back(s.substr(start));
        break;
      }
      parts.push_back(s.substr(start, pos - start));
      start = pos + 1;
    }
    return parts;
  };
  const auto parts = split(text);
  if (parts.empty()) throw std::invalid_argument("mask spec: empty");
  const std::string& kind = parts[0];
  if (kind == "random") {
    if (parts.size() != 3) {
      throw std::invalid_argument("mask spec: expected random:<min>:<max>");
    }
    spec.kind = MaskKind::random_count;
    spec.min_missing = std::stoll(parts[1]);
    spec.max_missing = std::stoll(parts[2]);
    return spec;
  }
  if (kind == "forward") {
    spec.kind = MaskKind::forward_prediction;
    if (parts.size() == 2) spec.observed_prefix = std::stoll(parts[1]);
    else if (parts.size() != 1) {
      throw std::invalid_argument("mask spec: expected forward[:prefix]");
    }
    return spec;
  }
  if (kind == "explicit") {
    if (parts.size() != 2) {
      throw std::invalid_argument("mask spec: expected explicit:<0/1 string>");
    }
    spec.kind = MaskKind::explicit_mask;
    spec.explicit_bits = Mask::from_string(parts[1]);
    return spec;
  }
  throw std::invalid_argument("mask spec: unknown kind '" + kind +
                              "' (expected random, forward or explicit)");
}

}  // namespace naomi
