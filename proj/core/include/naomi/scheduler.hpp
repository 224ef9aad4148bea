#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "naomi/model.hpp"
#include "naomi/tape.hpp"
#include "naomi/tensor.hpp"

namespace naomi {

// Observation mask: bits[t] = 1 when x_t is observed, 0 when missing.
struct Mask {
  std::vector<uint8_t> bits;

  Mask() = default;
  explicit Mask(std::vector<uint8_t> b) : bits(std::move(b)) {}

  int64_t size() const { return static_cast<int64_t>(bits.size()); }
  int64_t missing_count() const;
  bool all_observed() const;

  static Mask from_string(const std::string& s);  // '0'/'1' characters
  std::string to_string() const;
};

enum class ImputeMode { standard, forward_prediction };

// Right-pivot sentinel for gaps with no observed right endpoint; the
// decoder then conditions on the learned initial backward state.
constexpr int64_t kVirtualEnd = -1;

// One decode action: impute index t_star at resolution r (stride
// 2^(R - r)) between pivots i and j.
struct ScheduleStep {
  int64_t i = 0;
  int64_t j = kVirtualEnd;
  int64_t r = 1;
  int64_t t_star = 0;

  bool operator==(const ScheduleStep&) const = default;
};

// Leftmost gap, coarsest admissible resolution, target i + 2^(R - r).
// Returns nullopt when the mask is all ones. Hard error when index 0 is
// missing (no left pivot can exist).
std::optional<ScheduleStep> next_step(const Mask& mask, int64_t resolutions,
                                      ImputeMode mode = ImputeMode::standard);

// Repeated next_step, marking each target observed; every missing index
// appears exactly once.
std::vector<ScheduleStep> run_schedule(Mask mask, int64_t resolutions,
                                       ImputeMode mode = ImputeMode::standard);

// Per-index hidden states with validity flags and evaluation counters.
// A valid forward entry at t was computed from the valid entry at t-1 and
// the current input I_t; backward entries mirror this from t+1.
struct StateCache {
  std::vector<ad::Var> forward;
  std::vector<ad::Var> backward;
  std::vector<uint8_t> forward_valid;
  std::vector<uint8_t> backward_valid;
  std::vector<int64_t> forward_evals;   // per-index cell evaluations
  std::vector<int64_t> backward_evals;

  int64_t total_forward_evals() const;
  int64_t total_backward_evals() const;
};

struct ImputeOptions {
  ImputeMode mode = ImputeMode::standard;
  // Noise source for stochastic decoding; required when the model's
  // deterministic_mode is off.
  std::mt19937_64* noise = nullptr;
};

struct TapeImputation {
  Tensor completed;  // T x D; equals the input at every observed index
  std::vector<std::pair<int64_t, ad::Var>> imputed;  // decode order
  StateCache cache;
  std::vector<ScheduleStep> schedule;
};

// Runs the full decode loop on one tape so gradients flow from every
// imputed value back into the generator parameters. Missing entries of
// `sequence` are ignored (zero-filled at entry).
class ImputeEngine {
 public:
  ImputeEngine(ad::Tape& tape, ModelParams& model, const Tensor& sequence,
               const Mask& mask, ImputeOptions options = {});

  // Forward state at step.i and backward state at step.j, advancing /
  // descending from the nearest valid cache entries.
  std::pair<ad::Var, ad::Var> ensure_states(const ScheduleStep& step);

  // Runs the schedule to completion and returns the result.
  TapeImputation run();

  const StateCache& cache() const { return cache_; }

 private:
  ad::Var input_at(int64_t t) const;  // [x_t, m_t] with x zero-filled
  void initialize_states();
  void write_value(int64_t t, ad::Var value);

  ad::Tape* tape_;
  BoundModel bound_;
  ImputeOptions options_;
  int64_t T_ = 0;
  int64_t dims_ = 0;
  Tensor original_;
  Mask mask_;
  std::vector<ad::Var> values_;        // per-index x_t var (constant or decoded)
  StateCache cache_;
  std::vector<std::pair<int64_t, ad::Var>> imputed_;
  std::vector<ScheduleStep> schedule_;
};

// Value-level imputation: observed values pass through bit-exactly.
Tensor impute(ModelParams& model, const Tensor& sequence, const Mask& mask,
              ImputeOptions options = {});

// R such that 2^R is the nearest power of two to the mean missing-gap
// length (at least 1).
int64_t choose_resolution_count(double mean_gap_length);

}  // namespace naomi
