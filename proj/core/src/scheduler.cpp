#include "naomi/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace naomi {

int64_t Mask::missing_count() const {
  int64_t n = 0;
  for (uint8_t b : bits) n += (b == 0);
  return n;
}

bool Mask::all_observed() const { return missing_count() == 0; }

Mask Mask::from_string(const std::string& s) {
  Mask m;
  m.bits.reserve(s.size());
  for (char c : s) {
    if (c != '0' && c != '1') {
      throw std::invalid_argument("Mask::from_string: invalid character '" +
                                  std::string(1, c) + "'");
    }
    m.bits.push_back(c == '1' ? 1 : 0);
  }
  return m;
}

std::string Mask::to_string() const {
  std::string s;
  s.reserve(bits.size());
  for (uint8_t b : bits) s.push_back(b ? '1' : '0');
  return s;
}

namespace {

void validate_mask(const Mask& mask, int64_t resolutions) {
  if (resolutions < 1) {
    throw std::invalid_argument("scheduler: resolutions must be >= 1");
  }
  for (uint8_t b : mask.bits) {
    if (b > 1) throw std::invalid_argument("scheduler: mask bits must be 0 or 1");
  }
}

}  // namespace

std::optional<ScheduleStep> next_step(const Mask& mask, int64_t resolutions,
                                      ImputeMode mode) {
  validate_mask(mask, resolutions);
  const int64_t T = mask.size();
  int64_t first_missing = -1;
  for (int64_t t = 0; t < T; ++t) {
    if (mask.bits[static_cast<size_t>(t)] == 0) {
      first_missing = t;
      break;
    }
  }
  if (first_missing < 0) return std::nullopt;
  if (first_missing == 0) {
    throw std::invalid_argument(
        "scheduler: index 0 is missing, so the leftmost gap has no left "
        "pivot; observe the first step or use a forward-prediction mask "
        "with a leading observed prefix");
  }

  ScheduleStep step;
  step.i = first_missing - 1;
  step.j = kVirtualEnd;
  for (int64_t t = first_missing + 1; t < T; ++t) {
    if (mask.bits[static_cast<size_t>(t)] == 1) {
      step.j = t;
      break;
    }
  }
  if (step.j == kVirtualEnd) {
    // Trailing gap: autoregressive fill against the learned boundary state.
    step.r = resolutions;
    step.t_star = step.i + 1;
    return step;
  }
  // Smallest r whose stride n_r = 2^(R-r) fits twice into the pivot span;
  // when none fits, fall back to the finest head.
  step.r = resolutions;
  for (int64_t r = 1; r <= resolutions; ++r) {
    const int64_t stride = int64_t{1} << (resolutions - r);
    if (2 * stride <= step.j - step.i) {
      step.r = r;
      break;
    }
  }
  step.t_star = step.i + (int64_t{1} << (resolutions - step.r));
  return step;
}

std::vector<ScheduleStep> run_schedule(Mask mask, int64_t resolutions,
                                       ImputeMode mode) {
  std::vector<ScheduleStep> steps;
  while (auto step = next_step(mask, resolutions, mode)) {
    mask.bits[static_cast<size_t>(step->t_star)] = 1;
    steps.push_back(*step);
  }
  return steps;
}

int64_t StateCache::total_forward_evals() const {
  int64_t n = 0;
  for (int64_t c : forward_evals) n += c;
  return n;
}

int64_t StateCache::total_backward_evals() const {
  int64_t n = 0;
  for (int64_t c : backward_evals) n += c;
  return n;
}

ImputeEngine::ImputeEngine(ad::Tape& tape, ModelParams& model,
                           const Tensor& sequence, const Mask& mask,
                           ImputeOptions options)
    : tape_(&tape), bound_(tape, model), options_(options) {
  if (sequence.rank() != 2) {
    throw std::invalid_argument("impute: sequence must be T x D, got " +
                                sequence.shape_str());
  }
  T_ = sequence.shape[0];
  dims_ = sequence.shape[1];
  if (dims_ != model.hparams.dims) {
    throw std::invalid_argument("impute: sequence dims " + std::to_string(dims_) +
                                " vs model dims " +
                                std::to_string(model.hparams.dims));
  }
  if (mask.size() != T_) {
    throw std::invalid_argument("impute: mask length " +
                                std::to_string(mask.size()) + " vs T " +
                                std::to_string(T_));
  }
  if (!model.hparams.deterministic_mode && options_.noise == nullptr) {
    throw std::invalid_argument("impute: stochastic model requires a noise source");
  }
  original_ = sequence;
  mask_ = mask;

  values_.resize(static_cast<size_t>(T_));
  for (int64_t t = 0; t < T_; ++t) {
    if (mask_.bits[static_cast<size_t>(t)]) {
      std::vector<double> row(sequence.data.begin() + t * dims_,
                              sequence.data.begin() + (t + 1) * dims_);
      values_[static_cast<size_t>(t)] = tape.constant(Tensor::vector(std::move(row)));
    } else {
      values_[static_cast<size_t>(t)] = tape.constant(Tensor::zeros({dims_}));
    }
  }

  cache_.forward.resize(static_cast<size_t>(T_));
  cache_.backward.resize(static_cast<size_t>(T_));
  cache_.forward_valid.assign(static_cast<size_t>(T_), 0);
  cache_.backward_valid.assign(static_cast<size_t>(T_), 0);
  cache_.forward_evals.assign(static_cast<size_t>(T_), 0);
  cache_.backward_evals.assign(static_cast<size_t>(T_), 0);
  initialize_states();
}

ad::Var ImputeEngine::input_at(int64_t t) const {
  const double m = mask_.bits[static_cast<size_t>(t)] ? 1.0 : 0.0;
  ad::Var mask_channel = tape_->constant(Tensor::full({dims_}, m));
  return tape_->concat(values_[static_cast<size_t>(t)], mask_channel);
}

void ImputeEngine::initialize_states() {
  ad::Var h = bound_.h0_forward();
  for (int64_t t = 0; t < T_; ++t) {
    h = bound_.encode_forward(h, input_at(t));
    cache_.forward[static_cast<size_t>(t)] = h;
    cache_.forward_valid[static_cast<size_t>(t)] = 1;
    cache_.forward_evals[static_cast<size_t>(t)]++;
  }
  h = bound_.h0_backward();
  for (int64_t t = T_ - 1; t >= 0; --t) {
    h = bound_.encode_backward(h, input_at(t));
    cache_.backward[static_cast<size_t>(t)] = h;
    cache_.backward_valid[static_cast<size_t>(t)] = 1;
    cache_.backward_evals[static_cast<size_t>(t)]++;
  }
}

std::pair<ad::Var, ad::Var> ImputeEngine::ensure_states(const ScheduleStep& step) {
  // Forward: advance from the nearest valid entry at or left of i.
  if (!cache_.forward_valid[static_cast<size_t>(step.i)]) {
    int64_t s = step.i - 1;
    while (s >= 0 && !cache_.forward_valid[static_cast<size_t>(s)]) --s;
    ad::Var h = (s < 0) ? bound_.h0_forward() : cache_.forward[static_cast<size_t>(s)];
    for (int64_t t = s + 1; t <= step.i; ++t) {
      h = bound_.encode_forward(h, input_at(t));
      cache_.forward[static_cast<size_t>(t)] = h;
      cache_.forward_valid[static_cast<size_t>(t)] = 1;
      cache_.forward_evals[static_cast<size_t>(t)]++;
    }
  }
  ad::Var h_f = cache_.forward[static_cast<size_t>(step.i)];

  ad::Var h_b;
  if (step.j == kVirtualEnd) {
    h_b = bound_.h0_backward();
  } else {
    // Backward: descend from the nearest valid entry at or right of j.
    if (!cache_.backward_valid[static_cast<size_t>(step.j)]) {
      int64_t s = step.j + 1;
      while (s < T_ && !cache_.backward_valid[static_cast<size_t>(s)]) ++s;
      ad::Var h = (s >= T_) ? bound_.h0_backward() : cache_.backward[static_cast<size_t>(s)];
      for (int64_t t = s - 1; t >= step.j; --t) {
        h = bound_.encode_backward(h, input_at(t));
        cache_.backward[static_cast<size_t>(t)] = h;
        cache_.backward_valid[static_cast<size_t>(t)] = 1;
        cache_.backward_evals[static_cast<size_t>(t)]++;
      }
    }
    h_b = cache_.backward[static_cast<size_t>(step.j)];
  }
  return {h_f, h_b};
}

void ImputeEngine::write_value(int64_t t, ad::Var value) {
  values_[static_cast<size_t>(t)] = value;
  mask_.bits[static_cast<size_t>(t)] = 1;
  // The new value stales every state that consumed the old input: backward
  // entries at or left of t, forward entries at or right of t.
  for (int64_t u = t; u < T_; ++u) cache_.forward_valid[static_cast<size_t>(u)] = 0;
  for (int64_t u = t; u >= 0; --u) cache_.backward_valid[static_cast<size_t>(u)] = 0;
}

TapeImputation ImputeEngine::run() {
  ModelParams& model = bound_.params();
  const bool stochastic = !model.hparams.deterministic_mode;
  std::normal_distribution<double> normal(0.0, 1.0);

  while (auto step = next_step(mask_, model.decoder.resolutions, options_.mode)) {
    auto [h_f, h_b] = ensure_states(*step);
    ad::Var x_hat;
    if (stochastic) {
      Tensor eps = Tensor::zeros({dims_});
      for (double& e : eps.data) e = normal(*options_.noise);
      x_hat = bound_.decode(step->r, h_f, h_b, &eps);
    } else {
      x_hat = bound_.decode(step->r, h_f, h_b, nullptr);
    }
    write_value(step->t_star, x_hat);
    imputed_.emplace_back(step->t_star, x_hat);
    schedule_.push_back(*step);
  }

  TapeImputation result;
  result.completed = original_;
  for (auto& [t, var] : imputed_) {
    const Tensor& v = tape_->value(var);
    std::copy(v.data.begin(), v.data.end(),
              result.completed.data.begin() + t * dims_);
  }
  result.imputed = std::move(imputed_);
  result.cache = cache_;
  result.schedule = std::move(schedule_);
  return result;
}

Tensor impute(ModelParams& model, const Tensor& sequence, const Mask& mask,
              ImputeOptions options) {
  ad::Tape tape;
  ImputeEngine engine(tape, model, sequence, mask, options);
  return engine.run().completed;
}

int64_t choose_resolution_count(double mean_gap_length) {
  if (!(mean_gap_length > 1.0)) return 1;
  int64_t best_r = 1;
  double best_err = std::abs(2.0 - mean_gap_length);
  for (int64_t r = 2; r <= 16; ++r) {
    const double err = std::abs(std::pow(2.0, static_cast<double>(r)) - mean_gap_length);
    if (err < best_err) {
      best_err = err;
      best_r = r;
    }
  }
  return best_r;
}

}  // namespace naomi
