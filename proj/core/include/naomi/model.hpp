#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "naomi/tape.hpp"
#include "naomi/tensor.hpp"

namespace naomi {

// Per-dimension affine normalization (x - mean) / scale.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> scale;

  bool identity() const { return mean.empty(); }
  Tensor normalize(const Tensor& sequence) const;    // T x D
  Tensor denormalize(const Tensor& sequence) const;  // T x D
};

// Gated recurrent cell. All weight matrices are (hidden x (input + hidden))
// applied to the concatenation [input, hidden]; biases are length hidden.
struct GruCellParams {
  int64_t input_dim = 0;
  int64_t hidden_dim = 0;
  Tensor w_update, w_reset, w_cand;
  Tensor b_update, b_reset, b_cand;
};

// Forward and backward recurrent encoders over inputs I_t = [x_t, m_t]
// (value zero-filled where missing, mask replicated per dimension, so
// input_dim = 2 * dims), plus learned boundary states.
struct EncoderParams {
  GruCellParams forward_cell;
  GruCellParams backward_cell;
  Tensor h0_forward;   // state left of index 0
  Tensor h0_backward;  // state right of index T-1
};

// One decoding head: a 2-layer MLP from the joined hidden states
// [h_f, h_b] to (mu, raw_sigma), each of length dims.
struct DecoderHeadParams {
  Tensor w1, b1;  // (mlp_hidden x 2*hidden), (mlp_hidden)
  Tensor w2, b2;  // (2*dims x mlp_hidden), (2*dims)
};

// Resolution-indexed decoder: head r (1-based) fills targets at stride
// 2^(R-r); head R is the finest (stride 1).
struct DecoderParams {
  int64_t resolutions = 1;  // R
  bool deterministic_mode = true;
  std::vector<DecoderHeadParams> heads;  // heads[r-1]
};

// Recurrent discriminator: GRU over D-dimensional steps plus a per-step
// linear + sigmoid head giving a probability in (0,1).
struct DiscriminatorParams {
  GruCellParams cell;
  Tensor h0;
  Tensor w_out;  // (1 x hidden)
  Tensor b_out;  // (1)
};

struct ModelHyperparams {
  int64_t dims = 1;
  int64_t hidden_size = 64;
  int64_t decoder_hidden = 64;
  int64_t resolutions = 1;
  int64_t disc_hidden = 64;
  bool deterministic_mode = true;
};

struct ModelParams {
  ModelHyperparams hparams;
  EncoderParams encoder;
  DecoderParams decoder;
  std::optional<DiscriminatorParams> discriminator;
  Normalization norm;

  // Generator parameters theta, stable name -> tensor.
  std::vector<std::pair<std::string, Tensor*>> generator_parameters();
  // Discriminator parameters omega (empty when absent).
  std::vector<std::pair<std::string, Tensor*>> discriminator_parameters();
};

ModelParams init_model(const ModelHyperparams& hp, std::mt19937_64& rng);
void init_discriminator(ModelParams& model, std::mt19937_64& rng);

// Checkpoint round-trips parameter values exactly (17 significant digits).
void save_checkpoint(const ModelParams& model, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// --- tape-level building blocks -------------------------------------------

struct GruCellVars {
  ad::Var w_update, w_reset, w_cand;
  ad::Var b_update, b_reset, b_cand;
};

GruCellVars bind_cell(ad::Tape& tape, GruCellParams& cell);
ad::Var gru_step(ad::Tape& tape, const GruCellVars& cell, ad::Var h_prev,
                 ad::Var input);

// Convenience single-step evaluations matching the recurrences
// h_t^f = f_f(h_{t-1}^f, I_t) and h_t^b = f_b(h_{t+1}^b, I_t).
Tensor encode_step_forward(GruCellParams& cell, const Tensor& h_prev,
                           const Tensor& input);
Tensor encode_step_backward(GruCellParams& cell, const Tensor& h_next,
                            const Tensor& input);

// Generator parameters bound to one tape.
class BoundModel {
 public:
  BoundModel(ad::Tape& tape, ModelParams& model);

  ad::Var encode_forward(ad::Var h_prev, ad::Var input) const;
  ad::Var encode_backward(ad::Var h_next, ad::Var input) const;
  ad::Var h0_forward() const { return h0_forward_; }
  ad::Var h0_backward() const { return h0_backward_; }

  // g^(r)(h_f, h_b) for 1 <= r <= R. Deterministic mode returns mu; the
  // stochastic branch returns mu + (softplus(raw_sigma) + 1e-6) * eps.
  ad::Var decode(int64_t r, ad::Var h_f, ad::Var h_b, const Tensor* eps) const;

  ModelParams& params() const { return *model_; }

 private:
  ad::Tape* tape_;
  ModelParams* model_;
  GruCellVars forward_cell_, backward_cell_;
  ad::Var h0_forward_, h0_backward_;
  struct HeadVars {
    ad::Var w1, b1, w2, b2;
  };
  std::vector<HeadVars> heads_;
};

// Value of one imputed step in deterministic mode (tape-free convenience).
Tensor decode_head(ModelParams& model, int64_t r, const Tensor& h_f,
                   const Tensor& h_b, const Tensor* eps = nullptr);

// Discriminator bound to one tape; yields per-step probabilities.
class BoundDiscriminator {
 public:
  BoundDiscriminator(ad::Tape& tape, DiscriminatorParams& disc);

  // steps[t] must be a rank-1 var of length dims. Output: one (1)-shaped
  // probability var per step, strictly inside (0,1) after clamping.
  std::vector<ad::Var> step_probabilities(const std::vector<ad::Var>& steps) const;

 private:
  ad::Tape* tape_;
  GruCellVars cell_;
  ad::Var h0_, w_out_, b_out_;
};

// Per-step probabilities for a T x D sequence. Hard error on NaN input.
std::vector<double> discriminate(DiscriminatorParams& disc, const Tensor& sequence);

constexpr double kSigmaFloor = 1e-6;

}  // namespace naomi
