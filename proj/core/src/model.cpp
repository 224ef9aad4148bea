#include "naomi/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "naomi/dataset_io.hpp"

namespace naomi {

namespace {

Tensor uniform_init(std::vector<int64_t> shape, int64_t fan_in,
                    std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = dist(rng);
  return t;
}

GruCellParams init_cell(int64_t input_dim, int64_t hidden_dim,
                        std::mt19937_64& rng) {
  GruCellParams cell;
  cell.input_dim = input_dim;
  cell.hidden_dim = hidden_dim;
  const int64_t fan_in = input_dim + hidden_dim;
  cell.w_update = uniform_init({hidden_dim, fan_in}, fan_in, rng);
  cell.w_reset = uniform_init({hidden_dim, fan_in}, fan_in, rng);
  cell.w_cand = uniform_init({hidden_dim, fan_in}, fan_in, rng);
  cell.b_update = Tensor::zeros({hidden_dim});
  cell.b_reset = Tensor::zeros({hidden_dim});
  cell.b_cand = Tensor::zeros({hidden_dim});
  return cell;
}

void check_cell_shapes(const GruCellParams& cell, const char* name) {
  const int64_t fan_in = cell.input_dim + cell.hidden_dim;
  auto check_mat = [&](const Tensor& w) {
    if (w.rank() != 2 || w.shape[0] != cell.hidden_dim || w.shape[1] != fan_in) {
      throw std::invalid_argument(std::string(name) + ": bad weight shape " +
                                  w.shape_str());
    }
  };
  check_mat(cell.w_update);
  check_mat(cell.w_reset);
  check_mat(cell.w_cand);
}

}  // namespace

Tensor Normalization::normalize(const Tensor& sequence) const {
  if (identity()) return sequence;
  if (sequence.rank() != 2 ||
      sequence.shape[1] != static_cast<int64_t>(mean.size())) {
    throw std::invalid_argument("normalize: sequence shape " +
                                sequence.shape_str() + " vs dims " +
                                std::to_string(mean.size()));
  }
  Tensor out = sequence;
  const int64_t dims = sequence.shape[1];
  for (int64_t t = 0; t < sequence.shape[0]; ++t) {
    for (int64_t d = 0; d < dims; ++d) {
      double& v = out.data[static_cast<size_t>(t * dims + d)];
      v = (v - mean[static_cast<size_t>(d)]) / scale[static_cast<size_t>(d)];
    }
  }
  return out;
}

Tensor Normalization::denormalize(const Tensor& sequence) const {
  if (identity()) return sequence;
  Tensor out = sequence;
  const int64_t dims = sequence.shape[1];
  for (int64_t t = 0; t < sequence.shape[0]; ++t) {
    for (int64_t d = 0; d < dims; ++d) {
      double& v = out.data[static_cast<size_t>(t * dims + d)];
      v = v * scale[static_cast<size_t>(d)] + mean[static_cast<size_t>(d)];
    }
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::generator_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add_cell = [&out](const std::string& prefix, GruCellParams& cell) {
    out.emplace_back(prefix + ".w_update", &cell.w_update);
    out.emplace_back(prefix + ".w_reset", &cell.w_reset);
    out.emplace_back(prefix + ".w_cand", &cell.w_cand);
    out.emplace_back(prefix + ".b_update", &cell.b_update);
    out.emplace_back(prefix + ".b_reset", &cell.b_reset);
    out.emplace_back(prefix + ".b_cand", &cell.b_cand);
  };
  add_cell("encoder.forward", encoder.forward_cell);
  add_cell("encoder.backward", encoder.backward_cell);
  out.emplace_back("encoder.h0_forward", &encoder.h0_forward);
  out.emplace_back("encoder.h0_backward", &encoder.h0_backward);
  for (size_t r = 0; r < decoder.heads.size(); ++r) {
    const std::string prefix = "decoder.head" + std::to_string(r + 1);
    out.emplace_back(prefix + ".w1", &decoder.heads[r].w1);
    out.emplace_back(prefix + ".b1", &decoder.heads[r].b1);
    out.emplace_back(prefix + ".w2", &decoder.heads[r].w2);
    out.emplace_back(prefix + ".b2", &decoder.heads[r].b2);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::discriminator_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  if (!discriminator) return out;
  DiscriminatorParams& d = *discriminator;
  out.emplace_back("disc.cell.w_update", &d.cell.w_update);
  out.emplace_back("disc.cell.w_reset", &d.cell.w_reset);
  out.emplace_back("disc.cell.w_cand", &d.cell.w_cand);
  out.emplace_back("disc.cell.b_update", &d.cell.b_update);
  out.emplace_back("disc.cell.b_reset", &d.cell.b_reset);
  out.emplace_back("disc.cell.b_cand", &d.cell.b_cand);
  out.emplace_back("disc.h0", &d.h0);
  out.emplace_back("disc.w_out", &d.w_out);
  out.emplace_back("disc.b_out", &d.b_out);
  return out;
}

ModelParams init_model(const ModelHyperparams& hp, std::mt19937_64& rng) {
  if (hp.dims < 1 || hp.hidden_size < 1 || hp.resolutions < 1) {
    throw std::invalid_argument("init_model: dims, hidden_size and resolutions must be >= 1");
  }
  ModelParams m;
  m.hparams = hp;
  const int64_t enc_input = 2 * hp.dims;  // [x_t, m_t] with mask per dim
  m.encoder.forward_cell = init_cell(enc_input, hp.hidden_size, rng);
  m.encoder.backward_cell = init_cell(enc_input, hp.hidden_size, rng);
  m.encoder.h0_forward = Tensor::zeros({hp.hidden_size});
  m.encoder.h0_backward = Tensor::zeros({hp.hidden_size});
  m.decoder.resolutions = hp.resolutions;
  m.decoder.deterministic_mode = hp.deterministic_mode;
  m.decoder.heads.resize(static_cast<size_t>(hp.resolutions));
  for (auto& head : m.decoder.heads) {
    const int64_t in = 2 * hp.hidden_size;
    head.w1 = uniform_init({hp.decoder_hidden, in}, in, rng);
    head.b1 = Tensor::zeros({hp.decoder_hidden});
    head.w2 = uniform_init({2 * hp.dims, hp.decoder_hidden}, hp.decoder_hidden, rng);
    head.b2 = Tensor::zeros({2 * hp.dims});
  }
  return m;
}

void init_discriminator(ModelParams& model, std::mt19937_64& rng) {
  DiscriminatorParams d;
  const int64_t dims = model.hparams.dims;
  const int64_t hidden = model.hparams.disc_hidden;
  d.cell = init_cell(dims, hidden, rng);
  d.h0 = Tensor::zeros({hidden});
  d.w_out = uniform_init({1, hidden}, hidden, rng);
  d.b_out = Tensor::zeros({1});
  model.discriminator = std::move(d);
}

// --- tape-level building blocks -------------------------------------------

GruCellVars bind_cell(ad::Tape& tape, GruCellParams& cell) {
  check_cell_shapes(cell, "bind_cell");
  GruCellVars v;
  v.w_update = tape.leaf(&cell.w_update);
  v.w_reset = tape.leaf(&cell.w_reset);
  v.w_cand = tape.leaf(&cell.w_cand);
  v.b_update = tape.leaf(&cell.b_update);
  v.b_reset = tape.leaf(&cell.b_reset);
  v.b_cand = tape.leaf(&cell.b_cand);
  return v;
}

ad::Var gru_step(ad::Tape& tape, const GruCellVars& cell, ad::Var h_prev,
                 ad::Var input) {
  ad::Var xh = tape.concat(input, h_prev);
  ad::Var z = tape.sigmoid(tape.add(tape.matmul(cell.w_update, xh), cell.b_update));
  ad::Var r = tape.sigmoid(tape.add(tape.matmul(cell.w_reset, xh), cell.b_reset));
  ad::Var xrh = tape.concat(input, tape.mul(r, h_prev));
  ad::Var cand = tape.tanh(tape.add(tape.matmul(cell.w_cand, xrh), cell.b_cand));
  // h = (1 - z) * h_prev + z * cand
  return tape.add(tape.sub(h_prev, tape.mul(z, h_prev)), tape.mul(z, cand));
}

Tensor encode_step_forward(GruCellParams& cell, const Tensor& h_prev,
                           const Tensor& input) {
  ad::Tape tape;
  GruCellVars vars = bind_cell(tape, cell);
  ad::Var h = gru_step(tape, vars, tape.constant(h_prev), tape.constant(input));
  return tape.value(h);
}

Tensor encode_step_backward(GruCellParams& cell, const Tensor& h_next,
                            const Tensor& input) {
  // Same recurrence mirrored in time: the caller feeds the successor state.
  return encode_step_forward(cell, h_next, input);
}

BoundModel::BoundModel(ad::Tape& tape, ModelParams& model)
    : tape_(&tape), model_(&model) {
  forward_cell_ = bind_cell(tape, model.encoder.forward_cell);
  backward_cell_ = bind_cell(tape, model.encoder.backward_cell);
  h0_forward_ = tape.leaf(&model.encoder.h0_forward);
  h0_backward_ = tape.leaf(&model.encoder.h0_backward);
  heads_.reserve(model.decoder.heads.size());
  for (auto& head : model.decoder.heads) {
    heads_.push_back(HeadVars{tape.leaf(&head.w1), tape.leaf(&head.b1),
                              tape.leaf(&head.w2), tape.leaf(&head.b2)});
  }
}

ad::Var BoundModel::encode_forward(ad::Var h_prev, ad::Var input) const {
  return gru_step(*tape_, forward_cell_, h_prev, input);
}

ad::Var BoundModel::encode_backward(ad::Var h_next, ad::Var input) const {
  return gru_step(*tape_, backward_cell_, h_next, input);
}

ad::Var BoundModel::decode(int64_t r, ad::Var h_f, ad::Var h_b,
                           const Tensor* eps) const {
  const int64_t R = model_->decoder.resolutions;
  if (r < 1 || r > R) {
    throw std::invalid_argument("decode: resolution " + std::to_string(r) +
                                " out of range [1, " + std::to_string(R) + "]");
  }
  const HeadVars& head = heads_[static_cast<size_t>(r - 1)];
  ad::Tape& tape = *tape_;
  ad::Var joined = tape.concat(h_f, h_b);
  ad::Var hidden = tape.tanh(tape.add(tape.matmul(head.w1, joined), head.b1));
  ad::Var out = tape.add(tape.matmul(head.w2, hidden), head.b2);
  const int64_t dims = model_->hparams.dims;
  ad::Var mu = tape.slice(out, 0, dims);
  if (model_->decoder.deterministic_mode) return mu;
  if (eps == nullptr) {
    throw std::invalid_argument("decode: stochastic mode requires an eps draw");
  }
  ad::Var raw_sigma = tape.slice(out, dims, dims);
  ad::Var sigma = tape.add(tape.softplus(raw_sigma),
                           tape.constant(Tensor::full({dims}, kSigmaFloor)));
  return tape.gaussian_sample(mu, sigma, *eps);
}

Tensor decode_head(ModelParams& model, int64_t r, const Tensor& h_f,
                   const Tensor& h_b, const Tensor* eps) {
  ad::Tape tape;
  BoundModel bound(tape, model);
  ad::Var out = bound.decode(r, tape.constant(h_f), tape.constant(h_b), eps);
  return tape.value(out);
}

BoundDiscriminator::BoundDiscriminator(ad::Tape& tape, DiscriminatorParams& disc)
    : tape_(&tape) {
  cell_ = bind_cell(tape, disc.cell);
  h0_ = tape.leaf(&disc.h0);
  w_out_ = tape.leaf(&disc.w_out);
  b_out_ = tape.leaf(&disc.b_out);
}

std::vector<ad::Var> BoundDiscriminator::step_probabilities(
    const std::vector<ad::Var>& steps) const {
  ad::Tape& tape = *tape_;
  std::vector<ad::Var> probs;
  probs.reserve(steps.size());
  ad::Var h = h0_;
  for (ad::Var step : steps) {
    h = gru_step(tape, cell_, h, step);
    ad::Var logit = tape.add(tape.matmul(w_out_, h), b_out_);
    probs.push_back(tape.sigmoid(logit));
  }
  return probs;
}

std::vector<double> discriminate(DiscriminatorParams& disc, const Tensor& sequence) {
  if (sequence.rank() != 2) {
    throw std::invalid_argument("discriminate: sequence must be T x D, got " +
                                sequence.shape_str());
  }
  for (double v : sequence.data) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("discriminate: non-finite input value");
    }
  }
  const int64_t T = sequence.shape[0];
  const int64_t dims = sequence.shape[1];
  ad::Tape tape;
  BoundDiscriminator bound(tape, disc);
  std::vector<ad::Var> steps;
  steps.reserve(static_cast<size_t>(T));
  for (int64_t t = 0; t < T; ++t) {
    std::vector<double> step(sequence.data.begin() + t * dims,
                             sequence.data.begin() + (t + 1) * dims);
    steps.push_back(tape.constant(Tensor::vector(std::move(step))));
  }
  std::vector<ad::Var> probs = bound.step_probabilities(steps);
  std::vector<double> out;
  out.reserve(probs.size());
  for (ad::Var p : probs) out.push_back(tape.value(p).item());
  return out;
}

// --- checkpoint io ---------------------------------------------------------

namespace {

using nlohmann::json;

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape}, {"data", t.data}};
}

Tensor tensor_from_json(const json& j) {
  std::vector<int64_t> shape = j.at("shape").get<std::vector<int64_t>>();
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

void save_checkpoint(const ModelParams& model, const std::string& path) {
  json j;
  j["format"] = "naomi-checkpoint-v1";
  j["hparams"] = {
      {"dims", model.hparams.dims},
      {"hidden_size", model.hparams.hidden_size},
      {"decoder_hidden", model.hparams.decoder_hidden},
      {"resolutions", model.hparams.resolutions},
      {"disc_hidden", model.hparams.disc_hidden},
      {"deterministic_mode", model.hparams.deterministic_mode},
  };
  if (!model.norm.identity()) {
    j["normalization"] = {{"mean", model.norm.mean}, {"scale", model.norm.scale}};
  }
  json gen = json::object();
  // generator_parameters() is non-const for optimizer use; values are not
  // mutated here.
  for (auto& [name, tensor] : const_cast<ModelParams&>(model).generator_parameters()) {
    gen[name] = tensor_to_json(*tensor);
  }
  j["generator"] = std::move(gen);
  if (model.discriminator) {
    json disc = json::object();
    for (auto& [name, tensor] :
         const_cast<ModelParams&>(model).discriminator_parameters()) {
      disc[name] = tensor_to_json(*tensor);
    }
    j["discriminator"] = std::move(disc);
  }
  io::atomic_write_text(path, j.dump());
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != "naomi-checkpoint-v1") {
    throw DataError("checkpoint " + path + ": unknown format");
  }
  ModelParams m;
  const json& hp = j.at("hparams");
  m.hparams.dims = hp.at("dims").get<int64_t>();
  m.hparams.hidden_size = hp.at("hidden_size").get<int64_t>();
  m.hparams.decoder_hidden = hp.at("decoder_hidden").get<int64_t>();
  m.hparams.resolutions = hp.at("resolutions").get<int64_t>();
  m.hparams.disc_hidden = hp.at("disc_hidden").get<int64_t>();
  m.hparams.deterministic_mode = hp.at("deterministic_mode").get<bool>();
  if (j.contains("normalization")) {
    m.norm.mean = j["normalization"].at("mean").get<std::vector<double>>();
    m.norm.scale = j["normalization"].at("scale").get<std::vector<double>>();
  }

  const int64_t enc_input = 2 * m.hparams.dims;
  m.encoder.forward_cell.input_dim = enc_input;
  m.encoder.forward_cell.hidden_dim = m.hparams.hidden_size;
  m.encoder.backward_cell.input_dim = enc_input;
  m.encoder.backward_cell.hidden_dim = m.hparams.hidden_size;
  m.decoder.resolutions = m.hparams.resolutions;
  m.decoder.deterministic_mode = m.hparams.deterministic_mode;
  m.decoder.heads.resize(static_cast<size_t>(m.hparams.resolutions));

  const json& gen = j.at("generator");
  for (auto& [name, tensor] : m.generator_parameters()) {
    if (!gen.contains(name)) {
      throw DataError("checkpoint " + path + ": missing parameter " + name);
    }
    *tensor = tensor_from_json(gen.at(name));
  }
  if (j.contains("discriminator")) {
    DiscriminatorParams d;
    d.cell.input_dim = m.hparams.dims;
    d.cell.hidden_dim = m.hparams.disc_hidden;
    m.discriminator = std::move(d);
    const json& disc = j.at("discriminator");
    for (auto& [name, tensor] : m.discriminator_parameters()) {
      if (!disc.contains(name)) {
        throw DataError("checkpoint " + path + ": missing parameter " + name);
      }
      *tensor = tensor_from_json(disc.at(name));
    }
  }
  return m;
}

}  // namespace naomi
