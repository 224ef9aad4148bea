#include "naomi/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace naomi::ad {

namespace {

using MatMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutMatMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<const Eigen::VectorXd>;
using MutVecMap = Eigen::Map<Eigen::VectorXd>;

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

}  // namespace

const Tensor& Tape::val(int32_t id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  return n.op == Op::kLeaf ? *n.external : n.value;
}

const Tensor& Tape::value(Var v) const {
  if (!v.valid() || v.id >= node_count()) {
    throw std::invalid_argument("Tape::value: invalid var");
  }
  return val(v.id);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

void Tape::check_same_shape(const char* op, Var a, Var b) const {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) {
    shape_error(op, "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  }
}

Var Tape::leaf(Tensor* t) {
  if (t == nullptr) throw std::invalid_argument("Tape::leaf: null tensor");
  Node n;
  n.op = Op::kLeaf;
  n.external = t;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2) {
    shape_error("matmul", "left operand must be rank 2, got " + ta.shape_str());
  }
  const int64_t m = ta.shape[0], k = ta.shape[1];
  if (tb.rank() == 1) {
    if (tb.shape[0] != k) {
      shape_error("matmul", "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Node n;
    n.op = Op::kMatmul;
    n.a = a.id;
    n.b = b.id;
    n.value = Tensor::zeros({m});
    MutVecMap out(n.value.data.data(), m);
    out.noalias() = MatMap(ta.data.data(), m, k) * VecMap(tb.data.data(), k);
    return push(std::move(n));
  }
  if (tb.rank() == 2) {
    if (tb.shape[0] != k) {
      shape_error("matmul", "shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    const int64_t p = tb.shape[1];
    Node n;
    n.op = Op::kMatmul;
    n.a = a.id;
    n.b = b.id;
    n.value = Tensor::zeros({m, p});
    MutMatMap out(n.value.data.data(), m, p);
    out.noalias() = MatMap(ta.data.data(), m, k) * MatMap(tb.data.data(), k, p);
    return push(std::move(n));
  }
  shape_error("matmul", "right operand must be rank 1 or 2, got " + tb.shape_str());
}

Var Tape::add(Var a, Var b) {
  check_same_shape("add", a, b);
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  n.value = Tensor::zeros(ta.shape);
  for (size_t i = 0; i < ta.data.size(); ++i) n.value.data[i] = ta.data[i] + tb.data[i];
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_same_shape("sub", a, b);
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  n.value = Tensor::zeros(ta.shape);
  for (size_t i = 0; i < ta.data.size(); ++i) n.value.data[i] = ta.data[i] - tb.data[i];
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_same_shape("mul", a, b);
  Node n;
  n.op = Op::kMul;
  n.a = a.id;
  n.b = b.id;
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  n.value = Tensor::zeros(ta.shape);
  for (size_t i = 0; i < ta.data.size(); ++i) n.value.data[i] = ta.data[i] * tb.data[i];
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a.id;
  const Tensor& ta = value(a);
  n.value = Tensor::zeros(ta.shape);
  for (size_t i = 0; i < ta.data.size(); ++i) n.value.data[i] = std::tanh(ta.data[i]);
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = a.id;
  const Tensor& ta = value(a);
  n.value = Tensor::zeros(ta.shape);
  for (size_t i = 0; i < ta.data.size(); ++i) n.value.data[i] = stable_sigmoid(ta.data[i]);
  return push(std::move(n));
}

Var Tape::softplus(Var a) {
  Node n;
  n.op = Op::kSoftplus;
  n.a = a.id;
  const Tensor& ta = value(a);
  n.value = Tensor::zeros(ta.shape);
  for (size_t i = 0; i < ta.data.size(); ++i) n.value.data[i] = stable_softplus(ta.data[i]);
  return push(std::move(n));
}

Var Tape::log(Var a) {
  Node n;
  n.op = Op::kLog;
  n.a = a.id;
  const Tensor& ta = value(a);
  n.value = Tensor::zeros(ta.shape);
  for (size_t i = 0; i < ta.data.size(); ++i) {
    if (!(ta.data[i] > 0.0)) {
      throw std::invalid_argument("log: non-positive input " + std::to_string(ta.data[i]));
    }
    n.value.data[i] = std::log(ta.data[i]);
  }
  return push(std::move(n));
}

Var Tape::square(Var a) {
  Node n;
  n.op = Op::kSquare;
  n.a = a.id;
  const Tensor& ta = value(a);
  n.value = Tensor::zeros(ta.shape);
  for (size_t i = 0; i < ta.data.size(); ++i) n.value.data[i] = ta.data[i] * ta.data[i];
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.c0 = s;
  const Tensor& ta = value(a);
  n.value = Tensor::zeros(ta.shape);
  for (size_t i = 0; i < ta.data.size(); ++i) n.value.data[i] = ta.data[i] * s;
  return push(std::move(n));
}

Var Tape::concat(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 1 || tb.rank() != 1) {
    shape_error("concat", "rank-1 operands required, got " + ta.shape_str() + " and " +
                              tb.shape_str());
  }
  Node n;
  n.op = Op::kConcat;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor::zeros({ta.size() + tb.size()});
  std::copy(ta.data.begin(), ta.data.end(), n.value.data.begin());
  std::copy(tb.data.begin(), tb.data.end(), n.value.data.begin() + ta.size());
  return push(std::move(n));
}

Var Tape::slice(Var a, int64_t offset, int64_t length) {
  const Tensor& ta = value(a);
  if (ta.rank() < 1 || ta.rank() > 2) {
    shape_error("slice", "rank-1 or rank-2 operand required, got " + ta.shape_str());
  }
  const int64_t last = ta.shape.back();
  if (offset < 0 || length <= 0 || offset + length > last) {
    shape_error("slice", "range [" + std::to_string(offset) + ", " +
                             std::to_string(offset + length) + ") out of bounds for " +
                             ta.shape_str());
  }
  Node n;
  n.op = Op::kSlice;
  n.a = a.id;
  n.i0 = offset;
  if (ta.rank() == 1) {
    n.value = Tensor::zeros({length});
    std::copy(ta.data.begin() + offset, ta.data.begin() + offset + length,
              n.value.data.begin());
  } else {
    const int64_t rows = ta.shape[0];
    n.value = Tensor::zeros({rows, length});
    for (int64_t r = 0; r < rows; ++r) {
      std::copy(ta.data.begin() + r * last + offset,
                ta.data.begin() + r * last + offset + length,
                n.value.data.begin() + r * length);
    }
  }
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::kSum;
  n.a = a.id;
  const Tensor& ta = value(a);
  double s = 0.0;
  for (double v : ta.data) s += v;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  const Tensor& ta = value(a);
  if (ta.size() == 0) shape_error("mean", "empty tensor");
  Node n;
  n.op = Op::kMean;
  n.a = a.id;
  double s = 0.0;
  for (double v : ta.data) s += v;
  n.value = Tensor::scalar(s / static_cast<double>(ta.size()));
  return push(std::move(n));
}

Var Tape::clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
  Node n;
  n.op = Op::kClamp;
  n.a = a.id;
  n.c0 = lo;
  n.c1 = hi;
  const Tensor& ta = value(a);
  n.value = Tensor::zeros(ta.shape);
  for (size_t i = 0; i < ta.data.size(); ++i) {
    n.value.data[i] = std::min(std::max(ta.data[i], lo), hi);
  }
  return push(std::move(n));
}

Var Tape::gaussian_sample(Var mu, Var sigma, const Tensor& eps) {
  check_same_shape("gaussian_sample", mu, sigma);
  const Tensor& tm = value(mu);
  if (!tm.same_shape(eps)) {
    shape_error("gaussian_sample",
                "eps shape " + eps.shape_str() + " vs mu " + tm.shape_str());
  }
  const Tensor& ts = value(sigma);
  for (double s : ts.data) {
    if (!(s > 0.0)) {
      throw std::invalid_argument("gaussian_sample: sigma must be positive, got " +
                                  std::to_string(s));
    }
  }
  Node n;
  n.op = Op::kGaussianSample;
  n.a = mu.id;
  n.b = sigma.id;
  n.aux = eps.data;
  n.value = Tensor::zeros(tm.shape);
  for (size_t i = 0; i < tm.data.size(); ++i) {
    n.value.data[i] = tm.data[i] + ts.data[i] * eps.data[i];
  }
  return push(std::move(n));
}

std::vector<double>& Tape::adj(int32_t id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.adjoint.empty()) {
    n.adjoint.assign(val(id).data.size(), 0.0);
  }
  n.seeded = true;
  return n.adjoint;
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.id >= node_count()) {
    throw std::invalid_argument("backward: invalid loss var");
  }
  if (value(loss).size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                value(loss).shape_str());
  }
  for (Node& n : nodes_) {
    n.adjoint.clear();
    n.seeded = false;
  }
  adj(loss.id)[0] = 1.0;

  for (int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.seeded) continue;
    const std::vector<double>& g = n.adjoint;
    switch (n.op) {
      case Op::kLeaf: {
        n.external->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) n.external->grad[i] += g[i];
        break;
      }
      case Op::kConstant:
        break;
      case Op::kMatmul: {
        const Tensor& ta = val(n.a);
        const Tensor& tb = val(n.b);
        const int64_t m = ta.shape[0], k = ta.shape[1];
        MatMap A(ta.data.data(), m, k);
        std::vector<double>& ga = adj(n.a);
        std::vector<double>& gb = adj(n.b);
        if (tb.rank() == 1) {
          VecMap B(tb.data.data(), k);
          VecMap G(g.data(), m);
          MutMatMap(ga.data(), m, k).noalias() += G * B.transpose();
          MutVecMap(gb.data(), k).noalias() += A.transpose() * G;
        } else {
          const int64_t p = tb.shape[1];
          MatMap B(tb.data.data(), k, p);
          MatMap G(g.data(), m, p);
          MutMatMap(ga.data(), m, k).noalias() += G * B.transpose();
          MutMatMap(gb.data(), k, p).noalias() += A.transpose() * G;
        }
        break;
      }
      case Op::kAdd: {
        std::vector<double>& ga = adj(n.a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        std::vector<double>& gb = adj(n.b);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        break;
      }
      case Op::kSub: {
        std::vector<double>& ga = adj(n.a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        std::vector<double>& gb = adj(n.b);
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        break;
      }
      case Op::kMul: {
        const Tensor& ta = val(n.a);
        const Tensor& tb = val(n.b);
        std::vector<double>& ga = adj(n.a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * tb.data[i];
        std::vector<double>& gb = adj(n.b);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ta.data[i];
        break;
      }
      case Op::kTanh: {
        std::vector<double>& ga = adj(n.a);
        for (size_t i = 0; i < g.size(); ++i) {
          const double y = n.value.data[i];
          ga[i] += g[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::kSigmoid: {
        std::vector<double>& ga = adj(n.a);
        for (size_t i = 0; i < g.size(); ++i) {
          const double y = n.value.data[i];
          ga[i] += g[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::kSoftplus: {
        const Tensor& ta = val(n.a);
        std::vector<double>& ga = adj(n.a);
        for (size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * stable_sigmoid(ta.data[i]);
        }
        break;
      }
      case Op::kLog: {
        const Tensor& ta = val(n.a);
        std::vector<double>& ga = adj(n.a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / ta.data[i];
        break;
      }
      case Op::kSquare: {
        const Tensor& ta = val(n.a);
        std::vector<double>& ga = adj(n.a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * 2.0 * ta.data[i];
        break;
      }
      case Op::kScale: {
        std::vector<double>& ga = adj(n.a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.c0;
        break;
      }
      case Op::kConcat: {
        const size_t na = val(n.a).data.size();
        std::vector<double>& ga = adj(n.a);
        for (size_t i = 0; i < na; ++i) ga[i] += g[i];
        std::vector<double>& gb = adj(n.b);
        for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
        break;
      }
      case Op::kSlice: {
        const Tensor& ta = val(n.a);
        const int64_t last = ta.shape.back();
        const int64_t length = n.value.shape.back();
        std::vector<double>& ga = adj(n.a);
        if (ta.rank() == 1) {
          for (int64_t i = 0; i < length; ++i) ga[static_cast<size_t>(n.i0 + i)] += g[i];
        } else {
          const int64_t rows = ta.shape[0];
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t i = 0; i < length; ++i) {
              ga[static_cast<size_t>(r * last + n.i0 + i)] +=
                  g[static_cast<size_t>(r * length + i)];
            }
          }
        }
        break;
      }
      case Op::kSum: {
        std::vector<double>& ga = adj(n.a);
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        break;
      }
      case Op::kMean: {
        std::vector<double>& ga = adj(n.a);
        const double w = g[0] / static_cast<double>(ga.size());
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += w;
        break;
      }
      case Op::kClamp: {
        const Tensor& ta = val(n.a);
        std::vector<double>& ga = adj(n.a);
        for (size_t i = 0; i < g.size(); ++i) {
          if (ta.data[i] > n.c0 && ta.data[i] < n.c1) ga[i] += g[i];
        }
        break;
      }
      case Op::kGaussianSample: {
        std::vector<double>& ga = adj(n.a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        std::vector<double>& gb = adj(n.b);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * n.aux[i];
        break;
      }
    }
  }
}

}  // namespace naomi::ad
