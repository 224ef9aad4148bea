#pragma once

#include <cstdint>
#include <vector>

#include "naomi/tensor.hpp"

namespace naomi::ad {

// Handle to a node on a Tape. Only meaningful for the tape that produced it.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense tensors. Nodes are recorded in topological
// order by construction; backward() sweeps them exactly once in reverse and
// accumulates leaf adjoints into the registered tensors' grad buffers.
//
// The op set is deliberately small: matmul, elementwise add/sub/mul, tanh,
// sigmoid, softplus, log, square, scalar scale, last-dim concat/slice,
// sum/mean reductions, clamp and the reparameterized gaussian_sample.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers an external tensor as a differentiable leaf. backward()
  // accumulates into t->grad; the tensor must outlive the tape and must not
  // be mutated while the tape is alive.
  Var leaf(Tensor* t);

  // Value tracked on the tape with no gradient flow.
  Var constant(Tensor value);

  Var matmul(Var a, Var b);   // (m,k)x(k,n)->(m,n) or (m,k)x(k)->(m)
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);      // elementwise
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var log(Var a);             // hard error on non-positive input
  Var square(Var a);
  Var scale(Var a, double s);
  Var concat(Var a, Var b);   // last dim; rank-1 operands
  Var slice(Var a, int64_t offset, int64_t length);  // last dim
  Var sum(Var a);             // full reduction to scalar
  Var mean(Var a);
  Var clamp(Var a, double lo, double hi);  // zero gradient where clamped
  // mu + sigma (elementwise) eps, with eps treated as a constant draw, so
  // gradients flow through mu and sigma only.
  Var gaussian_sample(Var mu, Var sigma, const Tensor& eps);

  const Tensor& value(Var v) const;
  // d(loss)/d(leaf) accumulated into each leaf tensor's grad buffer.
  // Repeated calls without zeroing the leaf grads accumulate.
  void backward(Var loss);

  int64_t node_count() const { return static_cast<int64_t>(nodes_.size()); }

 private:
  enum class Op : uint8_t {
    kLeaf,
    kConstant,
    kMatmul,
    kAdd,
    kSub,
    kMul,
    kTanh,
    kSigmoid,
    kSoftplus,
    kLog,
    kSquare,
    kScale,
    kConcat,
    kSlice,
    kSum,
    kMean,
    kClamp,
    kGaussianSample,
  };

  struct Node {
    Op op;
    int32_t a = -1;
    int32_t b = -1;
    Tensor value;               // unused for kLeaf (external holds the value)
    Tensor* external = nullptr; // kLeaf only
    double c0 = 0.0;            // scale factor / clamp lo
    double c1 = 0.0;            // clamp hi
    int64_t i0 = 0;             // slice offset
    std::vector<double> aux;    // gaussian eps
    std::vector<double> adjoint;  // allocated during backward
    bool seeded = false;          // adjoint has received a contribution
  };

  const Tensor& val(int32_t id) const;
  Var push(Node node);
  void check_same_shape(const char* op, Var a, Var b) const;
  std::vector<double>& adj(int32_t id);

  std::vector<Node> nodes_;
};

}  // namespace naomi::ad
