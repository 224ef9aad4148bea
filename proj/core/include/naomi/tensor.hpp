#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace naomi {

// Dense row-major tensor of doubles with an optional same-shape gradient
// buffer. Rank is 0 (scalar), 1 (vector) or 2 (matrix) in practice.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until ensure_grad()

  Tensor() = default;
  Tensor(std::vector<int64_t> shape_in, std::vector<double> data_in);

  static Tensor zeros(std::vector<int64_t> shape);
  static Tensor full(std::vector<int64_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(int64_t rows, int64_t cols, std::vector<double> values);

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_str() const;

  double item() const;  // value of a single-element tensor

  void ensure_grad();
  void zero_grad();
};

int64_t shape_size(const std::vector<int64_t>& shape);
std::string shape_to_string(const std::vector<int64_t>& shape);

}  // namespace naomi
