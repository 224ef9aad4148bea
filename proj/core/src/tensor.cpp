#include "naomi/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace naomi {

int64_t shape_size(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(std::vector<int64_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (shape_size(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("Tensor: shape " + shape_to_string(shape) +
                                " does not match data length " +
                                std::to_string(data.size()));
  }
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
  std::vector<double> d(static_cast<size_t>(shape_size(shape)), 0.0);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  std::vector<double> d(static_cast<size_t>(shape_size(shape)), value);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  int64_t n = static_cast<int64_t>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(int64_t rows, int64_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

double Tensor::item() const {
  if (data.size() != 1) {
    throw std::invalid_argument("Tensor::item: tensor has " +
                                std::to_string(data.size()) + " elements");
  }
  return data[0];
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

}  // namespace naomi
