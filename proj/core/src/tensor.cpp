#include "pars/tensor.hpp"

#include <cmath>

#include "pars/error.hpp"

namespace pars::nn {

namespace {
int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw InvalidInput("tensor: negative dimension");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t[0] = v;
  return t;
}

Tensor Tensor::from_rows(int64_t rows, int64_t cols, std::vector<double> data) {
  if (static_cast<int64_t>(data.size()) != rows * cols)
    throw InvalidInput("tensor: data length does not match rows*cols");
  Tensor t;
  t.shape_ = {rows, cols};
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  // Read the size before the move: argument evaluation order is unspecified.
  const int64_t n = static_cast<int64_t>(values.size());
  return from_rows(1, n, std::move(values));
}

int64_t Tensor::rows() const {
  if (shape_.size() != 2) throw InvalidInput("tensor: rows() requires rank 2");
  return shape_[0];
}

int64_t Tensor::cols() const {
  if (shape_.size() != 2) throw InvalidInput("tensor: cols() requires rank 2");
  return shape_[1];
}

double& Tensor::at(int64_t i, int64_t j) {
  return data_[static_cast<size_t>(i * cols() + j)];
}

double Tensor::at(int64_t i, int64_t j) const {
  return data_[static_cast<size_t>(i * cols() + j)];
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace pars::nn
