#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace pars::nn {

// Dense row-major array of doubles. Shapes are explicit; nearly everything in
// the network path is rank 2 (rows x features), with [1] used for scalars.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, double v);
  static Tensor scalar(double v);
  static Tensor from_rows(int64_t rows, int64_t cols, std::vector<double> data);
  static Tensor row(std::vector<double> values);  // shape [1, n]

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // Rank-2 accessors.
  int64_t rows() const;
  int64_t cols() const;
  double& at(int64_t i, int64_t j);
  double at(int64_t i, int64_t j) const;

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  void fill(double v);
  bool all_finite() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

}  // namespace pars::nn
