#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "maskscope/errors.h"

namespace maskscope {

// Sentinel for fully suppressed attention logits. softmax_rows maps rows that
// are entirely kNegInf to all-zero rows instead of NaN.
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Dense row-major tensor of 64-bit reals.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_in);
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in);

  static Tensor zeros(std::vector<std::size_t> shape_in) { return Tensor(std::move(shape_in)); }
  static Tensor full(std::vector<std::size_t> shape_in, double value);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  double& operator()(std::size_t i) { return data[i]; }
  double operator()(std::size_t i) const { return data[i]; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  Tensor reshaped(std::vector<std::size_t> new_shape) const;

  bool operator==(const Tensor& other) const = default;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

// Rank-2 helpers. Shapes are validated; mismatches throw ShapeError.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Row-wise stable softmax. Rows containing only kNegInf become all zeros.
Tensor softmax_rows(const Tensor& t);

// Elementwise logistic.
Tensor sigmoid_map(const Tensor& t);
double sigmoid(double x);

// -sum p ln p in nats, with 0*ln 0 := 0. Renormalizes when the sum drifts
// more than 1e-9 from 1; negative entries throw.
double shannon_entropy(const std::vector<double>& p);

double tensor_sum(const Tensor& t);
double tensor_max(const Tensor& t);
Tensor hadamard(const Tensor& a, const Tensor& b);

// y += alpha * x
void axpy(double alpha, const Tensor& x, Tensor& y);

}  // namespace maskscope
