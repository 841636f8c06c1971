#include "maskscope/tensor.h"

#include <cmath>
#include <sstream>

namespace maskscope {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape_in)
    : shape(std::move(shape_in)), data(shape_numel(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (data.size() != shape_numel(shape)) {
    throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
}

Tensor Tensor::full(std::vector<std::size_t> shape_in, double value) {
  Tensor t(std::move(shape_in));
  for (double& v : t.data) v = value;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape));
  }
  return shape[axis];
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(shape) + " as " + shape_str(new_shape));
  }
  Tensor out;
  out.shape = std::move(new_shape);
  out.data = data;
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: expected rank-2 operands, got " + shape_str(a.shape) + " x " +
                     shape_str(b.shape));
  }
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape) + " x " +
                     shape_str(b.shape));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += av * b(p, j);
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank-2, got " + shape_str(a.shape));
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor softmax_rows(const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError("softmax_rows: expected rank-2, got " + shape_str(t.shape));
  }
  const std::size_t r = t.rows(), c = t.cols();
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double m = kNegInf;
    for (std::size_t j = 0; j < c; ++j) m = std::max(m, t(i, j));
    if (m == kNegInf) continue;  // fully masked row stays all-zero
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(t(i, j) - m);  // exp(-inf) == 0 handles partial masks
      out(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= sum;
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid_map(const Tensor& t) {
  Tensor out;
  out.shape = t.shape;
  out.data.resize(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) out.data[i] = sigmoid(t.data[i]);
  return out;
}

double shannon_entropy(const std::vector<double>& p) {
  double sum = 0.0;
  for (double v : p) {
    if (v < 0.0) throw ValidationError("shannon_entropy: negative probability " + std::to_string(v));
    sum += v;
  }
  if (sum <= 0.0) throw ValidationError("shannon_entropy: probabilities sum to zero");
  const double scale = (std::abs(sum - 1.0) > 1e-9) ? 1.0 / sum : 1.0;
  double h = 0.0;
  for (double v : p) {
    const double q = v * scale;
    if (q > 0.0) h -= q * std::log(q);
  }
  return h;
}

double tensor_sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v;
  return s;
}

double tensor_max(const Tensor& t) {
  if (t.numel() == 0) throw ShapeError("tensor_max: empty tensor");
  double m = t.data[0];
  for (double v : t.data) m = std::max(m, v);
  return m;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw ShapeError("hadamard: shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  }
  Tensor out;
  out.shape = a.shape;
  out.data.resize(a.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  if (x.shape != y.shape) {
    throw ShapeError("axpy: shape mismatch " + shape_str(x.shape) + " vs " + shape_str(y.shape));
  }
  for (std::size_t i = 0; i < x.numel(); ++i) y.data[i] += alpha * x.data[i];
}

}  // namespace maskscope
