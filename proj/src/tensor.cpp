#include "detkit/tensor.hpp"

#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace detkit {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor extents must be positive");
    n *= d;
  }
  return n;
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.ndim() != 2)
    throw std::invalid_argument(std::string(what) + ": expected a 2-d tensor");
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, double fill)
    : shape(std::move(shape_)), data(shape_product(shape), fill) {}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, fill);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape.size()) throw std::out_of_range("tensor axis out of range");
  return shape[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  assert(ndim() == 2 && i < shape[0] && j < shape[1]);
  return data[i * shape[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  assert(ndim() == 2 && i < shape[0] && j < shape[1]);
  return data[i * shape[1] + j];
}

double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
  assert(ndim() == 3 && i < shape[0] && j < shape[1] && k < shape[2]);
  return data[(i * shape[1] + j) * shape[2] + k];
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  assert(ndim() == 3 && i < shape[0] && j < shape[1] && k < shape[2]);
  return data[(i * shape[1] + j) * shape[2] + k];
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  if (a.shape[1] != b.shape[0])
    throw std::invalid_argument("matmul: inner dimensions disagree (" +
                                std::to_string(a.shape[1]) + " vs " +
                                std::to_string(b.shape[0]) + ")");
  const std::size_t m = a.shape[0], kk = a.shape[1], n = b.shape[1];
  Tensor c = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kk; ++k) acc += a.at(i, k) * b.at(k, j);
      c.at(i, j) = acc;
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor t = Tensor::matrix(a.shape[1], a.shape[0]);
  for (std::size_t i = 0; i < a.shape[0]; ++i)
    for (std::size_t j = 0; j < a.shape[1]; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor softmax_rows(const Tensor& a) {
  require_matrix(a, "softmax_rows");
  Tensor out = a;
  const std::size_t rows = a.shape[0], cols = a.shape[1];
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = a.at(i, 0);
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, a.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double e = std::exp(a.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) /= sum;
  }
  return out;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx) {
  require_matrix(a, "gather_rows");
  const std::size_t cols = a.shape[1];
  Tensor out = Tensor::matrix(idx.size(), cols);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] >= a.shape[0])
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[j]) +
                              " out of range for " + std::to_string(a.shape[0]) +
                              " rows");
    for (std::size_t c = 0; c < cols; ++c) out.at(j, c) = a.at(idx[j], c);
  }
  return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double eps) {
  if (eps <= 0) throw std::invalid_argument("finite_diff_grad: eps must be > 0");
  Tensor grad(x.shape, 0.0);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe.data[i];
    probe.data[i] = saved + eps;
    const double hi = f(probe);
    probe.data[i] = saved - eps;
    const double lo = f(probe);
    probe.data[i] = saved;
    if (!std::isfinite(hi) || !std::isfinite(lo))
      throw std::runtime_error("finite_diff_grad: non-finite function value");
    grad.data[i] = (hi - lo) / (2.0 * eps);
  }
  return grad;
}

}  // namespace detkit
