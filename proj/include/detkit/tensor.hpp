#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace detkit {

// Dense row-major tensor of doubles. Deliberately minimal: just enough
// arithmetic for the attention and loss modules, double precision
// throughout, deterministic accumulation order.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_, double fill = 0.0);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  std::size_t ndim() const { return shape.size(); }
  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t axis) const;

  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j, std::size_t k);
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

// Standard matrix product; per output entry the sum runs over k ascending,
// so results are reproducible bit-for-bit on one platform.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

// exp(x - rowmax) / rowsum; rows sum to 1 within 1e-12.
Tensor softmax_rows(const Tensor& a);

// Output row j is input row idx[j]; duplicates allowed, out-of-range throws.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx);

// Central differences (f(x+eps*e_i) - f(x-eps*e_i)) / (2 eps) per coordinate.
// Throws if f returns a non-finite value.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double eps = 1e-5);

}  // namespace detkit
