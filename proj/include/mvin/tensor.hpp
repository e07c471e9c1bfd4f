#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#include "mvin/common.hpp"
#include "mvin/rng.hpp"

namespace mvin {

/// Dense 64-bit float tensor. Rank 1 for vectors, rank 2 for matrices,
/// rank 3 only for the per-relation matrix table.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(count(shape), 0.0);
  }
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    check(data.size() == count(shape), "tensor data/shape mismatch: ",
          data.size(), " values for shape of ", count(shape));
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vec(std::vector<double> d) {
    std::size_t n = d.size();
    return Tensor({n}, std::move(d));
  }

  std::size_t size() const { return data.size(); }

  double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  /// Rows of the trailing block, e.g. row(i) of an [n, s] table or the
  /// [s, s] block i of an [n, s, s] table.
  std::size_t row_size() const {
    std::size_t n = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) n *= shape[i];
    return n;
  }
  double* row(std::size_t i) { return data.data() + i * row_size(); }
  const double* row(std::size_t i) const { return data.data() + i * row_size(); }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (double& v : data) v = rng.uniform(lo, hi);
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace mvin
