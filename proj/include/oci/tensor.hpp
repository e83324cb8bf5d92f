#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "oci/errors.hpp"
#include "oci/rng.hpp"

namespace oci {

/// Dense row-major double tensor, rank 1..3. Plain value type; all the
/// differentiable structure lives on the Tape, not here.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d);

  static Tensor zeros(std::vector<int> s);
  static Tensor full(std::vector<int> s, double v);
  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
  /// Row-major 2-D construction from nested braces, for tests mostly.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::vector<double> v);
  static Tensor identity(int n);

  int rank() const { return static_cast<int>(shape.size()); }
  std::size_t numel() const;
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  std::string shape_str() const;

  /// Rank-2 accessors.
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  bool all_finite() const;
  double max_abs() const;

  bool operator==(const Tensor& o) const = default;
};

/// Fills t with uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)).
void init_glorot_uniform(Tensor& t, int fan_in, int fan_out, Rng& rng);

/// Sinusoidal position encoding, one row per position, dim columns.
Tensor sinusoidal_posenc(int length, int dim);

/// Position encoding for a W x H cell grid, flattened row-major (token
/// index = x * H + y). The first five columns carry the cell center in
/// [-1, 1] as (x, y, x^2, y^2, xy); the rest are sin/cos pairs of both
/// axes. The quadratic columns make nearest-coordinate attention
/// linearly representable (see grid_posenc in tensor.cpp).
Tensor grid_posenc(int width, int height, int dim);

}  // namespace oci
