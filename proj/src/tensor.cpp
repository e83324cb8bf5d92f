#include "oci/tensor.hpp"

#include <algorithm>
#include <cstdio>

namespace oci {

namespace {

std::size_t product(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) {
    // zero-size dimensions are allowed (empty token sequences)
    if (d < 0) throw ValidationError("tensor dimension must be non-negative");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape.empty() || shape.size() > 3)
    throw ValidationError("tensor rank must be 1..3");
  if (data.size() != product(shape))
    throw ValidationError("tensor data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str());
}

Tensor Tensor::zeros(std::vector<int> s) {
  std::size_t n = product(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<int> s, double v) {
  std::size_t n = product(s);
  return Tensor(std::move(s), std::vector<double>(n, v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  int r = static_cast<int>(rows.size());
  int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(r) * c);
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c)
      throw ValidationError("ragged matrix initializer");
    d.insert(d.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(d));
}

Tensor Tensor::row(std::vector<double> v) {
  int n = static_cast<int>(v.size());
  return Tensor({1, n}, std::move(v));
}

Tensor Tensor::identity(int n) {
  Tensor t = zeros({n, n});
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::numel() const { return data.size(); }

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(),
                     [](double v) { return std::isfinite(v); });
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data) m = std::max(m, std::abs(v));
  return m;
}

void init_glorot_uniform(Tensor& t, int fan_in, int fan_out, Rng& rng) {
  double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-a, a);
}

Tensor sinusoidal_posenc(int length, int dim) {
  if (length == 0) return Tensor({0, dim}, {});
  Tensor pe = Tensor::zeros({length, dim});
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim; i += 2) {
      double div = std::pow(10000.0, static_cast<double>(i) / dim);
      pe.at(pos, i) = std::sin(pos / div);
      if (i + 1 < dim) pe.at(pos, i + 1) = std::cos(pos / div);
    }
  }
  return pe;
}

Tensor grid_posenc(int width, int height, int dim) {
  Tensor pe = Tensor::zeros({width * height, dim});
  for (int x = 0; x < width; ++x) {
    for (int y = 0; y < height; ++y) {
      int row = x * height + y;
      double xn = (x + 0.5) / width;
      double yn = (y + 0.5) / height;
      double cx = 2.0 * xn - 1.0;
      double cy = 2.0 * yn - 1.0;
      // Linear and quadratic coordinate columns. The squares let a
      // dot-product attention score express -(t - x)^2 = 2tx - x^2 - t^2
      // with the query-side t^2 term cancelling inside a row softmax, so
      // "attend to the cell nearest a queried coordinate" is linearly
      // representable.
      const double quad[5] = {cx, cy, cx * cx, cy * cy, cx * cy};
      for (int i = 0; i < 5 && i < dim; ++i) pe.at(row, i) = quad[i];
      // sin/cos pairs with doubling frequency, alternating axes
      int k = 0;
      for (int i = 5; i + 1 < dim; i += 2, ++k) {
        double freq = std::pow(2.0, k / 2) * 3.14159265358979323846;
        double coord = (k % 2 == 0) ? xn : yn;
        pe.at(row, i) = std::sin(freq * coord);
        pe.at(row, i + 1) = std::cos(freq * coord);
      }
    }
  }
  return pe;
}

}  // namespace oci
