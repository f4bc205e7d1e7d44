// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef EMSRDPN_TENSOR_HPP
#define EMSRDPN_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace emsrdpn {

/// Shape of a dense 4-D tensor: (batch, channels, rows, cols).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::int64_t elems() const {
    return std::int64_t(n) * c * h * w;
  }
  bool operator==(const Shape& o) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

/// Dense 4-D array in row-major (n, c, h, w) order. Scalar is float for
/// training/inference and double for gradient-check mode. Tensors are treated
/// as immutable once an op has consumed them.
template <typename Scalar>
struct Tensor {
  Shape shape;
  std::vector<Scalar> data;

  Tensor() = default;

  Tensor(int n, int c, int h, int w) : shape{n, c, h, w} {
    if (n < 1 || c < 1 || h < 1 || w < 1) {
      throw std::invalid_argument("tensor: all dimensions must be >= 1, got " +
                                  shape.str());
    }
    data.assign(static_cast<std::size_t>(shape.elems()), Scalar(0));
  }

  explicit Tensor(const Shape& s) : Tensor(s.n, s.c, s.h, s.w) {}

  static Tensor full(int n, int c, int h, int w, Scalar v) {
    Tensor t(n, c, h, w);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor scalar(Scalar v) {
    Tensor t(1, 1, 1, 1);
    t.data[0] = v;
    return t;
  }

  std::int64_t elems() const { return shape.elems(); }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape.c + c) * shape.h + y) *
               shape.w +
           x;
  }

  Scalar& at(int n, int c, int y, int x) { return data[index(n, c, y, x)]; }
  Scalar at(int n, int c, int y, int x) const {
    return data[index(n, c, y, x)];
  }

  /// Exact elementwise equality (bitwise for identical value patterns).
  bool equals(const Tensor& o) const {
    return shape == o.shape && data == o.data;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      out.data[i] = static_cast<T>(data[i]);
    }
    return out;
  }

  bool all_finite() const {
    for (Scalar v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Deterministic standard-normal sampler (Box-Muller over mt19937_64).
/// std::normal_distribution is implementation-defined, this is not.
class NormalSampler {
 public:
  explicit NormalSampler(std::mt19937_64& rng) : rng_(rng) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0,1], u2 in [0,1)
    const double u1 = (static_cast<double>(rng_() >> 11) + 1.0) * 0x1p-53;
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64& rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Uniform draw from [0, n). Modulo bias is below 1e-18 for any n used here.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  return rng() % n;
}

}  // namespace emsrdpn

#endif  // EMSRDPN_TENSOR_HPP
