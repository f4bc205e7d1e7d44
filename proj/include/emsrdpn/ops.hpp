// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Forward and backward kernels for the differentiable ops the network is
// built from. All reductions run in a fixed order so repeated runs are
// bit-identical. Convolutions lower to im2col + Eigen GEMM.

#ifndef EMSRDPN_OPS_HPP
#define EMSRDPN_OPS_HPP

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "emsrdpn/tensor.hpp"

namespace emsrdpn {

namespace stats {
// Instrumentation counters, reset manually by callers that measure. A conv
// contributes (k*k*c_in + 1)*c_out*h*w multiply-accumulates (the +1 is the
// bias add), matching the analytic accounting convention.
inline std::uint64_t conv_macs = 0;
inline std::uint64_t dpu_evals = 0;

inline void reset() {
  conv_macs = 0;
  dpu_evals = 0;
}
}  // namespace stats

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
inline void debug_check_finite(const Tensor<S>& t, const char* op) {
#ifndef NDEBUG
  if (!t.all_finite()) {
    throw std::runtime_error(std::string(op) + ": non-finite output value");
  }
#else
  (void)t;
  (void)op;
#endif
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation with zero same-padding, kernels 1x1 or 3x3.
// ---------------------------------------------------------------------------

template <typename S>
inline void conv2d_check(const Tensor<S>& x, const Tensor<S>& w,
                         const Tensor<S>& b, int pad) {
  const int k = w.shape.h;
  if (w.shape.w != k || (k != 1 && k != 3)) {
    throw std::invalid_argument("conv2d: kernel must be 1x1 or 3x3, weight " +
                                w.shape.str());
  }
  if (w.shape.c != x.shape.c) {
    throw std::invalid_argument(
        "conv2d: input channels do not match weight, input " + x.shape.str() +
        " weight " + w.shape.str());
  }
  if (pad != (k - 1) / 2) {
    throw std::invalid_argument("conv2d: padding must be (k-1)/2, got " +
                                std::to_string(pad));
  }
  if (b.shape.n != 1 || b.shape.c != w.shape.n || b.shape.h != 1 ||
      b.shape.w != 1) {
    throw std::invalid_argument("conv2d: bias shape " + b.shape.str() +
                                " does not match weight " + w.shape.str());
  }
}

// cols is (c_in*k*k) x (h*w), row index ci*k*k + dy*k + dx, col index y*w + x.
template <typename S>
inline void im2col(const S* src, int c_in, int h, int w, int k, int pad,
                   S* cols) {
  const int hw = h * w;
  for (int ci = 0; ci < c_in; ++ci) {
    const S* plane = src + static_cast<std::size_t>(ci) * hw;
    for (int dy = 0; dy < k; ++dy) {
      for (int dx = 0; dx < k; ++dx) {
        S* row = cols + (static_cast<std::size_t>(ci) * k * k + dy * k + dx) *
                            hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy - pad;
          if (sy < 0 || sy >= h) {
            std::fill(row + std::size_t(y) * w, row + std::size_t(y + 1) * w,
                      S(0));
            continue;
          }
          const S* srow = plane + static_cast<std::size_t>(sy) * w;
          S* drow = row + static_cast<std::size_t>(y) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + dx - pad;
            drow[x] = (sx < 0 || sx >= w) ? S(0) : srow[sx];
          }
        }
      }
    }
  }
}

// Scatter-add transpose of im2col.
template <typename S>
inline void col2im(const S* cols, int c_in, int h, int w, int k, int pad,
                   S* dst) {
  const int hw = h * w;
  for (int ci = 0; ci < c_in; ++ci) {
    S* plane = dst + static_cast<std::size_t>(ci) * hw;
    for (int dy = 0; dy < k; ++dy) {
      for (int dx = 0; dx < k; ++dx) {
        const S* row =
            cols + (static_cast<std::size_t>(ci) * k * k + dy * k + dx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy - pad;
          if (sy < 0 || sy >= h) continue;
          S* drow = plane + static_cast<std::size_t>(sy) * w;
          const S* srow = row + static_cast<std::size_t>(y) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + dx - pad;
            if (sx < 0 || sx >= w) continue;
            drow[sx] += srow[x];
          }
        }
      }
    }
  }
}

template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& x, const Tensor<S>& w,
                         const Tensor<S>& b, int pad) {
  conv2d_check(x, w, b, pad);
  const int n = x.shape.n, c_in = x.shape.c, h = x.shape.h, ww = x.shape.w;
  const int c_out = w.shape.n, k = w.shape.h;
  const int hw = h * ww;
  Tensor<S> out(n, c_out, h, ww);

  stats::conv_macs += (std::uint64_t(k) * k * c_in + 1) *
                      std::uint64_t(c_out) * hw * n;

  Eigen::Map<const MatRM<S>> wmat(w.data.data(), c_out, c_in * k * k);
  std::vector<S> colbuf;
  if (k != 1) colbuf.resize(static_cast<std::size_t>(c_in) * k * k * hw);

  for (int i = 0; i < n; ++i) {
    const S* src = x.data.data() + static_cast<std::size_t>(i) * c_in * hw;
    S* dst = out.data.data() + static_cast<std::size_t>(i) * c_out * hw;
    Eigen::Map<MatRM<S>> omat(dst, c_out, hw);
    if (k == 1) {
      Eigen::Map<const MatRM<S>> cols(src, c_in, hw);
      omat.noalias() = wmat * cols;
    } else {
      im2col(src, c_in, h, ww, k, pad, colbuf.data());
      Eigen::Map<const MatRM<S>> cols(colbuf.data(), c_in * k * k, hw);
      omat.noalias() = wmat * cols;
    }
    for (int o = 0; o < c_out; ++o) {
      omat.row(o).array() += b.data[static_cast<std::size_t>(o)];
    }
  }
  debug_check_finite(out, "conv2d");
  return out;
}

// Accumulates gradients; any of gx/gw/gb may be null.
template <typename S>
void conv2d_backward(const Tensor<S>& x, const Tensor<S>& w, int pad,
                     const Tensor<S>& gout, Tensor<S>* gx, Tensor<S>* gw,
                     Tensor<S>* gb) {
  const int n = x.shape.n, c_in = x.shape.c, h = x.shape.h, ww = x.shape.w;
  const int c_out = w.shape.n, k = w.shape.h;
  const int hw = h * ww;

  Eigen::Map<const MatRM<S>> wmat(w.data.data(), c_out, c_in * k * k);
  std::vector<S> colbuf, colgrad;
  if (k != 1) {
    colbuf.resize(static_cast<std::size_t>(c_in) * k * k * hw);
    if (gx) colgrad.resize(colbuf.size());
  }

  for (int i = 0; i < n; ++i) {
    const S* src = x.data.data() + static_cast<std::size_t>(i) * c_in * hw;
    const S* gsrc =
        gout.data.data() + static_cast<std::size_t>(i) * c_out * hw;
    Eigen::Map<const MatRM<S>> gmat(gsrc, c_out, hw);

    if (gb) {
      for (int o = 0; o < c_out; ++o) {
        gb->data[static_cast<std::size_t>(o)] += gmat.row(o).sum();
      }
    }
    if (k == 1) {
      Eigen::Map<const MatRM<S>> cols(src, c_in, hw);
      if (gw) {
        Eigen::Map<MatRM<S>> gwmat(gw->data.data(), c_out, c_in);
        gwmat.noalias() += gmat * cols.transpose();
      }
      if (gx) {
        S* gdst = gx->data.data() + static_cast<std::size_t>(i) * c_in * hw;
        Eigen::Map<MatRM<S>> gxmat(gdst, c_in, hw);
        gxmat.noalias() += wmat.transpose() * gmat;
      }
    } else {
      im2col(src, c_in, h, ww, k, pad, colbuf.data());
      Eigen::Map<const MatRM<S>> cols(colbuf.data(), c_in * k * k, hw);
      if (gw) {
        Eigen::Map<MatRM<S>> gwmat(gw->data.data(), c_out, c_in * k * k);
        gwmat.noalias() += gmat * cols.transpose();
      }
      if (gx) {
        Eigen::Map<MatRM<S>> cg(colgrad.data(), c_in * k * k, hw);
        cg.noalias() = wmat.transpose() * gmat;
        S* gdst = gx->data.data() + static_cast<std::size_t>(i) * c_in * hw;
        col2im(colgrad.data(), c_in, h, ww, k, pad, gdst);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise and channel-layout ops.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> relu_forward(const Tensor<S>& x) {
  Tensor<S> out(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    out.data[i] = x.data[i] > S(0) ? x.data[i] : S(0);
  }
  return out;
}

// Masks gradient where the forward input was <= 0 (subgradient 0 at 0).
template <typename S>
void relu_backward(const Tensor<S>& x, const Tensor<S>& gout, Tensor<S>* gx) {
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    if (x.data[i] > S(0)) gx->data[i] += gout.data[i];
  }
}

template <typename S>
Tensor<S> add_forward(const Tensor<S>& a, const Tensor<S>& b) {
  if (!(a.shape == b.shape)) {
    throw std::invalid_argument("add: shape mismatch " + a.shape.str() +
                                " vs " + b.shape.str());
  }
  Tensor<S> out(a.shape);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    out.data[i] = a.data[i] + b.data[i];
  }
  debug_check_finite(out, "add");
  return out;
}

template <typename S>
Tensor<S> concat_forward(std::span<const Tensor<S>* const> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = parts[0]->shape;
  int c_total = 0;
  for (const Tensor<S>* p : parts) {
    if (p->shape.n != s0.n || p->shape.h != s0.h || p->shape.w != s0.w) {
      throw std::invalid_argument("concat: spatial/batch mismatch " +
                                  s0.str() + " vs " + p->shape.str());
    }
    c_total += p->shape.c;
  }
  Tensor<S> out(s0.n, c_total, s0.h, s0.w);
  const std::size_t hw = static_cast<std::size_t>(s0.h) * s0.w;
  for (int i = 0; i < s0.n; ++i) {
    std::size_t off = static_cast<std::size_t>(i) * c_total * hw;
    for (const Tensor<S>* p : parts) {
      const std::size_t sz = static_cast<std::size_t>(p->shape.c) * hw;
      const S* src = p->data.data() + static_cast<std::size_t>(i) * sz;
      std::copy(src, src + sz, out.data.begin() + off);
      off += sz;
    }
  }
  return out;
}

template <typename S>
std::vector<Tensor<S>> split_forward(const Tensor<S>& x,
                                     std::span<const int> widths) {
  int sum = 0;
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("split: widths must be > 0");
    sum += w;
  }
  if (sum != x.shape.c) {
    throw std::invalid_argument(
        "split: widths sum to " + std::to_string(sum) + " but input has " +
        std::to_string(x.shape.c) + " channels, input " + x.shape.str());
  }
  std::vector<Tensor<S>> out;
  out.reserve(widths.size());
  const std::size_t hw = static_cast<std::size_t>(x.shape.h) * x.shape.w;
  int c0 = 0;
  for (int w : widths) {
    Tensor<S> part(x.shape.n, w, x.shape.h, x.shape.w);
    for (int i = 0; i < x.shape.n; ++i) {
      const S* src = x.data.data() +
                     (static_cast<std::size_t>(i) * x.shape.c + c0) * hw;
      std::copy(src, src + static_cast<std::size_t>(w) * hw,
                part.data.begin() + static_cast<std::size_t>(i) * w * hw);
    }
    out.push_back(std::move(part));
    c0 += w;
  }
  return out;
}

// out[n][k][y*r+dy][x*r+dx] = in[n][k*r*r + dy*r + dx][y][x]
template <typename S>
Tensor<S> pixel_shuffle_forward(const Tensor<S>& x, int r) {
  if (r < 1 || x.shape.c % (r * r) != 0) {
    throw std::invalid_argument("pixel_shuffle: channels " +
                                std::to_string(x.shape.c) +
                                " not divisible by r^2, r=" +
                                std::to_string(r) + ", input " +
                                x.shape.str());
  }
  if (r == 1) return x;
  const int n = x.shape.n, h = x.shape.h, w = x.shape.w;
  const int c_out = x.shape.c / (r * r);
  Tensor<S> out(n, c_out, h * r, w * r);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < c_out; ++k) {
      for (int dy = 0; dy < r; ++dy) {
        for (int dx = 0; dx < r; ++dx) {
          const int ci = k * r * r + dy * r + dx;
          for (int y = 0; y < h; ++y) {
            const S* src = x.data.data() + x.index(i, ci, y, 0);
            S* dst = out.data.data() + out.index(i, k, y * r + dy, dx);
            for (int xx = 0; xx < w; ++xx) {
              dst[static_cast<std::size_t>(xx) * r] = src[xx];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename S>
void pixel_shuffle_backward(const Shape& in_shape, int r, const Tensor<S>& gout,
                            Tensor<S>* gx) {
  if (r == 1) {
    for (std::size_t i = 0; i < gout.data.size(); ++i) {
      gx->data[i] += gout.data[i];
    }
    return;
  }
  const int n = in_shape.n, h = in_shape.h, w = in_shape.w;
  const int c_out = in_shape.c / (r * r);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < c_out; ++k) {
      for (int dy = 0; dy < r; ++dy) {
        for (int dx = 0; dx < r; ++dx) {
          const int ci = k * r * r + dy * r + dx;
          for (int y = 0; y < h; ++y) {
            const S* src = gout.data.data() + gout.index(i, k, y * r + dy, dx);
            S* dst = gx->data.data() + gx->index(i, ci, y, 0);
            for (int xx = 0; xx < w; ++xx) {
              dst[xx] += src[static_cast<std::size_t>(xx) * r];
            }
          }
        }
      }
    }
  }
}

// Mean absolute error over all elements; accumulated in double.
template <typename S>
S mae_forward(const Tensor<S>& pred, const Tensor<S>& target) {
  if (!(pred.shape == target.shape)) {
    throw std::invalid_argument("mae: shape mismatch " + pred.shape.str() +
                                " vs " + target.shape.str());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    acc += std::abs(static_cast<double>(pred.data[i]) -
                    static_cast<double>(target.data[i]));
  }
  return static_cast<S>(acc / static_cast<double>(pred.data.size()));
}

template <typename S>
void mae_backward(const Tensor<S>& pred, const Tensor<S>& target, S gscale,
                  Tensor<S>* gpred, Tensor<S>* gtarget) {
  const S inv_n = gscale / static_cast<S>(pred.data.size());
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const S d = pred.data[i] - target.data[i];
    const S g = d > S(0) ? inv_n : (d < S(0) ? -inv_n : S(0));
    if (gpred) gpred->data[i] += g;
    if (gtarget) gtarget->data[i] -= g;
  }
}

// ---------------------------------------------------------------------------
// Dihedral-group transforms (4 rotations x optional vertical flip).
// Code layout: bit 2 = vertical flip applied first, bits 0..1 = number of
// 90-degree counterclockwise rotations applied after. Code 0 is the identity.
// ---------------------------------------------------------------------------

struct DihedralDims {
  int h;
  int w;
};

inline DihedralDims dihedral_dims(int code, int h, int w) {
  return ((code & 1) == 0) ? DihedralDims{h, w} : DihedralDims{w, h};
}

// Maps output pixel (y, x) back to its source pixel in the (h, w) input.
inline void dihedral_source(int code, int h, int w, int y, int x, int* sy,
                            int* sx) {
  int p, q;
  switch (code & 3) {
    case 1:  // rot90 ccw: out(y, x) = a(x, w-1-y)
      p = x;
      q = (w - 1) - y;
      break;
    case 2:
      p = (h - 1) - y;
      q = (w - 1) - x;
      break;
    case 3:  // rot270 ccw: out(y, x) = a(h-1-x, y)
      p = (h - 1) - x;
      q = y;
      break;
    default:
      p = y;
      q = x;
      break;
  }
  *sy = (code & 4) ? (h - 1) - p : p;
  *sx = q;
}

// Reflections are involutions; pure rotations invert to 4 - rot.
inline int dihedral_inverse(int code) {
  if (code & 4) return code;
  return (4 - (code & 3)) & 3;
}

template <typename S>
Tensor<S> dihedral_forward(const Tensor<S>& x, int code) {
  if (code < 0 || code > 7) {
    throw std::invalid_argument("dihedral: code must be in 0..7, got " +
                                std::to_string(code));
  }
  if (code == 0) return x;
  const int h = x.shape.h, w = x.shape.w;
  const DihedralDims d = dihedral_dims(code, h, w);
  Tensor<S> out(x.shape.n, x.shape.c, d.h, d.w);
  for (int i = 0; i < x.shape.n; ++i) {
    for (int c = 0; c < x.shape.c; ++c) {
      for (int y = 0; y < d.h; ++y) {
        S* dst = out.data.data() + out.index(i, c, y, 0);
        for (int xx = 0; xx < d.w; ++xx) {
          int sy, sx;
          dihedral_source(code, h, w, y, xx, &sy, &sx);
          dst[xx] = x.data[x.index(i, c, sy, sx)];
        }
      }
    }
  }
  return out;
}

}  // namespace emsrdpn

#endif  // EMSRDPN_OPS_HPP
