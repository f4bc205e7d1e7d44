// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#include "emsrdpn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace emsrdpn {

namespace {

// Y plane cropped by `border` on every side, as doubles.
std::vector<double> prep(const Image& img, int border, int* h, int* w) {
  const Image y = rgb_to_ycbcr_y(img);
  const int ch = y.h - 2 * border;
  const int cw = y.w - 2 * border;
  if (ch < 1 || cw < 1) {
    throw std::invalid_argument("metrics: border " + std::to_string(border) +
                                " leaves no pixels");
  }
  std::vector<double> out(static_cast<std::size_t>(ch) * cw);
  for (int r = 0; r < ch; ++r) {
    for (int c = 0; c < cw; ++c) {
      out[static_cast<std::size_t>(r) * cw + c] =
          y.at(0, r + border, c + border);
    }
  }
  *h = ch;
  *w = cw;
  return out;
}

void check_dims(const Image& a, const Image& b) {
  if (a.h != b.h || a.w != b.w) {
    throw std::invalid_argument("metrics: image dims differ");
  }
}

// Valid-mode separable convolution with a normalized 1-D Gaussian.
std::vector<double> gauss_valid(const std::vector<double>& img, int h, int w,
                                const std::vector<double>& win, int* oh,
                                int* ow) {
  const int k = static_cast<int>(win.size());
  const int mh = h;
  const int mw = w - k + 1;
  std::vector<double> mid(static_cast<std::size_t>(mh) * mw);
  for (int y = 0; y < mh; ++y) {
    for (int x = 0; x < mw; ++x) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j) {
        acc += win[static_cast<std::size_t>(j)] *
               img[static_cast<std::size_t>(y) * w + x + j];
      }
      mid[static_cast<std::size_t>(y) * mw + x] = acc;
    }
  }
  const int rh = h - k + 1;
  std::vector<double> out(static_cast<std::size_t>(rh) * mw);
  for (int y = 0; y < rh; ++y) {
    for (int x = 0; x < mw; ++x) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j) {
        acc += win[static_cast<std::size_t>(j)] *
               mid[static_cast<std::size_t>(y + j) * mw + x];
      }
      out[static_cast<std::size_t>(y) * mw + x] = acc;
    }
  }
  *oh = rh;
  *ow = mw;
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b, int border) {
  check_dims(a, b);
  int h, w;
  const std::vector<double> ya = prep(a, border, &h, &w);
  const std::vector<double> yb = prep(b, border, &h, &w);
  double mse = 0.0;
  for (std::size_t i = 0; i < ya.size(); ++i) {
    const double d = ya[i] - yb[i];
    mse += d * d;
  }
  mse /= static_cast<double>(ya.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b, int border) {
  check_dims(a, b);
  int h, w;
  const std::vector<double> ya = prep(a, border, &h, &w);
  const std::vector<double> yb = prep(b, border, &h, &w);

  const int k = 11;
  const double sigma = 1.5;
  if (h < k || w < k) {
    throw std::invalid_argument("ssim: image smaller than 11x11 window");
  }
  std::vector<double> win(k);
  double wsum = 0.0;
  for (int i = 0; i < k; ++i) {
    const double d = i - (k - 1) / 2.0;
    win[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    wsum += win[static_cast<std::size_t>(i)];
  }
  for (double& v : win) v /= wsum;

  const std::size_t n = ya.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = ya[i] * ya[i];
    bb[i] = yb[i] * yb[i];
    ab[i] = ya[i] * yb[i];
  }
  int oh, ow;
  const std::vector<double> mu_a = gauss_valid(ya, h, w, win, &oh, &ow);
  const std::vector<double> mu_b = gauss_valid(yb, h, w, win, &oh, &ow);
  const std::vector<double> s_aa = gauss_valid(aa, h, w, win, &oh, &ow);
  const std::vector<double> s_bb = gauss_valid(bb, h, w, win, &oh, &ow);
  const std::vector<double> s_ab = gauss_valid(ab, h, w, win, &oh, &ow);

  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = s_aa[i] - mu_a[i] * mu_a[i];
    const double vb = s_bb[i] - mu_b[i] * mu_b[i];
    const double cov = s_ab[i] - mu_a[i] * mu_b[i];
    acc += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
           ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return acc / static_cast<double>(mu_a.size());
}

double EvalReport::mean_psnr() const {
  double acc = 0.0;
  for (const EvalRow& r : rows) acc += r.psnr_db;
  return rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
}

double EvalReport::mean_ssim() const {
  double acc = 0.0;
  for (const EvalRow& r : rows) acc += r.ssim;
  return rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
}

namespace {

std::string fmt_db(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

nlohmann::json db_json(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

}  // namespace

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "scale x" << scale << "  border " << border << "\n";
  os << "image                      psnr_db      ssim\n";
  for (const EvalRow& r : rows) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-24s %9s  %8.6f\n", r.image.c_str(),
                  fmt_db(r.psnr_db).c_str(), r.ssim);
    os << line;
  }
  char line[128];
  std::snprintf(line, sizeof(line), "%-24s %9s  %8.6f\n", "mean",
                fmt_db(mean_psnr()).c_str(), mean_ssim());
  os << line;
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["scale"] = scale;
  j["border"] = border;
  j["images"] = nlohmann::json::array();
  for (const EvalRow& r : rows) {
    j["images"].push_back({{"image", r.image},
                           {"scale", r.scale},
                           {"psnr_db", db_json(r.psnr_db)},
                           {"ssim", r.ssim}});
  }
  j["mean_psnr_db"] = db_json(mean_psnr());
  j["mean_ssim"] = mean_ssim();
  return j.dump(2);
}

}  // namespace emsrdpn
