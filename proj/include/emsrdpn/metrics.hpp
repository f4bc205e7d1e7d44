// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef EMSRDPN_METRICS_HPP
#define EMSRDPN_METRICS_HPP

#include <string>
#include <vector>

#include "emsrdpn/image.hpp"

namespace emsrdpn {

// Both metrics convert 3-channel inputs to the Y channel and crop a border
// of `border` pixels on every side before comparing. PSNR returns +inf when
// the cropped images are identical.
double psnr(const Image& a, const Image& b, int border);

// Gaussian-window SSIM: 11x11, sigma 1.5, K1=0.01, K2=0.03, dynamic range 1,
// mean over valid window positions only.
double ssim(const Image& a, const Image& b, int border);

struct EvalRow {
  std::string image;
  int scale = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  int scale = 0;
  int border = 0;

  double mean_psnr() const;
  double mean_ssim() const;
  std::string to_text() const;
  std::string to_json() const;
};

}  // namespace emsrdpn

#endif  // EMSRDPN_METRICS_HPP
