// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#include "emsrdpn/network.hpp"

#include <algorithm>
#include <stdexcept>

namespace emsrdpn {

bool NetworkConfig::has_scale(int s) const {
  return std::find(scales.begin(), scales.end(), s) != scales.end();
}

void NetworkConfig::normalize() {
  std::sort(scales.begin(), scales.end());
  scales.erase(std::unique(scales.begin(), scales.end()), scales.end());
}

void NetworkConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
  };
  if (D < 1) fail("D must be >= 1");
  if (C < 1) fail("C must be >= 1");
  if (G_r < 0 || G_d < 0 || G < 0) fail("widths must be >= 0");
  if (G_d != G) fail("G_d and G must be equal");
  if (G_r + G_d < 1) fail("G_r + G_d must be >= 1");
  if (t < 0) fail("t must be >= 0");
  if (scales.empty()) fail("scale set is empty");
  for (int s : scales) {
    if (s != 2 && s != 3 && s != 4 && s != 8) {
      fail("scale " + std::to_string(s) + " not in {2,3,4,8}");
    }
  }
  for (std::size_t i = 1; i < scales.size(); ++i) {
    if (scales[i] <= scales[i - 1]) fail("scales must be strictly ascending");
  }
}

std::vector<int> stage_factors(int s) {
  switch (s) {
    case 2:
      return {2};
    case 3:
      return {3};
    case 4:
      return {2, 2};
    case 8:
      return {2, 2, 2};
    default:
      throw std::invalid_argument("stage_factors: unsupported scale " +
                                  std::to_string(s));
  }
}

std::vector<LayerSpec> conv_layer_shapes(const NetworkConfig& cfg) {
  cfg.validate();
  const int wh = cfg.head_width();
  const int t = cfg.bottleneck();
  std::vector<LayerSpec> out;

  out.push_back({"feb.conv1", 3, 3, wh, 0, 1});
  out.push_back({"feb.conv2", 3, wh, wh, 0, 1});

  for (int d = 1; d <= cfg.D; ++d) {
    const std::string dpb = "dpb" + std::to_string(d);
    for (int c = 1; c <= cfg.C; ++c) {
      const std::string dpu = dpb + ".dpu" + std::to_string(c);
      const int c_in = cfg.G_r + cfg.G_d + (c - 1) * cfg.G;
      out.push_back({dpu + ".t1x1", 1, c_in, t, 0, 1});
      out.push_back({dpu + ".w3x3", 3, t, cfg.G_r + cfg.G, 0, 1});
    }
    out.push_back(
        {dpb + ".tu", 1, cfg.G_r + cfg.G_d + cfg.C * cfg.G, wh, 0, 1});
  }

  out.push_back({"hfib.t1x1", 1, cfg.D * wh, wh, 0, 1});
  out.push_back({"hfib.w3x3", 3, wh, wh, 0, 1});

  for (int s : cfg.scales) {
    const std::string rb = "rb_x" + std::to_string(s);
    const std::vector<int> factors = stage_factors(s);
    int rho = 1;
    for (std::size_t j = 0; j < factors.size(); ++j) {
      out.push_back({rb + ".stage" + std::to_string(j + 1), 3, wh,
                     wh * factors[j] * factors[j], s, rho});
      rho *= factors[j];
    }
    out.push_back({rb + ".final", 3, wh, 3, s, s});
  }
  return out;
}

}  // namespace emsrdpn
