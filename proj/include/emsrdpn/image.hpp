// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef EMSRDPN_IMAGE_HPP
#define EMSRDPN_IMAGE_HPP

#include <string>
#include <vector>

#include "emsrdpn/tensor.hpp"

namespace emsrdpn {

// Planar (channel, row, col) float image. Samples are nominally in [0,1];
// out-of-range values may appear in intermediate results and are clamped
// only when exporting to 8-bit containers.
struct Image {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h_, int w_, int c_);

  std::size_t index(int ch, int y, int x) const {
    return (static_cast<std::size_t>(ch) * h + y) * w + x;
  }
  float& at(int ch, int y, int x) { return data[index(ch, y, x)]; }
  float at(int ch, int y, int x) const { return data[index(ch, y, x)]; }
};

// Container support: PNG (8-bit gray/RGB), binary PPM (P6) and PGM (P5).
// Loading sniffs the format from the file's magic bytes; saving picks the
// container from the path extension (.png, .ppm, .pgm).
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path);

Image bicubic_resize(const Image& img, int out_h, int out_w);

// Center-crops to a multiple of s, then bicubic-downscales by s.
Image degrade(const Image& hr, int s);

// Crops under the same centering convention as degrade.
Image center_crop_to_multiple(const Image& img, int s);

// BT.601 studio-swing luma; single-channel inputs pass through unchanged.
Image rgb_to_ycbcr_y(const Image& img);

Image image_dihedral(const Image& img, int code);

Image clamp01(const Image& img);

TensorF image_to_tensor(const Image& img);
Image tensor_to_image(const TensorF& t, int batch_index = 0);

// Gray images replicated to 3 channels; 3-channel images returned as-is.
Image ensure_rgb(const Image& img);

}  // namespace emsrdpn

#endif  // EMSRDPN_IMAGE_HPP
