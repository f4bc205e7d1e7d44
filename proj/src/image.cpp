// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#include "emsrdpn/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "emsrdpn/ops.hpp"

namespace emsrdpn {

Image::Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_) {
  if (h < 1 || w < 1 || (c != 1 && c != 3)) {
    throw std::invalid_argument("image: bad dims " + std::to_string(h) + "x" +
                                std::to_string(w) + "x" + std::to_string(c));
  }
  data.assign(static_cast<std::size_t>(h) * w * c, 0.0f);
}

namespace {

[[noreturn]] void io_fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) io_fail(path, "cannot open");
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
}

// One whitespace-delimited PNM header token, skipping '#' comments.
std::size_t pnm_token(const std::vector<unsigned char>& buf, std::size_t pos,
                      const std::string& path, long* out) {
  while (pos < buf.size()) {
    if (std::isspace(buf[pos])) {
      ++pos;
    } else if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  long v = 0;
  bool any = false;
  while (pos < buf.size() && std::isdigit(buf[pos])) {
    v = v * 10 + (buf[pos] - '0');
    any = true;
    ++pos;
  }
  if (!any) io_fail(path, "malformed PNM header");
  *out = v;
  return pos;
}

Image load_pnm(const std::vector<unsigned char>& buf, const std::string& path) {
  const int channels = buf[1] == '6' ? 3 : 1;
  long w = 0, h = 0, maxval = 0;
  std::size_t pos = 2;
  pos = pnm_token(buf, pos, path, &w);
  pos = pnm_token(buf, pos, path, &h);
  pos = pnm_token(buf, pos, path, &maxval);
  if (pos >= buf.size() || !std::isspace(buf[pos])) {
    io_fail(path, "malformed PNM header");
  }
  ++pos;
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255) {
    io_fail(path, "unsupported PNM dimensions or maxval");
  }
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (buf.size() - pos < need) io_fail(path, "truncated PNM payload");
  Image img(static_cast<int>(h), static_cast<int>(w), channels);
  const unsigned char* p = buf.data() + pos;
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      for (int ch = 0; ch < channels; ++ch) {
        img.at(ch, y, x) = static_cast<float>(*p++) / maxval;
      }
    }
  }
  return img;
}

Image load_png(const std::string& path) {
  png_image pim;
  std::memset(&pim, 0, sizeof(pim));
  pim.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pim, path.c_str())) {
    io_fail(path, pim.message);
  }
  const int channels = PNG_IMAGE_PIXEL_CHANNELS(pim.format) >= 3 ? 3 : 1;
  pim.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(pim));
  if (!png_image_finish_read(&pim, nullptr, raw.data(), 0, nullptr)) {
    png_image_free(&pim);
    io_fail(path, pim.message);
  }
  Image img(static_cast<int>(pim.height), static_cast<int>(pim.width),
            channels);
  const unsigned char* p = raw.data();
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      for (int ch = 0; ch < channels; ++ch) {
        img.at(ch, y, x) = static_cast<float>(*p++) / 255.0f;
      }
    }
  }
  return img;
}

unsigned char to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

std::vector<unsigned char> interleave8(const Image& img) {
  std::vector<unsigned char> raw(static_cast<std::size_t>(img.h) * img.w *
                                 img.c);
  unsigned char* p = raw.data();
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      for (int ch = 0; ch < img.c; ++ch) {
        *p++ = to_byte(img.at(ch, y, x));
      }
    }
  }
  return raw;
}

void save_png(const Image& img, const std::string& path) {
  png_image pim;
  std::memset(&pim, 0, sizeof(pim));
  pim.version = PNG_IMAGE_VERSION;
  pim.width = static_cast<png_uint_32>(img.w);
  pim.height = static_cast<png_uint_32>(img.h);
  pim.format = img.c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> raw = interleave8(img);
  if (!png_image_write_to_file(&pim, path.c_str(), 0, raw.data(), 0,
                               nullptr)) {
    io_fail(path, pim.message);
  }
}

void save_pnm(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) io_fail(path, "cannot open for writing");
  f << (img.c == 3 ? "P6" : "P5") << "\n"
    << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> raw = interleave8(img);
  f.write(reinterpret_cast<const char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (!f) io_fail(path, "write failed");
}

std::string lower_ext(const std::string& path) {
  std::string e = std::filesystem::path(path).extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return e;
}

}  // namespace

Image load_image(const std::string& path) {
  std::vector<unsigned char> buf = read_file(path);
  if (buf.size() >= 8 && buf[0] == 0x89 && buf[1] == 'P' && buf[2] == 'N' &&
      buf[3] == 'G') {
    return load_png(path);
  }
  if (buf.size() >= 2 && buf[0] == 'P' && (buf[1] == '5' || buf[1] == '6')) {
    return load_pnm(buf, path);
  }
  io_fail(path, "unsupported image format");
}

void save_image(const Image& img, const std::string& path) {
  if (img.h < 1) throw std::invalid_argument("save_image: empty image");
  const std::string ext = lower_ext(path);
  const std::string tmp = path + ".tmp";
  if (ext == ".png") {
    save_png(img, tmp);
  } else if (ext == ".ppm") {
    if (img.c != 3) io_fail(path, "PPM requires 3 channels");
    save_pnm(img, tmp);
  } else if (ext == ".pgm") {
    if (img.c != 1) io_fail(path, "PGM requires 1 channel");
    save_pnm(img, tmp);
  } else {
    io_fail(path, "unsupported output extension");
  }
  std::filesystem::rename(tmp, path);
}

namespace {

double cubic(double x) {
  const double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct Taps {
  int lo = 0;
  std::vector<double> w;
};

// Contribution weights of source samples to each output coordinate along one
// axis. Downscaling widens the kernel by the inverse scale (antialiasing);
// weights are normalized so each output sample is an exact convex-like
// combination of sources.
std::vector<Taps> make_taps(int in, int out) {
  const double ratio = static_cast<double>(in) / out;
  const double scale = out < in ? static_cast<double>(out) / in : 1.0;
  const double radius = 2.0 / scale;
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  for (int i = 0; i < out; ++i) {
    const double center = (i + 0.5) * ratio - 0.5;
    const int lo = static_cast<int>(std::ceil(center - radius));
    const int hi = static_cast<int>(std::floor(center + radius));
    Taps& t = taps[static_cast<std::size_t>(i)];
    t.lo = lo;
    t.w.resize(static_cast<std::size_t>(hi - lo + 1));
    double sum = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const double wgt = cubic((center - j) * scale);
      t.w[static_cast<std::size_t>(j - lo)] = wgt;
      sum += wgt;
    }
    for (double& wgt : t.w) wgt /= sum;
  }
  return taps;
}

}  // namespace

Image bicubic_resize(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("bicubic_resize: output dims must be >= 1");
  }
  const std::vector<Taps> tx = make_taps(img.w, out_w);
  const std::vector<Taps> ty = make_taps(img.h, out_h);
  Image out(out_h, out_w, img.c);
  std::vector<double> mid(static_cast<std::size_t>(img.h) * out_w);
  for (int ch = 0; ch < img.c; ++ch) {
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        const Taps& t = tx[static_cast<std::size_t>(x)];
        double acc = 0.0;
        for (std::size_t j = 0; j < t.w.size(); ++j) {
          const int sx = std::clamp(t.lo + static_cast<int>(j), 0, img.w - 1);
          acc += t.w[j] * img.at(ch, y, sx);
        }
        mid[static_cast<std::size_t>(y) * out_w + x] = acc;
      }
    }
    for (int y = 0; y < out_h; ++y) {
      const Taps& t = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (std::size_t j = 0; j < t.w.size(); ++j) {
          const int sy = std::clamp(t.lo + static_cast<int>(j), 0, img.h - 1);
          acc += t.w[j] * mid[static_cast<std::size_t>(sy) * out_w + x];
        }
        out.at(ch, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Image center_crop_to_multiple(const Image& img, int s) {
  const int ch = (img.h / s) * s;
  const int cw = (img.w / s) * s;
  if (ch < s || cw < s) {
    throw std::invalid_argument("degrade: image smaller than scale " +
                                std::to_string(s));
  }
  if (ch == img.h && cw == img.w) return img;
  const int y0 = (img.h - ch) / 2;
  const int x0 = (img.w - cw) / 2;
  Image out(ch, cw, img.c);
  for (int k = 0; k < img.c; ++k) {
    for (int y = 0; y < ch; ++y) {
      const float* src = img.data.data() + img.index(k, y0 + y, x0);
      std::copy(src, src + cw, out.data.data() + out.index(k, y, 0));
    }
  }
  return out;
}

Image degrade(const Image& hr, int s) {
  if (s != 2 && s != 3 && s != 4 && s != 8) {
    throw std::invalid_argument("degrade: scale must be one of {2,3,4,8}");
  }
  Image cropped = center_crop_to_multiple(hr, s);
  return bicubic_resize(cropped, cropped.h / s, cropped.w / s);
}

Image rgb_to_ycbcr_y(const Image& img) {
  if (img.c == 1) return img;
  Image out(img.h, img.w, 1);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const double r = img.at(0, y, x);
      const double g = img.at(1, y, x);
      const double b = img.at(2, y, x);
      out.at(0, y, x) = static_cast<float>(
          (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0);
    }
  }
  return out;
}

Image image_dihedral(const Image& img, int code) {
  if (code < 0 || code > 7) {
    throw std::invalid_argument("dihedral: code must be in 0..7");
  }
  if (code == 0) return img;
  const DihedralDims d = dihedral_dims(code, img.h, img.w);
  Image out(d.h, d.w, img.c);
  for (int ch = 0; ch < img.c; ++ch) {
    for (int y = 0; y < d.h; ++y) {
      for (int x = 0; x < d.w; ++x) {
        int sy, sx;
        dihedral_source(code, img.h, img.w, y, x, &sy, &sx);
        out.at(ch, y, x) = img.at(ch, sy, sx);
      }
    }
  }
  return out;
}

Image clamp01(const Image& img) {
  Image out = img;
  for (float& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

TensorF image_to_tensor(const Image& img) {
  TensorF t(1, img.c, img.h, img.w);
  std::copy(img.data.begin(), img.data.end(), t.data.begin());
  return t;
}

Image tensor_to_image(const TensorF& t, int batch_index) {
  if (t.shape.c != 1 && t.shape.c != 3) {
    throw std::invalid_argument("tensor_to_image: needs 1 or 3 channels, got " +
                                t.shape.str());
  }
  Image img(t.shape.h, t.shape.w, t.shape.c);
  const std::size_t sz = img.data.size();
  const float* src = t.data.data() + static_cast<std::size_t>(batch_index) * sz;
  std::copy(src, src + sz, img.data.begin());
  return img;
}

Image ensure_rgb(const Image& img) {
  if (img.c == 3) return img;
  Image out(img.h, img.w, 3);
  const std::size_t plane = static_cast<std::size_t>(img.h) * img.w;
  for (int ch = 0; ch < 3; ++ch) {
    std::copy(img.data.begin(), img.data.begin() + plane,
              out.data.begin() + ch * plane);
  }
  return out;
}

}  // namespace emsrdpn
