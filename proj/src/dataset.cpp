// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#include "emsrdpn/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <stdexcept>

namespace emsrdpn {

namespace fs = std::filesystem;

namespace {

bool image_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return e == ".png" || e == ".ppm" || e == ".pgm";
}

std::map<std::string, fs::path> scan_dir(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("dataset: missing directory " + dir.string());
  }
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && image_ext(e.path())) {
      out[e.path().stem().string()] = e.path();
    }
  }
  return out;
}

}  // namespace

DatasetManifest scan_dataset(const std::string& root,
                             const std::vector<int>& scales) {
  DatasetManifest m;
  m.scales = scales;
  const fs::path r(root);
  std::map<std::string, fs::path> hr = scan_dir(r / "HR");
  if (hr.empty()) {
    throw std::runtime_error("dataset: no images under " +
                             (r / "HR").string());
  }
  std::map<int, std::map<std::string, fs::path>> lr;
  for (int s : scales) {
    lr[s] = scan_dir(r / ("LR_x" + std::to_string(s)));
  }
  for (const auto& [stem, path] : hr) {
    DatasetRecord rec;
    rec.name = stem;
    rec.hr_path = path.string();
    bool complete = true;
    for (int s : scales) {
      auto it = lr[s].find(stem);
      if (it == lr[s].end()) {
        complete = false;
        break;
      }
      rec.lr_paths[s] = it->second.string();
    }
    if (!complete) {
      throw std::runtime_error("dataset: missing LR image for " + stem);
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

LoadedDataset LoadedDataset::load(const DatasetManifest& manifest) {
  LoadedDataset d;
  d.scales = manifest.scales;
  for (const DatasetRecord& rec : manifest.records) {
    Item item;
    item.name = rec.name;
    item.hr = ensure_rgb(load_image(rec.hr_path));
    for (const auto& [s, path] : rec.lr_paths) {
      Image lr = ensure_rgb(load_image(path));
      const Image ref = center_crop_to_multiple(item.hr, s);
      if (lr.h != ref.h / s || lr.w != ref.w / s) {
        throw std::runtime_error("dataset: LR dims mismatch for " + rec.name +
                                 " at x" + std::to_string(s));
      }
      item.lr[s] = std::move(lr);
    }
    d.items.push_back(std::move(item));
  }
  return d;
}

LoadedDataset LoadedDataset::from_hr_images(std::vector<Image> hr_images,
                                            const std::vector<int>& scales) {
  LoadedDataset d;
  d.scales = scales;
  int idx = 0;
  for (Image& hr : hr_images) {
    Item item;
    item.name = "img" + std::to_string(idx++);
    item.hr = ensure_rgb(std::move(hr));
    for (int s : scales) {
      item.lr[s] = degrade(item.hr, s);
    }
    d.items.push_back(std::move(item));
  }
  return d;
}

PatchPair augment(const PatchPair& pair, int code) {
  return PatchPair{image_dihedral(pair.lr, code), image_dihedral(pair.hr, code),
                   pair.scale};
}

namespace {

Image crop(const Image& img, int y0, int x0, int ph, int pw) {
  Image out(ph, pw, img.c);
  for (int c = 0; c < img.c; ++c) {
    for (int y = 0; y < ph; ++y) {
      const float* src = img.data.data() + img.index(c, y0 + y, x0);
      std::copy(src, src + pw, out.data.data() + out.index(c, y, 0));
    }
  }
  return out;
}

}  // namespace

PatchPair sample_patch_raw(const LoadedDataset& data, std::mt19937_64& rng,
                           int s, int p) {
  if (data.items.empty()) throw std::invalid_argument("sample: empty dataset");
  const std::size_t idx =
      uniform_index(rng, static_cast<std::uint64_t>(data.items.size()));
  const LoadedDataset::Item& item = data.items[idx];
  auto it = item.lr.find(s);
  if (it == item.lr.end()) {
    throw std::invalid_argument("sample: no LR at scale " + std::to_string(s));
  }
  const Image& lr = it->second;
  if (lr.h < p || lr.w < p) {
    throw std::invalid_argument("sample: patch size " + std::to_string(p) +
                                " exceeds LR dims " + std::to_string(lr.h) +
                                "x" + std::to_string(lr.w));
  }
  const int y0 = static_cast<int>(
      uniform_index(rng, static_cast<std::uint64_t>(lr.h - p + 1)));
  const int x0 = static_cast<int>(
      uniform_index(rng, static_cast<std::uint64_t>(lr.w - p + 1)));
  const Image hr_ref = center_crop_to_multiple(item.hr, s);
  PatchPair pair;
  pair.scale = s;
  pair.lr = crop(lr, y0, x0, p, p);
  pair.hr = crop(hr_ref, s * y0, s * x0, s * p, s * p);
  return pair;
}

PatchPair sample_patch(const LoadedDataset& data, std::mt19937_64& rng, int s,
                       int p) {
  PatchPair pair = sample_patch_raw(data, rng, s, p);
  const int code = static_cast<int>(uniform_index(rng, 8));
  return code == 0 ? pair : augment(pair, code);
}

void batch_tensors(const std::vector<PatchPair>& pairs, TensorF* lr,
                   TensorF* hr) {
  if (pairs.empty()) throw std::invalid_argument("batch: empty");
  const Image& l0 = pairs[0].lr;
  const Image& h0 = pairs[0].hr;
  *lr = TensorF(static_cast<int>(pairs.size()), l0.c, l0.h, l0.w);
  *hr = TensorF(static_cast<int>(pairs.size()), h0.c, h0.h, h0.w);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].lr.h != l0.h || pairs[i].lr.w != l0.w ||
        pairs[i].hr.h != h0.h || pairs[i].hr.w != h0.w) {
      throw std::invalid_argument("batch: inhomogeneous patch sizes");
    }
    std::copy(pairs[i].lr.data.begin(), pairs[i].lr.data.end(),
              lr->data.begin() + static_cast<std::ptrdiff_t>(
                                     i * pairs[i].lr.data.size()));
    std::copy(pairs[i].hr.data.begin(), pairs[i].hr.data.end(),
              hr->data.begin() + static_cast<std::ptrdiff_t>(
                                     i * pairs[i].hr.data.size()));
  }
}

}  // namespace emsrdpn
