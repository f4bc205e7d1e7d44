// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef EMSRDPN_DATASET_HPP
#define EMSRDPN_DATASET_HPP

#include <map>
#include <random>
#include <string>
#include <vector>

#include "emsrdpn/image.hpp"

namespace emsrdpn {

struct DatasetRecord {
  std::string name;
  std::string hr_path;
  std::map<int, std::string> lr_paths;
};

// Directory layout: <root>/HR/*.png|ppm plus <root>/LR_x{s}/* with matching
// basename stems. Records are sorted by stem so scans are deterministic.
struct DatasetManifest {
  std::vector<DatasetRecord> records;
  std::vector<int> scales;
};

DatasetManifest scan_dataset(const std::string& root,
                             const std::vector<int>& scales);

struct PatchPair {
  Image lr;
  Image hr;
  int scale = 0;
};

// All images resident in memory; LR either loaded from the manifest or
// regenerated from HR by the degradation pipeline.
struct LoadedDataset {
  struct Item {
    std::string name;
    Image hr;
    std::map<int, Image> lr;
  };
  std::vector<Item> items;
  std::vector<int> scales;

  static LoadedDataset load(const DatasetManifest& manifest);
  static LoadedDataset from_hr_images(std::vector<Image> hr_images,
                                      const std::vector<int>& scales);
};

PatchPair augment(const PatchPair& pair, int code);

// Draw order: image index, patch row, patch col, augment code.
PatchPair sample_patch_raw(const LoadedDataset& data, std::mt19937_64& rng,
                           int s, int p);
PatchPair sample_patch(const LoadedDataset& data, std::mt19937_64& rng, int s,
                       int p);

// Stacks pairs into (B,3,p,p) LR and (B,3,sp,sp) HR tensors.
void batch_tensors(const std::vector<PatchPair>& pairs, TensorF* lr,
                   TensorF* hr);

}  // namespace emsrdpn

#endif  // EMSRDPN_DATASET_HPP
