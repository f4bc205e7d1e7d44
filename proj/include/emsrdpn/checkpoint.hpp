// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: magic "EMSRDPN1", a little-endian u32 header length,
// a JSON header (config, named-tensor index, optional training state), then
// raw float32 little-endian tensor payloads in index order.

#ifndef EMSRDPN_CHECKPOINT_HPP
#define EMSRDPN_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "emsrdpn/network.hpp"

namespace emsrdpn {

// Optimizer and loop state carried inside checkpoints so training can resume
// bit-identically. `rng` is the serialized engine state captured after the
// checkpointed iteration's batch was drawn.
struct TrainingBlob {
  bool present = false;
  std::int64_t iter = 0;
  std::string rng;
  std::vector<std::pair<std::string, std::int64_t>> adam_steps;
};

// Extra tensors ride in the same index under reserved prefixes
// ("adam.m.<param>", "adam.v.<param>"); shapes are validated against the
// parameter they mirror.
void save_checkpoint(const std::string& path, const NetworkConfig& cfg,
                     const ParameterStore<float>& params,
                     const std::vector<std::pair<std::string, TensorF>>& extra,
                     const TrainingBlob* training);

struct LoadedCheckpoint {
  NetworkConfig config;
  ParameterStore<float> params;
  std::vector<std::pair<std::string, TensorF>> extra;
  TrainingBlob training;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace emsrdpn

#endif  // EMSRDPN_CHECKPOINT_HPP
