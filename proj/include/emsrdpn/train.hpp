// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef EMSRDPN_TRAIN_HPP
#define EMSRDPN_TRAIN_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "emsrdpn/dataset.hpp"
#include "emsrdpn/network.hpp"

namespace emsrdpn {

struct TrainConfig {
  int batch_size = 16;
  int patch_size = 48;  // LR patch side
  double lr = 1e-4;
  double decay_factor = 2.0;
  std::int64_t decay_interval = 0;  // 0 = |scales| * 200000
  std::int64_t iters = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 1000;
  std::int64_t log_every = 50;
  bool deterministic = false;

  void validate() const;
  std::int64_t effective_decay_interval(std::size_t nscales) const;
};

struct NanLossError : std::runtime_error {
  explicit NanLossError(const std::string& msg) : std::runtime_error(msg) {}
};

// Moments exist only for parameters some step has actually touched; a
// parameter's step counter equals the number of updates applied to it.
struct AdamState {
  struct Moments {
    TensorF m;
    TensorF v;
    std::int64_t steps = 0;
  };
  std::map<std::string, Moments> slots;

  Moments& ensure(const std::string& name, const Shape& shape);
};

double lr_schedule(std::int64_t iter, const TrainConfig& tc,
                   std::size_t nscales);

int sample_scale(std::mt19937_64& rng, const std::vector<int>& scales);

// One optimizer step at scale s: forward through head s, MAE loss, backward,
// Adam on every parameter reached by the loss. Returns the loss. Throws
// NanLossError on a non-finite loss.
double train_step(ParameterStore<float>* params, AdamState* adam,
                  const TensorF& lr_batch, const TensorF& hr_batch, int s,
                  double lr, const NetworkConfig& cfg, const TrainConfig& tc);

struct TrainHooks {
  // Called after every step.
  std::function<void(std::int64_t iter, int scale, double loss, double lr)>
      on_step;
};

struct TrainResult {
  std::int64_t iters_done = 0;
  double last_loss = 0.0;
  std::string final_checkpoint;
};

// Runs the whole loop: scale sampling, batch assembly (prefetched on a
// loader thread unless deterministic mode or EMSRDPN_THREADS < 2 disables
// it), optimizer steps, NDJSON logging and periodic checkpoints under
// out_dir. `resume_path` continues from a saved checkpoint.
TrainResult train_loop(const LoadedDataset& data, const NetworkConfig& cfg,
                       const TrainConfig& tc, const std::string& out_dir,
                       const std::string& resume_path = "",
                       const TrainHooks& hooks = {});

}  // namespace emsrdpn

#endif  // EMSRDPN_TRAIN_HPP
