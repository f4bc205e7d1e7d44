// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Analytic parameter counts, inference MAC counts, and activation-footprint
// estimates. The MAC convention counts (k*k*c_in + 1)*c_out per output pixel
// (bias included) and treats 1 MAC as 1 flop.

#ifndef EMSRDPN_ACCOUNTING_HPP
#define EMSRDPN_ACCOUNTING_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emsrdpn/network.hpp"

namespace emsrdpn {

struct ParamCounts {
  std::int64_t trunk = 0;
  std::map<int, std::int64_t> heads;
  std::int64_t total = 0;
};

ParamCounts count_params(const NetworkConfig& cfg);

std::uint64_t count_flops_trunk(const NetworkConfig& cfg, int h, int w);
std::uint64_t count_flops_head(const NetworkConfig& cfg, int h, int w, int s);
// Single-scale inference: trunk plus the one head.
std::uint64_t count_flops_ssi(const NetworkConfig& cfg, int h, int w, int s);
// Multi-scale inference: trunk once plus every head in the scale set.
std::uint64_t count_flops_msi(const NetworkConfig& cfg, int h, int w);

struct ActivationEstimate {
  std::uint64_t total_bytes = 0;  // every forward activation tensor, 32-bit
  std::uint64_t peak_bytes = 0;   // peak liveness under sequential execution
};

ActivationEstimate estimate_activation_ssi(const NetworkConfig& cfg, int h,
                                           int w, int s);
ActivationEstimate estimate_activation_msi(const NetworkConfig& cfg, int h,
                                           int w);

// Liveness accounting over a recorded op graph; `elem_scale` multiplies every
// tensor's element count (activations here are spatially linear, so a probe
// at 1x1 scales exactly to h*w).
template <typename S>
ActivationEstimate activation_from_tape(const Tape<S>& tape,
                                        std::int64_t elem_scale,
                                        int bytes_per_elem) {
  const auto ops = tape.trace();
  std::vector<char> produced(tape.node_count(), 0);
  std::vector<std::ptrdiff_t> last_use(tape.node_count(), -1);
  for (std::size_t i = 0; i < ops.size(); ++i) {
    for (int o : ops[i].out) produced[static_cast<std::size_t>(o)] = 1;
    for (int in : ops[i].in) {
      last_use[static_cast<std::size_t>(in)] = static_cast<std::ptrdiff_t>(i);
    }
  }
  ActivationEstimate est;
  std::uint64_t live = 0;
  auto bytes = [&](int id) {
    return static_cast<std::uint64_t>(tape.slot_elems(id)) *
           static_cast<std::uint64_t>(elem_scale) *
           static_cast<std::uint64_t>(bytes_per_elem);
  };
  for (std::size_t i = 0; i < ops.size(); ++i) {
    for (int o : ops[i].out) {
      const std::uint64_t b = bytes(o);
      est.total_bytes += b;
      live += b;
    }
    if (live > est.peak_bytes) est.peak_bytes = live;
    for (std::size_t id = 0; id < last_use.size(); ++id) {
      if (produced[id] && last_use[id] == static_cast<std::ptrdiff_t>(i)) {
        live -= bytes(static_cast<int>(id));
      }
    }
  }
  return est;
}

struct CostReport {
  NetworkConfig config;
  int h = 0;
  int w = 0;
  ParamCounts params;
  std::map<int, std::int64_t> params_through;  // cumulative: trunk + head s
  std::map<int, std::uint64_t> ssi_macs;
  std::uint64_t trunk_macs = 0;
  std::uint64_t msi_macs = 0;
  std::map<int, ActivationEstimate> ssi_act;
  ActivationEstimate msi_act;

  std::string to_text() const;
  std::string to_json() const;
};

CostReport cost_report(const NetworkConfig& cfg, int h, int w);

}  // namespace emsrdpn

#endif  // EMSRDPN_ACCOUNTING_HPP
