// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#include "emsrdpn/accounting.hpp"

#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

namespace emsrdpn {

namespace {

std::int64_t layer_params(const LayerSpec& l) {
  return static_cast<std::int64_t>(l.k) * l.k * l.c_in * l.c_out + l.c_out;
}

std::uint64_t layer_macs(const LayerSpec& l, int h, int w) {
  return (static_cast<std::uint64_t>(l.k) * l.k * l.c_in + 1) *
         static_cast<std::uint64_t>(l.c_out) *
         (static_cast<std::uint64_t>(l.rho) * l.rho) *
         static_cast<std::uint64_t>(h) * static_cast<std::uint64_t>(w);
}

}  // namespace

ParamCounts count_params(const NetworkConfig& cfg) {
  ParamCounts pc;
  for (int s : cfg.scales) pc.heads[s] = 0;
  for (const LayerSpec& l : conv_layer_shapes(cfg)) {
    const std::int64_t n = layer_params(l);
    pc.total += n;
    if (l.scale == 0) {
      pc.trunk += n;
    } else {
      pc.heads[l.scale] += n;
    }
  }
  return pc;
}

std::uint64_t count_flops_trunk(const NetworkConfig& cfg, int h, int w) {
  std::uint64_t acc = 0;
  for (const LayerSpec& l : conv_layer_shapes(cfg)) {
    if (l.scale == 0) acc += layer_macs(l, h, w);
  }
  return acc;
}

std::uint64_t count_flops_head(const NetworkConfig& cfg, int h, int w, int s) {
  if (!cfg.has_scale(s)) {
    throw std::invalid_argument("count_flops: scale " + std::to_string(s) +
                                " not in config");
  }
  std::uint64_t acc = 0;
  for (const LayerSpec& l : conv_layer_shapes(cfg)) {
    if (l.scale == s) acc += layer_macs(l, h, w);
  }
  return acc;
}

std::uint64_t count_flops_ssi(const NetworkConfig& cfg, int h, int w, int s) {
  return count_flops_trunk(cfg, h, w) + count_flops_head(cfg, h, w, s);
}

std::uint64_t count_flops_msi(const NetworkConfig& cfg, int h, int w) {
  std::uint64_t acc = count_flops_trunk(cfg, h, w);
  for (int s : cfg.scales) acc += count_flops_head(cfg, h, w, s);
  return acc;
}

namespace {

// Weight values are irrelevant to a shape probe; zeros skip the sampler.
ParameterStore<float> zero_params(const NetworkConfig& cfg) {
  ParameterStore<float> ps;
  for (const LayerSpec& l : conv_layer_shapes(cfg)) {
    ps.add(l.name + ".weight", TensorF(l.c_out, l.c_in, l.k, l.k));
    ps.add(l.name + ".bias", TensorF(1, l.c_out, 1, 1));
  }
  return ps;
}

}  // namespace

// The probe runs the real forward graph at 1x1 spatial size; every
// activation is spatially linear, so element counts scale by exactly h*w.
ActivationEstimate estimate_activation_ssi(const NetworkConfig& cfg, int h,
                                           int w, int s) {
  ParameterStore<float> ps = zero_params(cfg);
  TapeF tape;
  Runner<float> run(tape, ps, cfg);
  (void)run.forward(tape.input(TensorF(1, 3, 1, 1)), s);
  return activation_from_tape(tape, static_cast<std::int64_t>(h) * w, 4);
}

ActivationEstimate estimate_activation_msi(const NetworkConfig& cfg, int h,
                                           int w) {
  ParameterStore<float> ps = zero_params(cfg);
  TapeF tape;
  Runner<float> run(tape, ps, cfg);
  (void)run.forward_multi(tape.input(TensorF(1, 3, 1, 1)));
  return activation_from_tape(tape, static_cast<std::int64_t>(h) * w, 4);
}

CostReport cost_report(const NetworkConfig& cfg, int h, int w) {
  CostReport r;
  r.config = cfg;
  r.h = h;
  r.w = w;
  r.params = count_params(cfg);
  r.trunk_macs = count_flops_trunk(cfg, h, w);
  r.msi_macs = count_flops_msi(cfg, h, w);
  r.msi_act = estimate_activation_msi(cfg, h, w);
  for (int s : cfg.scales) {
    r.params_through[s] = r.params.trunk + r.params.heads.at(s);
    r.ssi_macs[s] = count_flops_ssi(cfg, h, w, s);
    r.ssi_act[s] = estimate_activation_ssi(cfg, h, w, s);
  }
  return r;
}

namespace {

std::string mega(std::int64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2fM", static_cast<double>(v) / 1e6);
  return buf;
}

std::string tera(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2fT", static_cast<double>(v) / 1e12);
  return buf;
}

std::string mib(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2fMiB",
                static_cast<double>(v) / (1024.0 * 1024.0));
  return buf;
}

}  // namespace

std::string CostReport::to_text() const {
  std::ostringstream os;
  os << "config: D=" << config.D << " C=" << config.C << " G_r=" << config.G_r
     << " G_d=" << config.G_d << " G=" << config.G
     << " t=" << config.bottleneck() << " scales=";
  for (std::size_t i = 0; i < config.scales.size(); ++i) {
    os << (i ? "," : "") << config.scales[i];
  }
  os << "\ninput: " << h << "x" << w << "\n\n";

  char line[160];
  os << "parameters\n";
  std::snprintf(line, sizeof(line), "  %-14s %14lld  (%s)\n", "trunk",
                static_cast<long long>(params.trunk), mega(params.trunk).c_str());
  os << line;
  for (const auto& [s, n] : params.heads) {
    const std::string name = "rb_x" + std::to_string(s);
    std::snprintf(line, sizeof(line), "  %-14s %14lld  (%s)\n", name.c_str(),
                  static_cast<long long>(n), mega(n).c_str());
    os << line;
  }
  std::snprintf(line, sizeof(line), "  %-14s %14lld  (%s)\n", "total",
                static_cast<long long>(params.total), mega(params.total).c_str());
  os << line;
  for (const auto& [s, n] : params_through) {
    const std::string name = "ssi x" + std::to_string(s);
    std::snprintf(line, sizeof(line), "  %-14s %14lld  (%s)\n", name.c_str(),
                  static_cast<long long>(n), mega(n).c_str());
    os << line;
  }

  os << "\ninference MACs (1 MAC = 1 flop)\n";
  std::snprintf(line, sizeof(line), "  %-14s %18llu  (%s)\n", "trunk",
                static_cast<unsigned long long>(trunk_macs),
                tera(trunk_macs).c_str());
  os << line;
  for (const auto& [s, n] : ssi_macs) {
    const std::string name = "ssi x" + std::to_string(s);
    std::snprintf(line, sizeof(line), "  %-14s %18llu  (%s)\n", name.c_str(),
                  static_cast<unsigned long long>(n), tera(n).c_str());
    os << line;
  }
  std::snprintf(line, sizeof(line), "  %-14s %18llu  (%s)\n", "msi",
                static_cast<unsigned long long>(msi_macs),
                tera(msi_macs).c_str());
  os << line;

  os << "\nactivation estimate (32-bit)\n";
  for (const auto& [s, a] : ssi_act) {
    const std::string name = "ssi x" + std::to_string(s);
    std::snprintf(line, sizeof(line),
                  "  %-14s total %14llu (%s)  peak %14llu (%s)\n", name.c_str(),
                  static_cast<unsigned long long>(a.total_bytes),
                  mib(a.total_bytes).c_str(),
                  static_cast<unsigned long long>(a.peak_bytes),
                  mib(a.peak_bytes).c_str());
    os << line;
  }
  std::snprintf(line, sizeof(line),
                "  %-14s total %14llu (%s)  peak %14llu (%s)\n", "msi",
                static_cast<unsigned long long>(msi_act.total_bytes),
                mib(msi_act.total_bytes).c_str(),
                static_cast<unsigned long long>(msi_act.peak_bytes),
                mib(msi_act.peak_bytes).c_str());
  os << line;
  return os.str();
}

std::string CostReport::to_json() const {
  nlohmann::json j;
  j["config"] = {{"D", config.D},         {"C", config.C},
                 {"G_r", config.G_r},     {"G_d", config.G_d},
                 {"G", config.G},         {"t", config.bottleneck()},
                 {"scales", config.scales}};
  j["h"] = h;
  j["w"] = w;
  j["params"]["trunk"] = params.trunk;
  j["params"]["total"] = params.total;
  for (const auto& [s, n] : params.heads) {
    j["params"]["heads"][std::to_string(s)] = n;
  }
  for (const auto& [s, n] : params_through) {
    j["params"]["single_scale"][std::to_string(s)] = n;
  }
  j["macs"]["trunk"] = trunk_macs;
  j["macs"]["msi"] = msi_macs;
  for (const auto& [s, n] : ssi_macs) {
    j["macs"]["ssi"][std::to_string(s)] = n;
  }
  for (const auto& [s, a] : ssi_act) {
    j["activation_bytes"]["ssi"][std::to_string(s)] = {
        {"total", a.total_bytes}, {"peak", a.peak_bytes}};
  }
  j["activation_bytes"]["msi"] = {{"total", msi_act.total_bytes},
                                  {"peak", msi_act.peak_bytes}};
  return j.dump(2);
}

}  // namespace emsrdpn
