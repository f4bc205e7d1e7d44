// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#include "emsrdpn/config_io.hpp"

#include <fstream>
#include <stdexcept>

namespace emsrdpn {

using nlohmann::json;

json network_config_to_json(const NetworkConfig& cfg) {
  return json{{"D", cfg.D},     {"C", cfg.C}, {"G_r", cfg.G_r},
              {"G_d", cfg.G_d}, {"G", cfg.G}, {"t", cfg.t},
              {"scales", cfg.scales}};
}

NetworkConfig network_config_from_json(const json& j) {
  NetworkConfig cfg;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "D") {
        cfg.D = v.get<int>();
      } else if (k == "C") {
        cfg.C = v.get<int>();
      } else if (k == "G_r") {
        cfg.G_r = v.get<int>();
      } else if (k == "G_d") {
        cfg.G_d = v.get<int>();
      } else if (k == "G") {
        cfg.G = v.get<int>();
      } else if (k == "t") {
        cfg.t = v.get<int>();
      } else if (k == "scales") {
        cfg.scales = v.get<std::vector<int>>();
      } else {
        throw std::invalid_argument("config: unknown network key \"" + k +
                                    "\"");
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: bad network value: ") +
                                e.what());
  }
  cfg.normalize();
  cfg.validate();
  return cfg;
}

json train_config_to_json(const TrainConfig& tc) {
  return json{{"batch_size", tc.batch_size},
              {"patch_size", tc.patch_size},
              {"lr", tc.lr},
              {"decay_factor", tc.decay_factor},
              {"decay_interval", tc.decay_interval},
              {"iters", tc.iters},
              {"beta1", tc.beta1},
              {"beta2", tc.beta2},
              {"eps", tc.eps},
              {"seed", tc.seed},
              {"checkpoint_every", tc.checkpoint_every},
              {"log_every", tc.log_every},
              {"deterministic", tc.deterministic}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig tc;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "batch_size") {
        tc.batch_size = v.get<int>();
      } else if (k == "patch_size") {
        tc.patch_size = v.get<int>();
      } else if (k == "lr") {
        tc.lr = v.get<double>();
      } else if (k == "decay_factor") {
        tc.decay_factor = v.get<double>();
      } else if (k == "decay_interval") {
        tc.decay_interval = v.get<std::int64_t>();
      } else if (k == "iters") {
        tc.iters = v.get<std::int64_t>();
      } else if (k == "beta1") {
        tc.beta1 = v.get<double>();
      } else if (k == "beta2") {
        tc.beta2 = v.get<double>();
      } else if (k == "eps") {
        tc.eps = v.get<double>();
      } else if (k == "seed") {
        tc.seed = v.get<std::uint64_t>();
      } else if (k == "checkpoint_every") {
        tc.checkpoint_every = v.get<std::int64_t>();
      } else if (k == "log_every") {
        tc.log_every = v.get<std::int64_t>();
      } else if (k == "deterministic") {
        tc.deterministic = v.get<bool>();
      } else {
        throw std::invalid_argument("config: unknown train key \"" + k + "\"");
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: bad train value: ") +
                                e.what());
  }
  tc.validate();
  return tc;
}

json config_document(const NetworkConfig& cfg, const TrainConfig& tc) {
  return json{{"network", network_config_to_json(cfg)},
              {"train", train_config_to_json(tc)}};
}

void parse_config_document(const json& j, NetworkConfig* cfg, TrainConfig* tc) {
  for (const auto& [k, v] : j.items()) {
    if (k == "network") {
      *cfg = network_config_from_json(v);
    } else if (k == "train") {
      *tc = train_config_from_json(v);
    } else {
      throw std::invalid_argument("config: unknown section \"" + k + "\"");
    }
  }
}

void load_config_file(const std::string& path, NetworkConfig* cfg,
                      TrainConfig* tc) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot open " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: " + path + ": " + e.what());
  }
  parse_config_document(j, cfg, tc);
}

}  // namespace emsrdpn
