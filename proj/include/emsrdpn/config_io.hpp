// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef EMSRDPN_CONFIG_IO_HPP
#define EMSRDPN_CONFIG_IO_HPP

#include <string>

#include <nlohmann/json.hpp>

#include "emsrdpn/network.hpp"
#include "emsrdpn/train.hpp"

namespace emsrdpn {

nlohmann::json network_config_to_json(const NetworkConfig& cfg);
// Strict: unknown keys are configuration errors.
NetworkConfig network_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& tc);
TrainConfig train_config_from_json(const nlohmann::json& j);

// The single config document: {"network": {...}, "train": {...}}. Both
// sections are optional and default-filled.
nlohmann::json config_document(const NetworkConfig& cfg, const TrainConfig& tc);
void parse_config_document(const nlohmann::json& j, NetworkConfig* cfg,
                           TrainConfig* tc);
void load_config_file(const std::string& path, NetworkConfig* cfg,
                      TrainConfig* tc);

}  // namespace emsrdpn

#endif  // EMSRDPN_CONFIG_IO_HPP
