// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#include "emsrdpn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "emsrdpn/config_io.hpp"

namespace emsrdpn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'E', 'M', 'S', 'R', 'D', 'P', 'N', '1'};

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

// Expected parameter shapes for a config, keyed by full tensor name.
std::map<std::string, Shape> expected_shapes(const NetworkConfig& cfg) {
  std::map<std::string, Shape> out;
  for (const LayerSpec& l : conv_layer_shapes(cfg)) {
    out[l.name + ".weight"] = Shape{l.c_out, l.c_in, l.k, l.k};
    out[l.name + ".bias"] = Shape{1, l.c_out, 1, 1};
  }
  return out;
}

void check_extra_name(const std::string& name,
                      const std::map<std::string, Shape>& expected,
                      const Shape& shape, const std::string& path) {
  std::string base;
  if (name.rfind("adam.m.", 0) == 0 || name.rfind("adam.v.", 0) == 0) {
    base = name.substr(7);
  } else {
    fail(path, "unknown tensor name " + name);
  }
  auto it = expected.find(base);
  if (it == expected.end()) {
    fail(path, "optimizer tensor " + name + " has no matching parameter");
  }
  if (!(it->second == shape)) {
    fail(path, "optimizer tensor " + name + " shape " + shape.str() +
                   " does not match parameter " + it->second.str());
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const NetworkConfig& cfg,
                     const ParameterStore<float>& params,
                     const std::vector<std::pair<std::string, TensorF>>& extra,
                     const TrainingBlob* training) {
  cfg.validate();
  const std::map<std::string, Shape> expected = expected_shapes(cfg);
  if (params.size() != expected.size()) {
    fail(path, "parameter store does not match config layer set");
  }
  nlohmann::json index = nlohmann::json::array();
  for (const std::string& name : params.names()) {
    auto it = expected.find(name);
    const Shape& s = params.at(name).shape;
    if (it == expected.end() || !(it->second == s)) {
      fail(path, "parameter " + name + " does not match config");
    }
    index.push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}});
  }
  for (const auto& [name, t] : extra) {
    check_extra_name(name, expected, t.shape, path);
    index.push_back(
        {{"name", name}, {"shape", {t.shape.n, t.shape.c, t.shape.h, t.shape.w}}});
  }

  nlohmann::json header;
  header["config"] = network_config_to_json(cfg);
  header["tensors"] = std::move(index);
  if (training && training->present) {
    nlohmann::json steps = nlohmann::json::object();
    for (const auto& [name, n] : training->adam_steps) steps[name] = n;
    header["training"] = {
        {"iter", training->iter}, {"rng", training->rng}, {"adam_steps", steps}};
  }
  const std::string htext = header.dump();

  const std::string tmp = path + ".tmp";
  std::ofstream f(tmp, std::ios::binary);
  if (!f) fail(path, "cannot open for writing");
  f.write(kMagic, 8);
  const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
  const unsigned char lenb[4] = {
      static_cast<unsigned char>(hlen & 0xff),
      static_cast<unsigned char>((hlen >> 8) & 0xff),
      static_cast<unsigned char>((hlen >> 16) & 0xff),
      static_cast<unsigned char>((hlen >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(lenb), 4);
  f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  auto write_tensor = [&](const TensorF& t) {
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  };
  for (const std::string& name : params.names()) write_tensor(params.at(name));
  for (const auto& [name, t] : extra) write_tensor(t);
  f.flush();
  if (!f) fail(path, "write failed");
  f.close();
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(path, "cannot open");
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 8) != 0) {
    fail(path, "not an EMSRDPN1 checkpoint");
  }
  const unsigned char* lenb =
      reinterpret_cast<const unsigned char*>(buf.data() + 8);
  const std::uint32_t hlen = static_cast<std::uint32_t>(lenb[0]) |
                             (static_cast<std::uint32_t>(lenb[1]) << 8) |
                             (static_cast<std::uint32_t>(lenb[2]) << 16) |
                             (static_cast<std::uint32_t>(lenb[3]) << 24);
  if (buf.size() < 12 + static_cast<std::size_t>(hlen)) {
    fail(path, "truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(12, hlen));
  } catch (const nlohmann::json::exception& e) {
    fail(path, std::string("bad header: ") + e.what());
  }

  LoadedCheckpoint out;
  out.config = network_config_from_json(header.at("config"));
  const std::map<std::string, Shape> expected = expected_shapes(out.config);

  std::map<std::string, TensorF> loaded;
  std::vector<std::string> order;
  std::size_t off = 12 + hlen;
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto sh = entry.at("shape");
    if (sh.size() != 4) fail(path, "bad shape for " + name);
    TensorF t(sh[0].get<int>(), sh[1].get<int>(), sh[2].get<int>(),
              sh[3].get<int>());
    const std::size_t bytes = t.data.size() * sizeof(float);
    if (buf.size() - off < bytes) fail(path, "truncated payload at " + name);
    std::memcpy(t.data.data(), buf.data() + off, bytes);
    off += bytes;
    if (loaded.count(name)) fail(path, "duplicate tensor " + name);
    loaded.emplace(name, std::move(t));
    order.push_back(name);
  }
  if (off != buf.size()) fail(path, "trailing bytes after payload");

  for (const auto& [name, shape] : expected) {
    auto it = loaded.find(name);
    if (it == loaded.end()) fail(path, "missing parameter " + name);
    if (!(it->second.shape == shape)) {
      fail(path, "parameter " + name + " shape " + it->second.shape.str() +
                     " does not match config " + shape.str());
    }
  }
  // Store in canonical layer order regardless of file order.
  for (const LayerSpec& l : conv_layer_shapes(out.config)) {
    out.params.add(l.name + ".weight", loaded.at(l.name + ".weight"));
    out.params.add(l.name + ".bias", loaded.at(l.name + ".bias"));
  }
  for (const std::string& name : order) {
    if (expected.count(name)) continue;
    check_extra_name(name, expected, loaded.at(name).shape, path);
    out.extra.emplace_back(name, std::move(loaded.at(name)));
  }

  if (header.contains("training")) {
    const auto& tr = header.at("training");
    out.training.present = true;
    out.training.iter = tr.at("iter").get<std::int64_t>();
    out.training.rng = tr.at("rng").get<std::string>();
    for (const auto& [k, v] : tr.at("adam_steps").items()) {
      if (!expected.count(k)) fail(path, "adam step counter for unknown " + k);
      out.training.adam_steps.emplace_back(k, v.get<std::int64_t>());
    }
  }
  return out;
}

}  // namespace emsrdpn
