// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0
//
// EMSRDPN assembly: feature extraction block, D dual path blocks of C dual
// path units plus a transition unit, a hierarchical feature integration
// block with a global residual, and one reconstruction head per scale. The
// trunk is shared across scales; heads are private.

#ifndef EMSRDPN_NETWORK_HPP
#define EMSRDPN_NETWORK_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "emsrdpn/tape.hpp"
#include "emsrdpn/tensor.hpp"

namespace emsrdpn {

struct NetworkConfig {
  int D = 4;   // dual path blocks
  int C = 2;   // dual path units per block
  int G_r = 16;  // residual path width
  int G_d = 16;  // dense path base width
  int G = 16;    // dense growth per unit
  int t = 0;     // bottleneck width of the unit's 1x1 conv; 0 = G_r + G_d
  std::vector<int> scales{2, 3, 4};

  int head_width() const { return G_r + G_d; }
  int bottleneck() const { return t > 0 ? t : G_r + G_d; }
  bool has_scale(int s) const;

  // Sorts and dedupes the scale list.
  void normalize();
  // Throws std::invalid_argument on any violated constraint.
  void validate() const;
};

// Sub-pixel stage factors per scale: x2 -> {2}, x3 -> {3}, x4 -> {2,2},
// x8 -> {2,2,2}.
std::vector<int> stage_factors(int s);

struct LayerSpec {
  std::string name;  // parameter base name, e.g. "dpb2.dpu1.w3x3"
  int k = 3;
  int c_in = 0;
  int c_out = 0;
  int scale = 0;  // 0 = shared trunk, otherwise the owning head's scale
  int rho = 1;    // spatial factor of this conv's input relative to x
};

// Canonical enumeration of every convolution in the model; the single source
// of truth for initialization, accounting, and checkpoint validation.
std::vector<LayerSpec> conv_layer_shapes(const NetworkConfig& cfg);

template <typename S>
class ParameterStore {
 public:
  void add(std::string name, Tensor<S> t) {
    if (map_.count(name)) {
      throw std::invalid_argument("params: duplicate name " + name);
    }
    names_.push_back(name);
    map_.emplace(std::move(name), std::move(t));
  }

  bool has(const std::string& name) const { return map_.count(name) != 0; }

  Tensor<S>& at(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) {
      throw std::invalid_argument("params: unknown name " + name);
    }
    return it->second;
  }

  const Tensor<S>& at(const std::string& name) const {
    return const_cast<ParameterStore*>(this)->at(name);
  }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  std::int64_t total_elems() const {
    std::int64_t acc = 0;
    for (const auto& n : names_) acc += map_.at(n).elems();
    return acc;
  }

  template <typename T>
  ParameterStore<T> cast() const {
    ParameterStore<T> out;
    for (const auto& n : names_) out.add(n, map_.at(n).template cast<T>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Tensor<S>> map_;
};

// Fan-in scaled normal weights, zero biases, deterministic per seed.
template <typename S>
ParameterStore<S> init_params(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterStore<S> ps;
  std::mt19937_64 rng(seed);
  NormalSampler normal(rng);
  for (const LayerSpec& l : conv_layer_shapes(cfg)) {
    Tensor<S> w(l.c_out, l.c_in, l.k, l.k);
    const double stddev =
        std::sqrt(2.0 / (static_cast<double>(l.k) * l.k * l.c_in));
    for (S& v : w.data) v = static_cast<S>(normal.next() * stddev);
    ps.add(l.name + ".weight", std::move(w));
    ps.add(l.name + ".bias", Tensor<S>(1, l.c_out, 1, 1));
  }
  return ps;
}

// Builds forward graphs for one network evaluation on a tape. Parameter
// tensors become tape leaves lazily, so only layers actually executed are
// reachable by backward.
template <typename S>
class Runner {
 public:
  using Node = typename Tape<S>::Node;

  // Residual part (G_r channels) and dense part (G_d + j*G channels); either
  // is absent when its configured width is zero.
  struct DualPath {
    std::optional<Node> residual;
    std::optional<Node> dense;
  };

  struct FebOut {
    Node b_minus1;
    DualPath state;
  };

  Runner(Tape<S>& tape, const ParameterStore<S>& params,
         const NetworkConfig& cfg)
      : tape_(tape), params_(params), cfg_(cfg) {
    cfg_.validate();
  }

  FebOut feb(Node x) {
    Node b_minus1 = conv(x, "feb.conv1");
    Node b0 = conv(b_minus1, "feb.conv2");
    return FebOut{b_minus1, split_state(b0)};
  }

  DualPath dpu(const DualPath& st, int d, int c) {
    ++stats::dpu_evals;
    const std::string base =
        "dpb" + std::to_string(d) + ".dpu" + std::to_string(c);
    Node u = join(st);
    Node pre = tape_.relu(u);
    Node bott = conv(pre, base + ".t1x1");
    Node act = tape_.relu(bott);
    Node cn = conv(act, base + ".w3x3");  // G_r + G channels
    DualPath out;
    if (cfg_.G_r > 0 && cfg_.G > 0) {
      std::vector<Node> sp = tape_.split(cn, {cfg_.G_r, cfg_.G});
      out.residual = tape_.add(*st.residual, sp[0]);
      out.dense = tape_.concat({*st.dense, sp[1]});
    } else if (cfg_.G > 0) {
      out.dense = tape_.concat({*st.dense, cn});
    } else {
      out.residual = tape_.add(*st.residual, cn);
    }
    return out;
  }

  // Returns the compressed state and the block output B_d (head_width ch).
  std::pair<DualPath, Node> tu(const DualPath& st, int d) {
    Node u = join(st);
    Node b = conv(u, "dpb" + std::to_string(d) + ".tu");
    return {split_state(b), b};
  }

  Node trunk(Node x) {
    FebOut fe = feb(x);
    DualPath st = fe.state;
    std::vector<Node> blocks;
    blocks.reserve(static_cast<std::size_t>(cfg_.D));
    for (int d = 1; d <= cfg_.D; ++d) {
      for (int c = 1; c <= cfg_.C; ++c) st = dpu(st, d, c);
      auto [next, b_d] = tu(st, d);
      st = next;
      blocks.push_back(b_d);
    }
    Node f = blocks.size() == 1 ? blocks[0] : tape_.concat(blocks);
    Node h1 = conv(f, "hfib.t1x1");
    Node h2 = conv(h1, "hfib.w3x3");
    return tape_.add(h2, fe.b_minus1);
  }

  Node rb(Node h, int s) {
    if (!cfg_.has_scale(s)) {
      throw std::invalid_argument("rb: unknown scale " + std::to_string(s));
    }
    const std::string base = "rb_x" + std::to_string(s);
    Node x = h;
    const std::vector<int> factors = stage_factors(s);
    for (std::size_t j = 0; j < factors.size(); ++j) {
      x = conv(x, base + ".stage" + std::to_string(j + 1));
      x = tape_.pixel_shuffle(x, factors[j]);
    }
    return conv(x, base + ".final");
  }

  Node forward(Node x, int s) { return rb(trunk(x), s); }

  std::map<int, Node> forward_multi(Node x) {
    Node h = trunk(x);
    std::map<int, Node> out;
    for (int s : cfg_.scales) out[s] = rb(h, s);
    return out;
  }

  const std::unordered_map<std::string, Node>& param_nodes() const {
    return pnodes_;
  }

 private:
  Tape<S>& tape_;
  const ParameterStore<S>& params_;
  NetworkConfig cfg_;
  std::unordered_map<std::string, Node> pnodes_;

  Node pnode(const std::string& name) {
    auto it = pnodes_.find(name);
    if (it != pnodes_.end()) return it->second;
    Node n = tape_.input(params_.at(name));
    pnodes_.emplace(name, n);
    return n;
  }

  Node conv(Node x, const std::string& base) {
    const Tensor<S>& w = params_.at(base + ".weight");
    const int pad = (w.shape.h - 1) / 2;
    return tape_.conv2d(x, pnode(base + ".weight"), pnode(base + ".bias"),
                        pad);
  }

  Node join(const DualPath& st) {
    if (st.residual && st.dense) return tape_.concat({*st.residual, *st.dense});
    return st.residual ? *st.residual : *st.dense;
  }

  DualPath split_state(Node b) {
    DualPath st;
    if (cfg_.G_r > 0 && cfg_.G_d > 0) {
      std::vector<Node> sp = tape_.split(b, {cfg_.G_r, cfg_.G_d});
      st.residual = sp[0];
      st.dense = sp[1];
    } else if (cfg_.G_r > 0) {
      st.residual = b;
    } else {
      st.dense = b;
    }
    return st;
  }
};

template <typename S>
Tensor<S> forward_eval(const Tensor<S>& x, int s, const ParameterStore<S>& ps,
                       const NetworkConfig& cfg) {
  Tape<S> tape;
  Runner<S> run(tape, ps, cfg);
  typename Tape<S>::Node y = run.forward(tape.input(x), s);
  return tape.value(y);
}

template <typename S>
std::map<int, Tensor<S>> forward_multi_eval(const Tensor<S>& x,
                                            const ParameterStore<S>& ps,
                                            const NetworkConfig& cfg) {
  Tape<S> tape;
  Runner<S> run(tape, ps, cfg);
  std::map<int, typename Tape<S>::Node> nodes = run.forward_multi(tape.input(x));
  std::map<int, Tensor<S>> out;
  for (const auto& [sc, node] : nodes) out.emplace(sc, tape.value(node));
  return out;
}

// Average over the 8 dihedral transforms: transform the input, run the
// network, undo the transform on the output, accumulate in 64-bit.
template <typename S>
Tensor<S> self_ensemble(const Tensor<S>& x, int s, const ParameterStore<S>& ps,
                        const NetworkConfig& cfg) {
  Tensor<double> acc;
  for (int code = 0; code < 8; ++code) {
    Tensor<S> xt = dihedral_forward(x, code);
    Tensor<S> yt = forward_eval(xt, s, ps, cfg);
    Tensor<S> y = dihedral_forward(yt, dihedral_inverse(code));
    if (code == 0) {
      acc = y.template cast<double>();
    } else {
      for (std::size_t i = 0; i < acc.data.size(); ++i) {
        acc.data[i] += static_cast<double>(y.data[i]);
      }
    }
  }
  for (double& v : acc.data) v /= 8.0;
  return acc.template cast<S>();
}

}  // namespace emsrdpn

#endif  // EMSRDPN_NETWORK_HPP
