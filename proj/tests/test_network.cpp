// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "emsrdpn/network.hpp"
#include "emsrdpn/ops.hpp"
#include "test_util.hpp"

using namespace emsrdpn;
using testutil::fill_uniform;

namespace {

NetworkConfig make_cfg(int D, int C, int gr, int gd, int g,
                       std::vector<int> scales, int t = 0) {
  NetworkConfig cfg;
  cfg.D = D;
  cfg.C = C;
  cfg.G_r = gr;
  cfg.G_d = gd;
  cfg.G = g;
  cfg.t = t;
  cfg.scales = std::move(scales);
  return cfg;
}

TensorF random_input(int n, int h, int w, std::uint64_t seed) {
  TensorF x(n, 3, h, w);
  std::mt19937_64 rng(seed);
  fill_uniform(&x, &rng, 0.0, 1.0);
  return x;
}

const LayerSpec& find_layer(const std::vector<LayerSpec>& layers,
                            const std::string& name) {
  for (const LayerSpec& l : layers) {
    if (l.name == name) return l;
  }
  throw std::runtime_error("missing layer " + name);
}

// Center-only power-of-two taps and dyadic biases: every multiply shifts
// the exponent and every sum of the resulting short-mantissa values is
// exact, so results do not depend on accumulation order. (Plain float
// weights fail here: the GEMM rounds identical columns differently
// depending on panel position.)
void set_dyadic(ParameterStore<float>* ps, float tap) {
  for (const std::string& name : ps->names()) {
    TensorF& t = ps->at(name);
    if (name.ends_with(".weight")) {
      const int k = t.shape.h;
      std::fill(t.data.begin(), t.data.end(), 0.0f);
      for (int o = 0; o < t.shape.n; ++o) {
        for (int i = 0; i < t.shape.c; ++i) t.at(o, i, k / 2, k / 2) = tap;
      }
    } else {
      std::fill(t.data.begin(), t.data.end(), 0.125f);
    }
  }
}

// Rewrites a 3x3 kernel as a function of tap symmetry class only (center,
// edge, corner), making the conv commute with the dihedral group.
template <typename S>
void make_isotropic(Tensor<S>* w) {
  if (w->shape.h == 1) return;
  for (int o = 0; o < w->shape.n; ++o) {
    for (int i = 0; i < w->shape.c; ++i) {
      const S center = w->at(o, i, 1, 1);
      const S edge = w->at(o, i, 0, 1);
      const S corner = w->at(o, i, 0, 0);
      for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 3; ++x) {
          const int cls = (y == 1 && x == 1) ? 0 : ((y + x) % 2 == 1 ? 1 : 2);
          w->at(o, i, y, x) = cls == 0 ? center : (cls == 1 ? edge : corner);
        }
      }
    }
  }
}

// Copies channel 0's filter and bias to every output channel so all output
// feature maps coincide and pixel_shuffle degenerates to replication.
template <typename S>
void equalize_output_channels(Tensor<S>* w, Tensor<S>* b) {
  const std::size_t row = w->data.size() / static_cast<std::size_t>(w->shape.n);
  for (int o = 1; o < w->shape.n; ++o) {
    std::copy(w->data.begin(), w->data.begin() + static_cast<std::ptrdiff_t>(row),
              w->data.begin() + static_cast<std::ptrdiff_t>(row) * o);
    b->data[static_cast<std::size_t>(o)] = b->data[0];
  }
}

}  // namespace

TEST_CASE("config validation and normalization") {
  NetworkConfig ok = make_cfg(2, 2, 4, 4, 4, {4, 2, 2});
  ok.normalize();
  CHECK(ok.scales == std::vector<int>{2, 4});
  CHECK_NOTHROW(ok.validate());
  CHECK(ok.head_width() == 8);
  CHECK(ok.bottleneck() == 8);
  CHECK(make_cfg(1, 1, 4, 4, 4, {2}, 6).bottleneck() == 6);

  CHECK_THROWS_AS(make_cfg(0, 1, 4, 4, 4, {2}).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_cfg(1, 0, 4, 4, 4, {2}).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_cfg(1, 1, 0, 0, 0, {2}).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_cfg(1, 1, 4, 4, 8, {2}).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_cfg(1, 1, 4, 4, 4, {}).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_cfg(1, 1, 4, 4, 4, {5}).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_cfg(1, 1, 4, 4, 4, {4, 2}).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_cfg(1, 1, -1, 4, 4, {2}).validate(),
                  std::invalid_argument);
  CHECK_NOTHROW(make_cfg(1, 1, 8, 0, 0, {2}).validate());
  CHECK_NOTHROW(make_cfg(1, 1, 0, 8, 8, {2}).validate());
}

TEST_CASE("stage factors per scale") {
  CHECK(stage_factors(2) == std::vector<int>{2});
  CHECK(stage_factors(3) == std::vector<int>{3});
  CHECK(stage_factors(4) == std::vector<int>{2, 2});
  CHECK(stage_factors(8) == std::vector<int>{2, 2, 2});
  CHECK_THROWS_AS(stage_factors(5), std::invalid_argument);
}

TEST_CASE("layer shape algebra over a config sweep") {
  for (int D : {1, 2, 3}) {
    for (int C : {1, 2, 3}) {
      for (int w : {1, 2, 4, 8}) {
        for (int mode : {0, 1, 2}) {
          const int gr = mode == 2 ? 0 : w;
          const int gd = mode == 1 ? 0 : w;
          const int g = gd;
          if (gr + gd == 0) continue;
          NetworkConfig cfg = make_cfg(D, C, gr, gd, g, {2, 3, 4, 8});
          const int head = gr + gd;
          const auto layers = conv_layer_shapes(cfg);

          const LayerSpec& f1 = find_layer(layers, "feb.conv1");
          CHECK(f1.k == 3);
          CHECK(f1.c_in == 3);
          CHECK(f1.c_out == head);
          CHECK(find_layer(layers, "feb.conv2").c_out == head);

          for (int d = 1; d <= D; ++d) {
            const std::string db = "dpb" + std::to_string(d);
            for (int c = 1; c <= C; ++c) {
              const std::string ub = db + ".dpu" + std::to_string(c);
              const LayerSpec& t1 = find_layer(layers, ub + ".t1x1");
              CHECK(t1.k == 1);
              CHECK(t1.c_in == gr + gd + (c - 1) * g);
              CHECK(t1.c_out == cfg.bottleneck());
              const LayerSpec& w3 = find_layer(layers, ub + ".w3x3");
              CHECK(w3.k == 3);
              CHECK(w3.c_in == cfg.bottleneck());
              CHECK(w3.c_out == gr + g);
            }
            const LayerSpec& tu = find_layer(layers, db + ".tu");
            CHECK(tu.k == 1);
            CHECK(tu.c_in == gr + gd + C * g);
            CHECK(tu.c_out == head);
          }

          CHECK(find_layer(layers, "hfib.t1x1").c_in == D * head);
          CHECK(find_layer(layers, "hfib.t1x1").c_out == head);
          CHECK(find_layer(layers, "hfib.w3x3").c_in == head);

          for (int s : cfg.scales) {
            const std::string rb = "rb_x" + std::to_string(s);
            const auto factors = stage_factors(s);
            for (std::size_t j = 0; j < factors.size(); ++j) {
              const LayerSpec& st =
                  find_layer(layers, rb + ".stage" + std::to_string(j + 1));
              CHECK(st.c_in == head);
              CHECK(st.c_out == head * factors[j] * factors[j]);
              CHECK(st.scale == s);
            }
            const LayerSpec& fin = find_layer(layers, rb + ".final");
            CHECK(fin.c_in == head);
            CHECK(fin.c_out == 3);
            CHECK(fin.rho == s);
          }
        }
      }
    }
  }
}

TEST_CASE("runner state widths follow the dual path algebra") {
  for (int mode : {0, 1, 2}) {
    const int w = 4;
    const int gr = mode == 2 ? 0 : w;
    const int gd = mode == 1 ? 0 : w;
    NetworkConfig cfg = make_cfg(2, 3, gr, gd, gd, {2});
    ParameterStore<float> ps = init_params<float>(cfg, 9);
    TapeF tape;
    Runner<float> run(tape, ps, cfg);
    TensorF x = random_input(1, 5, 6, 10);

    auto fe = run.feb(tape.input(x));
    CHECK(tape.value(fe.b_minus1).shape == Shape{1, gr + gd, 5, 6});
    auto st = fe.state;
    if (gr > 0) CHECK(tape.value(*st.residual).shape.c == gr);
    if (gd > 0) CHECK(tape.value(*st.dense).shape.c == gd);
    CHECK(st.residual.has_value() == (gr > 0));
    CHECK(st.dense.has_value() == (gd > 0));

    for (int d = 1; d <= 2; ++d) {
      for (int c = 1; c <= 3; ++c) {
        st = run.dpu(st, d, c);
        if (gr > 0) CHECK(tape.value(*st.residual).shape.c == gr);
        if (gd > 0) CHECK(tape.value(*st.dense).shape.c == gd + c * gd);
      }
      auto [next, bd] = run.tu(st, d);
      st = next;
      CHECK(tape.value(bd).shape == Shape{1, gr + gd, 5, 6});
    }
  }
}

TEST_CASE("feb zero input with zero bias gives zero outputs") {
  NetworkConfig cfg = make_cfg(1, 1, 4, 4, 4, {2});
  ParameterStore<float> ps = init_params<float>(cfg, 3);
  TapeF tape;
  Runner<float> run(tape, ps, cfg);
  auto fe = run.feb(tape.input(TensorF(1, 3, 4, 4)));
  for (float v : tape.value(fe.b_minus1).data) CHECK(v == 0.0f);
  for (float v : tape.value(*fe.state.residual).data) CHECK(v == 0.0f);
  for (float v : tape.value(*fe.state.dense).data) CHECK(v == 0.0f);
}

TEST_CASE("dpu with zero weights keeps the residual and grows zero channels") {
  NetworkConfig cfg = make_cfg(1, 1, 4, 4, 4, {2});
  ParameterStore<float> ps = init_params<float>(cfg, 5);
  for (const std::string& base : {std::string("dpb1.dpu1.t1x1"),
                                  std::string("dpb1.dpu1.w3x3")}) {
    for (float& v : ps.at(base + ".weight").data) v = 0.0f;
    for (float& v : ps.at(base + ".bias").data) v = 0.0f;
  }
  TapeF tape;
  Runner<float> run(tape, ps, cfg);
  auto fe = run.feb(tape.input(random_input(1, 6, 6, 15)));
  auto out = run.dpu(fe.state, 1, 1);
  CHECK(tape.value(*out.residual).equals(tape.value(*fe.state.residual)));
  const TensorF& dense = tape.value(*out.dense);
  CHECK(dense.shape.c == 8);
  const TensorF& dense_in = tape.value(*fe.state.dense);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) {
      for (int c = 0; c < 4; ++c) {
        CHECK(dense.at(0, c, y, x) == dense_in.at(0, c, y, x));
      }
      for (int c = 4; c < 8; ++c) CHECK(dense.at(0, c, y, x) == 0.0f);
    }
  }
}

TEST_CASE("residual-only dpu is a pre-activation bottleneck unit") {
  NetworkConfig cfg = make_cfg(1, 1, 4, 0, 0, {2});
  ParameterStore<float> ps = init_params<float>(cfg, 7);
  TapeF tape;
  Runner<float> run(tape, ps, cfg);
  auto fe = run.feb(tape.input(random_input(1, 5, 5, 16)));
  auto out = run.dpu(fe.state, 1, 1);
  CHECK_FALSE(out.dense.has_value());

  const TensorF r = tape.value(*fe.state.residual);
  TensorF ref = add_forward(
      r, conv2d_forward(
             relu_forward(conv2d_forward(relu_forward(r),
                                         ps.at("dpb1.dpu1.t1x1.weight"),
                                         ps.at("dpb1.dpu1.t1x1.bias"), 0)),
             ps.at("dpb1.dpu1.w3x3.weight"), ps.at("dpb1.dpu1.w3x3.bias"), 1));
  CHECK(tape.value(*out.residual).equals(ref));
}

TEST_CASE("dense-only dpu appends grown channels") {
  NetworkConfig cfg = make_cfg(1, 1, 0, 4, 4, {2});
  ParameterStore<float> ps = init_params<float>(cfg, 8);
  TapeF tape;
  Runner<float> run(tape, ps, cfg);
  auto fe = run.feb(tape.input(random_input(1, 5, 5, 17)));
  auto out = run.dpu(fe.state, 1, 1);
  CHECK_FALSE(out.residual.has_value());

  const TensorF d = tape.value(*fe.state.dense);
  TensorF grown = conv2d_forward(
      relu_forward(conv2d_forward(relu_forward(d),
                                  ps.at("dpb1.dpu1.t1x1.weight"),
                                  ps.at("dpb1.dpu1.t1x1.bias"), 0)),
      ps.at("dpb1.dpu1.w3x3.weight"), ps.at("dpb1.dpu1.w3x3.bias"), 1);
  std::vector<const TensorF*> parts{&d, &grown};
  CHECK(tape.value(*out.dense)
            .equals(concat_forward(std::span<const TensorF* const>(parts))));
}

TEST_CASE("zeroed trunk reduces to the global residual") {
  NetworkConfig cfg = make_cfg(2, 2, 4, 4, 4, {2});
  ParameterStore<float> ps = init_params<float>(cfg, 11);
  std::mt19937_64 rng(12);
  for (const std::string& name : ps.names()) {
    if (name.rfind("rb_x", 0) == 0) continue;
    for (float& v : ps.at(name).data) v = 0.0f;
  }
  // Bias-only FEB conv1: B_-1 is a constant per-channel map of any input.
  fill_uniform(&ps.at("feb.conv1.bias"), &rng, -1.0, 1.0);

  TensorF x = random_input(1, 6, 7, 18);
  TapeF tape;
  Runner<float> run(tape, ps, cfg);
  auto h = run.trunk(tape.input(x));
  const TensorF& hv = tape.value(h);
  CHECK(hv.shape == Shape{1, 8, 6, 7});
  for (int c = 0; c < 8; ++c) {
    const float want = ps.at("feb.conv1.bias").data[static_cast<std::size_t>(c)];
    for (int y = 0; y < 6; ++y) {
      for (int xx = 0; xx < 7; ++xx) {
        CHECK(hv.at(0, c, y, xx) == want);
      }
    }
  }
}

TEST_CASE("zeroed head emits a zero image") {
  NetworkConfig cfg = make_cfg(1, 1, 4, 4, 4, {2, 4});
  ParameterStore<float> ps = init_params<float>(cfg, 13);
  for (const std::string& name : ps.names()) {
    if (name.rfind("rb_x4", 0) == 0) {
      for (float& v : ps.at(name).data) v = 0.0f;
    }
  }
  TensorF x = random_input(1, 5, 5, 19);
  TensorF y4 = forward_eval(x, 4, ps, cfg);
  CHECK(y4.shape == Shape{1, 3, 20, 20});
  for (float v : y4.data) CHECK(v == 0.0f);
  TensorF y2 = forward_eval(x, 2, ps, cfg);
  bool any = false;
  for (float v : y2.data) any = any || v != 0.0f;
  CHECK(any);
}

TEST_CASE("reference configuration widths and forward shapes") {
  NetworkConfig cfg = make_cfg(16, 4, 64, 64, 64, {2, 3, 4, 8});
  const auto layers = conv_layer_shapes(cfg);
  CHECK(find_layer(layers, "feb.conv1").c_out == 128);
  CHECK(find_layer(layers, "dpb1.dpu2.t1x1").c_in == 192);
  CHECK(find_layer(layers, "dpb1.dpu4.t1x1").c_in == 320);
  CHECK(find_layer(layers, "dpb1.dpu1.t1x1").c_out == 128);
  CHECK(find_layer(layers, "dpb7.tu").c_in == 384);
  CHECK(find_layer(layers, "dpb7.tu").c_out == 128);
  CHECK(find_layer(layers, "hfib.t1x1").c_in == 2048);
  CHECK(find_layer(layers, "rb_x3.stage1").c_out == 1152);
  CHECK(find_layer(layers, "rb_x8.stage3").c_out == 512);

  ParameterStore<float> ps = init_params<float>(cfg, 21);
  TensorF x = random_input(1, 4, 4, 22);
  auto outs = forward_multi_eval(x, ps, cfg);
  REQUIRE(outs.size() == 4);
  CHECK(outs.at(2).shape == Shape{1, 3, 8, 8});
  CHECK(outs.at(3).shape == Shape{1, 3, 12, 12});
  CHECK(outs.at(4).shape == Shape{1, 3, 16, 16});
  CHECK(outs.at(8).shape == Shape{1, 3, 32, 32});
  for (const auto& [s, y] : outs) CHECK(y.all_finite());
}

TEST_CASE("init_params is seed-deterministic with zero biases") {
  NetworkConfig cfg = make_cfg(2, 2, 8, 8, 8, {2, 3});
  ParameterStore<float> a = init_params<float>(cfg, 42);
  ParameterStore<float> b = init_params<float>(cfg, 42);
  ParameterStore<float> c = init_params<float>(cfg, 43);
  REQUIRE(a.names() == b.names());
  bool all_equal = true, any_diff = false;
  for (const std::string& name : a.names()) {
    all_equal = all_equal && a.at(name).equals(b.at(name));
    any_diff = any_diff || !a.at(name).equals(c.at(name));
    if (name.size() > 5 && name.substr(name.size() - 5) == ".bias") {
      for (float v : a.at(name).data) CHECK(v == 0.0f);
    }
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("init_params weight spread matches fan-in scaling") {
  // dpb1.dpu1.w3x3 at these widths is 3x3 with c_in = 128.
  NetworkConfig cfg = make_cfg(1, 1, 64, 64, 64, {2});
  ParameterStore<float> ps = init_params<float>(cfg, 33);
  const TensorF& w = ps.at("dpb1.dpu1.w3x3.weight");
  REQUIRE(w.shape.c == 128);
  REQUIRE(w.shape.h == 3);
  double sum = 0.0, sq = 0.0;
  for (float v : w.data) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(w.data.size());
  const double mean = sum / n;
  const double std = std::sqrt(sq / n - mean * mean);
  const double want = std::sqrt(2.0 / 1152.0);
  CHECK(std::abs(std - want) / want < 0.05);
  CHECK(std::abs(mean) < 5.0 * want / std::sqrt(n));
}

TEST_CASE("forward equals forward_multi bitwise and reuses the trunk") {
  NetworkConfig cfg = make_cfg(3, 2, 4, 4, 4, {2, 3, 4});
  ParameterStore<float> ps = init_params<float>(cfg, 55);
  TensorF x = random_input(2, 6, 5, 56);

  const std::uint64_t before = stats::dpu_evals;
  auto multi = forward_multi_eval(x, ps, cfg);
  CHECK(stats::dpu_evals - before == 3 * 2);

  REQUIRE(multi.size() == 3);
  for (int s : cfg.scales) {
    TensorF single = forward_eval(x, s, ps, cfg);
    CHECK(single.equals(multi.at(s)));
    CHECK(single.shape == Shape{2, 3, 6 * s, 5 * s});
  }

  CHECK_THROWS_AS(forward_eval(x, 8, ps, cfg), std::invalid_argument);
}

TEST_CASE("forward evaluation is deterministic") {
  NetworkConfig cfg = make_cfg(2, 1, 4, 4, 4, {3});
  ParameterStore<float> ps = init_params<float>(cfg, 77);
  TensorF x = random_input(1, 7, 7, 78);
  CHECK(forward_eval(x, 3, ps, cfg).equals(forward_eval(x, 3, ps, cfg)));
}

TEST_CASE("end-to-end gradients match finite differences") {
  NetworkConfig cfg = make_cfg(1, 1, 2, 2, 2, {2});
  ParameterStore<double> ps = init_params<double>(cfg, 101);
  // Zero-initialized biases put pixels whose inputs are all negative exactly
  // on the relu kink, where finite differences are one-sided; nudge every
  // bias off zero.
  std::mt19937_64 brng(105);
  for (const std::string& name : ps.names()) {
    if (name.ends_with(".bias")) {
      fill_uniform(&ps.at(name), &brng, 0.05, 0.25);
      for (double& v : ps.at(name).data) {
        if (brng() & 1) v = -v;
      }
    }
  }
  TensorD x(1, 3, 8, 8);
  TensorD target(1, 3, 16, 16);
  std::mt19937_64 rng(102);
  fill_uniform(&x, &rng, 0.0, 1.0);
  fill_uniform(&target, &rng, 2.0, 3.0);

  TapeD tape;
  Runner<double> run(tape, ps, cfg);
  auto loss = tape.mae(run.forward(tape.input(x), 2), tape.input(target));
  tape.backward(loss);

  const auto& pnodes = run.param_nodes();
  auto loss_fn = [&] {
    return static_cast<double>(mae_forward(forward_eval(x, 2, ps, cfg), target));
  };
  double worst = 0.0;
  for (const std::string& name : ps.names()) {
    auto it = pnodes.find(name);
    REQUIRE(it != pnodes.end());
    const TensorD* g = tape.grad(it->second);
    REQUIRE(g != nullptr);
    worst = std::max(worst, testutil::max_grad_rel_err(loss_fn, &ps.at(name).data,
                                                       g->data, 1e-5));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("loss at one scale leaves other heads unreachable") {
  NetworkConfig cfg = make_cfg(1, 1, 2, 2, 2, {2, 4});
  ParameterStore<float> ps = init_params<float>(cfg, 103);
  TensorF x = random_input(1, 6, 6, 104);
  TensorF target(1, 3, 12, 12);

  TapeF tape;
  Runner<float> run(tape, ps, cfg);
  auto loss = tape.mae(run.forward(tape.input(x), 2), tape.input(target));
  tape.backward(loss);

  const auto& pn = run.param_nodes();
  for (const std::string& name : ps.names()) {
    auto it = pn.find(name);
    if (name.rfind("rb_x4", 0) == 0) {
      CHECK(it == pn.end());  // never became part of the graph
    } else {
      REQUIRE(it != pn.end());
      CHECK(tape.grad(it->second) != nullptr);
    }
  }
}

TEST_CASE("degenerate modes run end to end") {
  for (int mode : {1, 2}) {
    NetworkConfig cfg = mode == 1 ? make_cfg(2, 2, 8, 0, 0, {2, 3})
                                  : make_cfg(2, 2, 0, 8, 8, {2, 3});
    ParameterStore<float> ps = init_params<float>(cfg, 105);
    TensorF x = random_input(1, 6, 6, 106);
    auto outs = forward_multi_eval(x, ps, cfg);
    CHECK(outs.at(2).shape == Shape{1, 3, 12, 12});
    CHECK(outs.at(3).shape == Shape{1, 3, 18, 18});
    CHECK(outs.at(2).all_finite());

    TapeF tape;
    Runner<float> run(tape, ps, cfg);
    auto loss = tape.mae(run.forward(tape.input(x), 2),
                         tape.input(TensorF(1, 3, 12, 12)));
    tape.backward(loss);
    for (const auto& [name, node] : run.param_nodes()) {
      if (name.rfind("rb_x3", 0) == 0) continue;
      CHECK(tape.grad(node) != nullptr);
    }
  }
}

TEST_CASE("self_ensemble is deterministic") {
  NetworkConfig cfg = make_cfg(1, 1, 4, 4, 4, {2});
  ParameterStore<float> ps = init_params<float>(cfg, 107);
  TensorF x = random_input(1, 5, 7, 108);
  TensorF a = self_ensemble(x, 2, ps, cfg);
  TensorF b = self_ensemble(x, 2, ps, cfg);
  CHECK(a.equals(b));
  CHECK(a.shape == Shape{1, 3, 10, 14});
}

TEST_CASE("self_ensemble on a constant image with exact arithmetic") {
  // Center-only taps remove border effects and make every output channel of
  // a layer identical, so pixel_shuffle replicates and a constant input
  // stays constant. Dyadic values keep all of it exact in float, so the 8
  // ensemble branches coincide bitwise with the plain forward.
  NetworkConfig cfg = make_cfg(2, 2, 4, 4, 4, {2, 4});
  ParameterStore<float> ps = init_params<float>(cfg, 109);
  set_dyadic(&ps, 0.25f);

  TensorF x = TensorF::full(1, 3, 6, 6, 0.5f);
  for (int s : cfg.scales) {
    TensorF single = forward_eval(x, s, ps, cfg);
    // Output must be spatially constant per channel for the symmetry to hold.
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < single.shape.h; ++y) {
        for (int xx = 0; xx < single.shape.w; ++xx) {
          CHECK(single.at(0, c, y, xx) == single.at(0, c, 0, 0));
        }
      }
    }
    CHECK(self_ensemble(x, s, ps, cfg).equals(single));
  }
}

TEST_CASE("self_ensemble of an equivariant network is a single pass") {
  NetworkConfig cfg = make_cfg(1, 2, 4, 4, 4, {2, 4});
  ParameterStore<double> ps = init_params<double>(cfg, 111);
  for (const std::string& name : ps.names()) {
    if (name.size() > 7 && name.substr(name.size() - 7) == ".weight") {
      make_isotropic(&ps.at(name));
    }
  }
  for (int s : cfg.scales) {
    const std::string rb = "rb_x" + std::to_string(s);
    const auto factors = stage_factors(s);
    for (std::size_t j = 0; j < factors.size(); ++j) {
      const std::string base = rb + ".stage" + std::to_string(j + 1);
      equalize_output_channels(&ps.at(base + ".weight"),
                               &ps.at(base + ".bias"));
    }
  }

  TensorD x(1, 3, 6, 9);
  std::mt19937_64 rng(112);
  fill_uniform(&x, &rng, 0.0, 1.0);
  for (int s : cfg.scales) {
    TensorD single = forward_eval(x, s, ps, cfg);
    TensorD ens = self_ensemble(x, s, ps, cfg);
    REQUIRE(ens.shape == single.shape);
    for (std::size_t i = 0; i < ens.data.size(); ++i) {
      CHECK(std::abs(ens.data[i] - single.data[i]) < 1e-9);
    }
  }
}
