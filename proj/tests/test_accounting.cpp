// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdint>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "emsrdpn/accounting.hpp"
#include "emsrdpn/network.hpp"
#include "test_util.hpp"

using namespace emsrdpn;

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

NetworkConfig reference_cfg(std::vector<int> scales) {
  return make_cfg(16, 4, 64, 64, 64, std::move(scales));
}

}  // namespace

TEST_CASE("count_params on a hand-summed minimal config") {
  // D=C=1, all widths 1, one x2 head; every conv summed by hand:
  // feb.conv1 3->2 (56) + feb.conv2 2->2 (38) + t1x1 2->2 (6) +
  // w3x3 2->2 (38) + tu 3->2 (8) + hfib.t1x1 2->2 (6) + hfib.w3x3 2->2 (38) +
  // stage1 2->8 (152) + final 2->3 (57) = 399.
  NetworkConfig cfg = make_cfg(1, 1, 1, 1, 1, {2});
  ParamCounts pc = count_params(cfg);
  CHECK(pc.trunk == 56 + 38 + 6 + 38 + 8 + 6 + 38);
  CHECK(pc.heads.at(2) == 152 + 57);
  CHECK(pc.total == 399);
}

TEST_CASE("count_params equals materialized parameter element counts") {
  std::mt19937_64 rng(7);
  int checked = 0;
  for (int iter = 0; iter < 24; ++iter) {
    const int D = 1 + static_cast<int>(rng() % 4);
    const int C = 1 + static_cast<int>(rng() % 4);
    const int mode = static_cast<int>(rng() % 3);
    const int w = 1 << (rng() % 4);
    const int gr = mode == 2 ? 0 : w;
    const int gd = mode == 1 ? 0 : w;
    const int t = (rng() % 2) ? 0 : 1 + static_cast<int>(rng() % 8);
    std::vector<int> scales;
    for (int s : {2, 3, 4, 8}) {
      if (rng() % 2) scales.push_back(s);
    }
    if (scales.empty()) scales.push_back(2);
    NetworkConfig cfg = make_cfg(D, C, gr, gd, gd, scales, t);
    ParamCounts pc = count_params(cfg);
    ParameterStore<float> ps = init_params<float>(cfg, 1);
    CHECK(pc.total == ps.total_elems());

    std::int64_t heads = 0;
    for (const auto& [s, v] : pc.heads) heads += v;
    CHECK(pc.total == pc.trunk + heads);
    ++checked;
  }
  CHECK(checked == 24);
}

TEST_CASE("frozen parameter totals at the reference configuration") {
  CHECK(count_params(reference_cfg({2})).total == 13231875);
  CHECK(count_params(reference_cfg({3})).total == 13969795);
  CHECK(count_params(reference_cfg({4})).total == 13822211);
  CHECK(count_params(reference_cfg({8})).total == 14412547);
  CHECK(count_params(reference_cfg({2, 3, 4, 8})).total == 17522188);

  // Heads are additive over the shared trunk.
  ParamCounts all = count_params(reference_cfg({2, 3, 4, 8}));
  std::int64_t sum = all.trunk;
  for (int s : {2, 3, 4, 8}) {
    ParamCounts one = count_params(reference_cfg({s}));
    CHECK(one.trunk == all.trunk);
    CHECK(one.heads.at(s) == all.heads.at(s));
    sum += all.heads.at(s);
  }
  CHECK(all.total == sum);

  // Two x2 stages are forced by the frozen x4 total: swapping them for a
  // single x4 stage (3x3, 128 -> 128*16) would land on 15,002,883 instead.
  const std::int64_t two_stage = 2 * ((9 * 128 + 1) * (128 * 4));
  const std::int64_t one_stage = (9 * 128 + 1) * (128 * 16);
  CHECK(count_params(reference_cfg({4})).total - two_stage + one_stage ==
        15002883);
}

TEST_CASE("special-row configurations match their derived totals") {
  NetworkConfig residual_only = make_cfg(16, 4, 135, 0, 0, {4});
  NetworkConfig dense_only = make_cfg(16, 4, 0, 122, 122, {4});
  const std::int64_t r = count_params(residual_only).total;
  const std::int64_t d = count_params(dense_only).total;
  CHECK(r == 13915803);
  CHECK(d == 13748671);
  // Reference ballpark: within 2% of the x4 dual path model.
  CHECK(std::abs(static_cast<double>(r) - 13915803.0) / 13915803.0 < 0.02);
  CHECK(std::abs(static_cast<double>(d) - 13748671.0) / 13748671.0 < 0.02);
}

TEST_CASE("frozen MAC totals at 256x256 inputs") {
  CHECK(count_flops_trunk(reference_cfg({2, 3, 4, 8}), 256, 256) ==
        828249210880ULL);
  CHECK(count_flops_ssi(reference_cfg({2}), 256, 256, 2) == 867844227072ULL);
  CHECK(count_flops_ssi(reference_cfg({3}), 256, 256, 3) == 917337997312ULL);
  CHECK(count_flops_ssi(reference_cfg({4}), 256, 256, 4) == 1025317535744ULL);
  CHECK(count_flops_ssi(reference_cfg({8}), 256, 256, 8) == 1655210770432ULL);
  CHECK(count_flops_msi(reference_cfg({2, 3, 4, 8}), 256, 256) ==
        1980962897920ULL);

  // Rounded to hundredths of 10^12 these are the frozen reference entries.
  auto tera2 = [](std::uint64_t v) {
    return std::llround(static_cast<double>(v) / 1e10);
  };
  CHECK(tera2(count_flops_ssi(reference_cfg({2}), 256, 256, 2)) == 87);
  CHECK(tera2(count_flops_ssi(reference_cfg({3}), 256, 256, 3)) == 92);
  CHECK(tera2(count_flops_ssi(reference_cfg({4}), 256, 256, 4)) == 103);
  CHECK(tera2(count_flops_ssi(reference_cfg({8}), 256, 256, 8)) == 166);
  CHECK(tera2(count_flops_msi(reference_cfg({2, 3, 4, 8}), 256, 256)) == 198);
}

TEST_CASE("mac identities") {
  NetworkConfig cfg = make_cfg(2, 2, 4, 4, 4, {2, 3, 4});

  // MSI = trunk + all heads; SSI = trunk + one head.
  std::uint64_t heads = 0;
  for (int s : cfg.scales) {
    const std::uint64_t head = count_flops_head(cfg, 12, 10, s);
    CHECK(count_flops_ssi(cfg, 12, 10, s) ==
          count_flops_trunk(cfg, 12, 10) + head);
    heads += head;
  }
  CHECK(count_flops_msi(cfg, 12, 10) ==
        count_flops_trunk(cfg, 12, 10) + heads);

  // Sharing the trunk beats running each scale separately.
  std::uint64_t ssi_sum = 0;
  for (int s : cfg.scales) ssi_sum += count_flops_ssi(cfg, 12, 10, s);
  CHECK(count_flops_msi(cfg, 12, 10) < ssi_sum);

  // MACs scale linearly in the pixel count.
  CHECK(count_flops_msi(cfg, 24, 10) == 2 * count_flops_msi(cfg, 12, 10));
  CHECK(count_flops_trunk(cfg, 12, 20) == 2 * count_flops_trunk(cfg, 12, 10));

  CHECK_THROWS_AS(count_flops_head(cfg, 12, 10, 8), std::invalid_argument);
}

TEST_CASE("instrumented conv MACs equal the analytic count") {
  NetworkConfig cfg = make_cfg(1, 1, 2, 2, 2, {2, 3});
  ParameterStore<float> ps = init_params<float>(cfg, 5);
  TensorF x(1, 3, 8, 6);
  std::mt19937_64 rng(6);
  testutil::fill_uniform(&x, &rng, 0.0, 1.0);

  std::uint64_t before = stats::conv_macs;
  forward_eval(x, 2, ps, cfg);
  CHECK(stats::conv_macs - before == count_flops_ssi(cfg, 8, 6, 2));

  before = stats::conv_macs;
  forward_multi_eval(x, ps, cfg);
  CHECK(stats::conv_macs - before == count_flops_msi(cfg, 8, 6));

  // Batch of n multiplies the instrumented count by n.
  TensorF xb(3, 3, 8, 6);
  testutil::fill_uniform(&xb, &rng, 0.0, 1.0);
  before = stats::conv_macs;
  forward_eval(xb, 2, ps, cfg);
  CHECK(stats::conv_macs - before == 3 * count_flops_ssi(cfg, 8, 6, 2));
}

TEST_CASE("activation estimate matches a hand sum on the minimal config") {
  // D=C=1, widths 1, x2 head, op-produced slots in units of h*w elements:
  // feb.conv1 2 + feb.conv2 2 + feb split 1+1 + dpu concat 2 + relu 2 +
  // t1x1 2 + relu 2 + w3x3 2 + dpu split 1+1 + add 1 + dpu concat 2 +
  // tu concat 3 + tu conv 2 + tu split 1+1 + hfib.t1x1 2 + hfib.w3x3 2 +
  // add 2 + stage1 8 + shuffle 8 (at 4x area over the grid it feeds) +
  // final 12 = 62 elements per input pixel.
  NetworkConfig cfg = make_cfg(1, 1, 1, 1, 1, {2});
  ActivationEstimate est = estimate_activation_ssi(cfg, 8, 8, 2);
  CHECK(est.total_bytes == 62ULL * 64 * 4);
  CHECK(est.peak_bytes <= est.total_bytes);
  CHECK(est.peak_bytes > 0);

  // Linear in the pixel count.
  ActivationEstimate twice = estimate_activation_ssi(cfg, 16, 8, 2);
  CHECK(twice.total_bytes == 2 * est.total_bytes);
  CHECK(twice.peak_bytes == 2 * est.peak_bytes);

  // Multi-scale shares the trunk: strictly less than the sum of SSI runs.
  NetworkConfig multi = make_cfg(2, 2, 4, 4, 4, {2, 4});
  std::uint64_t ssi_sum = 0;
  for (int s : multi.scales) {
    ssi_sum += estimate_activation_ssi(multi, 8, 8, s).total_bytes;
  }
  ActivationEstimate msi = estimate_activation_msi(multi, 8, 8);
  CHECK(msi.total_bytes < ssi_sum);
  CHECK(msi.peak_bytes >= estimate_activation_ssi(multi, 8, 8, 2).peak_bytes);
}

TEST_CASE("cost report serializes counts") {
  NetworkConfig cfg = make_cfg(2, 1, 4, 4, 4, {2, 4});
  CostReport rep = cost_report(cfg, 16, 16);
  CHECK(rep.params.total == count_params(cfg).total);
  CHECK(rep.msi_macs == count_flops_msi(cfg, 16, 16));
  CHECK(rep.params_through.at(2) == rep.params.trunk + rep.params.heads.at(2));

  const std::string text = rep.to_text();
  CHECK(text.find("trunk") != std::string::npos);

  const nlohmann::json j = nlohmann::json::parse(rep.to_json());
  CHECK(j.at("params").at("total").get<std::int64_t>() == rep.params.total);
  CHECK(j.at("macs").at("msi").get<std::uint64_t>() == rep.msi_macs);
  CHECK(j.at("config").at("D").get<int>() == 2);
  CHECK(j.at("h").get<int>() == 16);
  CHECK(j.at("activation_bytes").at("msi").at("total").get<std::uint64_t>() ==
        rep.msi_act.total_bytes);
}
