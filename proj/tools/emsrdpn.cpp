// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point: dataset degradation, training, inference,
// evaluation, and cost accounting. Exit codes: 0 success, 2 invalid
// configuration or arguments, 3 non-finite training loss, 1 other errors.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "emsrdpn/accounting.hpp"
#include "emsrdpn/checkpoint.hpp"
#include "emsrdpn/config_io.hpp"
#include "emsrdpn/dataset.hpp"
#include "emsrdpn/image.hpp"
#include "emsrdpn/metrics.hpp"
#include "emsrdpn/network.hpp"
#include "emsrdpn/train.hpp"

namespace fs = std::filesystem;
using namespace emsrdpn;

namespace {

struct Shared {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool deterministic = false;
  std::vector<int> scales;
  std::string out;
};

void add_shared(CLI::App* cmd, Shared* sh) {
  cmd->add_option("--config", sh->config_path, "JSON config file");
  auto* seed = cmd->add_option("--seed", sh->seed, "RNG seed override");
  cmd->parse_complete_callback(
      [sh, seed] { sh->seed_set = seed->count() > 0; });
  cmd->add_flag("--deterministic", sh->deterministic,
                "single-threaded, byte-reproducible runs");
  cmd->add_option("--scales", sh->scales, "scale factors, e.g. 2,3,4")
      ->delimiter(',');
  cmd->add_option("--out", sh->out, "output directory");
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  std::ofstream f(tmp, std::ios::binary);
  if (!f) throw std::runtime_error(path + ": cannot open for writing");
  f << text;
  f.close();
  fs::rename(tmp, path);
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw std::invalid_argument("not a directory: " + dir.string());
  }
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(c));
    if (ext == ".png" || ext == ".ppm" || ext == ".pgm") {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ----------------------------------------------------------------- degrade

int run_degrade(const Shared& sh, const std::string& hr_dir,
                const std::string& format) {
  std::vector<int> scales = sh.scales.empty() ? std::vector<int>{2, 3, 4}
                                              : sh.scales;
  if (sh.out.empty()) throw std::invalid_argument("degrade: --out required");
  const std::vector<fs::path> files = list_images(hr_dir);
  if (files.empty()) {
    throw std::invalid_argument("degrade: no images in " + hr_dir);
  }
  for (int s : scales) {
    fs::create_directories(fs::path(sh.out) / ("LR_x" + std::to_string(s)));
  }
  std::size_t failed = 0;
  for (const fs::path& p : files) {
    try {
      const Image hr = ensure_rgb(load_image(p.string()));
      for (int s : scales) {
        const Image lr = degrade(hr, s);
        const fs::path dst = fs::path(sh.out) / ("LR_x" + std::to_string(s)) /
                             (p.stem().string() + "." + format);
        save_image(lr, dst.string());
      }
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << p.string() << ": " << e.what()
                << "\n";
      ++failed;
    }
  }
  if (failed == files.size()) {
    std::cerr << "error: all " << failed << " images failed\n";
    return 1;
  }
  std::cout << "degraded " << (files.size() - failed) << " images to "
            << sh.out << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

int run_train(const Shared& sh, const std::string& data_root,
              const std::string& resume, bool on_the_fly,
              std::int64_t iters_override) {
  NetworkConfig cfg;
  TrainConfig tc;
  if (!sh.config_path.empty()) load_config_file(sh.config_path, &cfg, &tc);
  if (!sh.scales.empty()) {
    cfg.scales = sh.scales;
    cfg.normalize();
  }
  if (sh.seed_set) tc.seed = sh.seed;
  if (sh.deterministic) tc.deterministic = true;
  if (iters_override > 0) tc.iters = iters_override;
  cfg.validate();
  tc.validate();
  if (sh.out.empty()) throw std::invalid_argument("train: --out required");
  if (data_root.empty()) throw std::invalid_argument("train: --data required");

  LoadedDataset data;
  if (on_the_fly) {
    std::vector<Image> hr;
    for (const fs::path& p : list_images(fs::path(data_root) / "HR")) {
      hr.push_back(load_image(p.string()));
    }
    data = LoadedDataset::from_hr_images(std::move(hr), cfg.scales);
  } else {
    data = LoadedDataset::load(scan_dataset(data_root, cfg.scales));
  }

  TrainHooks hooks;
  hooks.on_step = [&tc](std::int64_t k, int s, double loss, double lr) {
    if ((k + 1) % tc.log_every == 0 || k + 1 == tc.iters) {
      std::printf("iter %lld  x%d  loss %.6f  lr %.3g\n",
                  static_cast<long long>(k + 1), s, loss, lr);
    }
  };
  const TrainResult res = train_loop(data, cfg, tc, sh.out, resume, hooks);
  std::cout << "done: " << res.iters_done << " iterations, final checkpoint "
            << res.final_checkpoint << "\n";
  return 0;
}

// ------------------------------------------------------------------- infer

int run_infer(const Shared& sh, const std::string& ckpt_path,
              const std::string& image_path, bool self_ens,
              const std::string& format) {
  if (sh.out.empty()) throw std::invalid_argument("infer: --out required");
  const LoadedCheckpoint ck = load_checkpoint(ckpt_path);
  std::vector<int> scales = sh.scales.empty() ? ck.config.scales : sh.scales;
  NetworkConfig run_cfg = ck.config;
  run_cfg.scales = scales;
  run_cfg.normalize();
  for (int s : run_cfg.scales) {
    if (!ck.config.has_scale(s)) {
      throw std::invalid_argument("infer: scale x" + std::to_string(s) +
                                  " not in checkpoint");
    }
  }
  const Image input = ensure_rgb(load_image(image_path));
  const TensorF x = image_to_tensor(input);
  fs::create_directories(sh.out);
  const std::string stem = fs::path(image_path).stem().string();

  std::map<int, TensorF> outputs;
  if (self_ens) {
    for (int s : run_cfg.scales) {
      outputs[s] = self_ensemble(x, s, ck.params, run_cfg);
    }
  } else {
    outputs = forward_multi_eval(x, ck.params, run_cfg);
  }
  for (const auto& [s, y] : outputs) {
    const fs::path dst = fs::path(sh.out) /
                         (stem + "_x" + std::to_string(s) + "." + format);
    save_image(tensor_to_image(y), dst.string());
    std::cout << dst.string() << "\n";
  }
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalItem {
  std::string name;
  fs::path hr;
  fs::path lr;  // empty when missing
};

std::vector<EvalItem> eval_items(const std::string& root, int s,
                                 bool need_lr) {
  std::vector<EvalItem> out;
  const fs::path lr_dir = fs::path(root) / ("LR_x" + std::to_string(s));
  for (const fs::path& hr : list_images(fs::path(root) / "HR")) {
    EvalItem item;
    item.name = hr.stem().string();
    item.hr = hr;
    if (need_lr) {
      for (const char* ext : {".png", ".ppm", ".pgm"}) {
        const fs::path cand = lr_dir / (item.name + ext);
        if (fs::exists(cand)) {
          item.lr = cand;
          break;
        }
      }
      if (item.lr.empty()) {
        std::cerr << "warning: skipping " << item.name << ": no LR at x" << s
                  << "\n";
        continue;
      }
    }
    out.push_back(std::move(item));
  }
  return out;
}

int run_eval(const Shared& sh, const std::string& ckpt_path,
             const std::string& data_root, const std::string& pred_mode,
             int crop, bool self_ens) {
  if (data_root.empty()) throw std::invalid_argument("eval: --data required");
  LoadedCheckpoint ck;
  std::vector<int> scales = sh.scales;
  if (pred_mode == "network") {
    if (ckpt_path.empty()) {
      throw std::invalid_argument("eval: --checkpoint required");
    }
    ck = load_checkpoint(ckpt_path);
    if (scales.empty()) scales = ck.config.scales;
    for (int s : scales) {
      if (!ck.config.has_scale(s)) {
        throw std::invalid_argument("eval: scale x" + std::to_string(s) +
                                    " not in checkpoint");
      }
    }
  } else if (pred_mode == "hr" || pred_mode == "bicubic") {
    if (scales.empty()) scales = {2, 3, 4};
  } else {
    throw std::invalid_argument("eval: --pred must be network|hr|bicubic");
  }
  if (!sh.out.empty()) fs::create_directories(sh.out);

  for (int s : scales) {
    EvalReport report;
    report.scale = s;
    report.border = crop >= 0 ? crop : s;
    for (const EvalItem& item : eval_items(data_root, s, pred_mode != "hr")) {
      const Image hr = ensure_rgb(load_image(item.hr.string()));
      const Image hr_ref = center_crop_to_multiple(hr, s);
      Image pred;
      if (pred_mode == "hr") {
        pred = hr_ref;
      } else {
        const Image lr = ensure_rgb(load_image(item.lr.string()));
        if (pred_mode == "bicubic") {
          pred = clamp01(bicubic_resize(lr, hr_ref.h, hr_ref.w));
        } else {
          NetworkConfig run_cfg = ck.config;
          run_cfg.scales = {s};
          const TensorF x = image_to_tensor(lr);
          const TensorF y = self_ens
                                ? self_ensemble(x, s, ck.params, run_cfg)
                                : forward_eval(x, s, ck.params, run_cfg);
          pred = clamp01(tensor_to_image(y));
        }
      }
      if (pred.h != hr_ref.h || pred.w != hr_ref.w) {
        std::cerr << "warning: skipping " << item.name << ": dims mismatch\n";
        continue;
      }
      EvalRow row;
      row.image = item.name;
      row.scale = s;
      row.psnr_db = psnr(pred, hr_ref, report.border);
      row.ssim = ssim(pred, hr_ref, report.border);
      report.rows.push_back(row);
    }
    std::cout << report.to_text() << "\n";
    if (!sh.out.empty()) {
      const std::string base =
          (fs::path(sh.out) / ("eval_x" + std::to_string(s))).string();
      write_text_atomic(base + ".txt", report.to_text());
      write_text_atomic(base + ".json", report.to_json());
    }
  }
  return 0;
}

// ------------------------------------------------------------------- count

int run_count(const Shared& sh, int h, int w, bool json_out,
              bool print_defaults) {
  if (print_defaults) {
    std::cout << config_document(NetworkConfig{}, TrainConfig{}).dump(2)
              << "\n";
    return 0;
  }
  NetworkConfig cfg;
  TrainConfig tc;
  if (!sh.config_path.empty()) load_config_file(sh.config_path, &cfg, &tc);
  if (!sh.scales.empty()) {
    cfg.scales = sh.scales;
    cfg.normalize();
  }
  cfg.validate();
  const CostReport report = cost_report(cfg, h, w);
  std::cout << (json_out ? report.to_json() : report.to_text()) << "\n";
  if (!sh.out.empty()) {
    fs::create_directories(sh.out);
    write_text_atomic((fs::path(sh.out) / "count.txt").string(),
                      report.to_text());
    write_text_atomic((fs::path(sh.out) / "count.json").string(),
                      report.to_json());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EMSRDPN: multi-scale super-resolution with dual path"
               " connections"};
  app.require_subcommand(1);

  Shared sh_degrade, sh_train, sh_infer, sh_eval, sh_count;

  auto* degrade_cmd =
      app.add_subcommand("degrade", "generate bicubic LR images from HR");
  std::string hr_dir, degrade_format = "png";
  degrade_cmd->add_option("--hr", hr_dir, "directory of HR images")
      ->required();
  degrade_cmd->add_option("--format", degrade_format, "png or ppm")
      ->check(CLI::IsMember({"png", "ppm"}));
  add_shared(degrade_cmd, &sh_degrade);

  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string data_root, resume;
  bool on_the_fly = false;
  std::int64_t iters_override = 0;
  train_cmd->add_option("--data", data_root, "dataset root (HR/, LR_x{s}/)");
  train_cmd->add_option("--resume", resume, "checkpoint to resume from");
  train_cmd->add_flag("--on-the-fly-lr", on_the_fly,
                      "degrade LR from HR in memory instead of loading");
  train_cmd->add_option("--iters", iters_override, "total iterations");
  add_shared(train_cmd, &sh_train);

  auto* infer_cmd = app.add_subcommand("infer", "super-resolve an image");
  std::string ckpt, image_path, infer_format = "png";
  bool self_ens = false;
  infer_cmd->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  infer_cmd->add_option("--image", image_path, "input LR image")->required();
  infer_cmd->add_flag("--self-ensemble", self_ens,
                      "average over the 8 dihedral transforms");
  infer_cmd->add_option("--format", infer_format, "png or ppm")
      ->check(CLI::IsMember({"png", "ppm"}));
  add_shared(infer_cmd, &sh_infer);

  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM over a dataset");
  std::string eval_ckpt, eval_root, pred_mode = "network";
  int crop = -1;
  bool eval_self_ens = false;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint");
  eval_cmd->add_option("--data", eval_root, "dataset root");
  eval_cmd->add_option("--pred", pred_mode,
                       "prediction source: network, hr, or bicubic");
  eval_cmd->add_option("--crop", crop, "border crop override in pixels");
  eval_cmd->add_flag("--self-ensemble", eval_self_ens,
                     "average over the 8 dihedral transforms");
  add_shared(eval_cmd, &sh_eval);

  auto* count_cmd =
      app.add_subcommand("count", "parameter/flop/memory accounting");
  int h = 256, w = 256;
  bool json_out = false, print_defaults = false;
  count_cmd->add_option("--height", h, "input height");
  count_cmd->add_option("--width", w, "input width");
  count_cmd->add_flag("--json", json_out, "print the JSON report");
  count_cmd->add_flag("--print-defaults", print_defaults,
                      "print the default config document");
  add_shared(count_cmd, &sh_count);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(degrade_cmd)) {
      return run_degrade(sh_degrade, hr_dir, degrade_format);
    }
    if (app.got_subcommand(train_cmd)) {
      return run_train(sh_train, data_root, resume, on_the_fly,
                       iters_override);
    }
    if (app.got_subcommand(infer_cmd)) {
      return run_infer(sh_infer, ckpt, image_path, self_ens, infer_format);
    }
    if (app.got_subcommand(eval_cmd)) {
      return run_eval(sh_eval, eval_ckpt, eval_root, pred_mode, crop,
                      eval_self_ens);
    }
    if (app.got_subcommand(count_cmd)) {
      return run_count(sh_count, h, w, json_out, print_defaults);
    }
  } catch (const NanLossError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
