// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0

#include "emsrdpn/train.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "emsrdpn/checkpoint.hpp"
#include "emsrdpn/config_io.hpp"

namespace emsrdpn {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("train config: " + msg);
  };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (patch_size < 1) fail("patch_size must be >= 1");
  if (lr <= 0) fail("lr must be positive");
  if (decay_factor <= 1) fail("decay_factor must be > 1");
  if (decay_interval < 0) fail("decay_interval must be >= 0");
  if (iters < 1) fail("iters must be >= 1");
  if (beta1 < 0 || beta1 >= 1) fail("beta1 must be in [0,1)");
  if (beta2 < 0 || beta2 >= 1) fail("beta2 must be in [0,1)");
  if (eps <= 0) fail("eps must be positive");
  if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
  if (log_every < 1) fail("log_every must be >= 1");
}

std::int64_t TrainConfig::effective_decay_interval(std::size_t nscales) const {
  if (decay_interval > 0) return decay_interval;
  return static_cast<std::int64_t>(nscales) * 200000;
}

AdamState::Moments& AdamState::ensure(const std::string& name,
                                      const Shape& shape) {
  auto it = slots.find(name);
  if (it == slots.end()) {
    it = slots.emplace(name, Moments{TensorF(shape), TensorF(shape), 0}).first;
  } else if (!(it->second.m.shape == shape)) {
    throw std::invalid_argument("adam: moment shape mismatch for " + name);
  }
  return it->second;
}

double lr_schedule(std::int64_t iter, const TrainConfig& tc,
                   std::size_t nscales) {
  const std::int64_t interval = tc.effective_decay_interval(nscales);
  const double k = static_cast<double>(iter / interval);
  return tc.lr / std::pow(tc.decay_factor, k);
}

int sample_scale(std::mt19937_64& rng, const std::vector<int>& scales) {
  if (scales.empty()) throw std::invalid_argument("sample_scale: empty set");
  return scales[uniform_index(rng, scales.size())];
}

double train_step(ParameterStore<float>* params, AdamState* adam,
                  const TensorF& lr_batch, const TensorF& hr_batch, int s,
                  double lr, const NetworkConfig& cfg, const TrainConfig& tc) {
  TapeF tape;
  Runner<float> run(tape, *params, cfg);
  TapeF::Node pred = run.forward(tape.input(lr_batch), s);
  TapeF::Node loss = tape.mae(pred, tape.input(hr_batch));
  const double lval = tape.value(loss).data[0];
  if (!std::isfinite(lval)) {
    throw NanLossError("loss is not finite at scale x" + std::to_string(s));
  }
  tape.backward(loss);

  const auto& pnodes = run.param_nodes();
  for (const std::string& name : params->names()) {
    auto it = pnodes.find(name);
    if (it == pnodes.end()) continue;
    const TensorF* g = tape.grad(it->second);
    if (!g) continue;
    TensorF& p = params->at(name);
    AdamState::Moments& mo = adam->ensure(name, p.shape);
    mo.steps += 1;
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(mo.steps));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(mo.steps));
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double gi = g->data[i];
      const double m = tc.beta1 * mo.m.data[i] + (1.0 - tc.beta1) * gi;
      const double v = tc.beta2 * mo.v.data[i] + (1.0 - tc.beta2) * gi * gi;
      mo.m.data[i] = static_cast<float>(m);
      mo.v.data[i] = static_cast<float>(v);
      p.data[i] = static_cast<float>(
          p.data[i] - lr * (m / bc1) / (std::sqrt(v / bc2) + tc.eps));
    }
  }
  return lval;
}

namespace {

struct Batch {
  std::int64_t iter = 0;
  int scale = 0;
  TensorF lr;
  TensorF hr;
  std::string rng_after;
};

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void rng_from_string(std::mt19937_64* rng, const std::string& s) {
  std::istringstream is(s);
  is >> *rng;
  if (!is) throw std::runtime_error("train: corrupt rng state in checkpoint");
}

Batch make_batch(const LoadedDataset& data, std::mt19937_64* rng,
                 std::int64_t iter, const NetworkConfig& cfg,
                 const TrainConfig& tc) {
  Batch b;
  b.iter = iter;
  b.scale = sample_scale(*rng, cfg.scales);
  std::vector<PatchPair> pairs;
  pairs.reserve(static_cast<std::size_t>(tc.batch_size));
  for (int i = 0; i < tc.batch_size; ++i) {
    pairs.push_back(sample_patch(data, *rng, b.scale, tc.patch_size));
  }
  batch_tensors(pairs, &b.lr, &b.hr);
  b.rng_after = rng_to_string(*rng);
  return b;
}

// Single-producer single-consumer bounded queue for batch prefetch.
class BatchQueue {
 public:
  explicit BatchQueue(std::size_t cap) : cap_(cap) {}

  bool push(Batch b) {
    std::unique_lock<std::mutex> lk(mu_);
    space_.wait(lk, [&] { return q_.size() < cap_ || closed_; });
    if (closed_) return false;
    q_.push_back(std::move(b));
    item_.notify_one();
    return true;
  }

  bool pop(Batch* out) {
    std::unique_lock<std::mutex> lk(mu_);
    item_.wait(lk, [&] { return !q_.empty() || done_; });
    if (q_.empty()) return false;
    *out = std::move(q_.front());
    q_.pop_front();
    space_.notify_one();
    return true;
  }

  void finish() {
    std::lock_guard<std::mutex> lk(mu_);
    done_ = true;
    item_.notify_all();
  }

  void close() {
    std::lock_guard<std::mutex> lk(mu_);
    closed_ = true;
    done_ = true;
    item_.notify_all();
    space_.notify_all();
  }

  void set_error(std::exception_ptr e) {
    std::lock_guard<std::mutex> lk(mu_);
    error_ = e;
  }

  std::exception_ptr error() {
    std::lock_guard<std::mutex> lk(mu_);
    return error_;
  }

 private:
  std::mutex mu_;
  std::condition_variable item_, space_;
  std::deque<Batch> q_;
  std::size_t cap_;
  bool done_ = false;
  bool closed_ = false;
  std::exception_ptr error_;
};

int worker_thread_cap() {
  if (const char* env = std::getenv("EMSRDPN_THREADS")) {
    return std::atoi(env);
  }
  return 2;
}

std::string ckpt_path(const std::string& out_dir, std::int64_t done) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%08lld.bin",
                static_cast<long long>(done));
  return out_dir + "/" + buf;
}

}  // namespace

TrainResult train_loop(const LoadedDataset& data, const NetworkConfig& cfg,
                       const TrainConfig& tc, const std::string& out_dir,
                       const std::string& resume_path,
                       const TrainHooks& hooks) {
  cfg.validate();
  tc.validate();
  if (data.items.empty()) {
    throw std::invalid_argument("train: empty dataset");
  }
  for (const auto& item : data.items) {
    for (int s : cfg.scales) {
      auto it = item.lr.find(s);
      if (it == item.lr.end()) {
        throw std::invalid_argument("train: dataset lacks x" +
                                    std::to_string(s) + " for " + item.name);
      }
      if (it->second.h < tc.patch_size || it->second.w < tc.patch_size) {
        throw std::invalid_argument("train: LR of " + item.name +
                                    " smaller than patch size");
      }
    }
  }

  std::filesystem::create_directories(out_dir);
  ParameterStore<float> params;
  AdamState adam;
  std::mt19937_64 rng(tc.seed);
  std::int64_t start_iter = 0;

  if (!resume_path.empty()) {
    LoadedCheckpoint ck = load_checkpoint(resume_path);
    if (network_config_to_json(ck.config) != network_config_to_json(cfg)) {
      throw std::invalid_argument("train: checkpoint config differs");
    }
    if (!ck.training.present) {
      throw std::invalid_argument("train: checkpoint has no training state");
    }
    params = std::move(ck.params);
    for (auto& [name, t] : ck.extra) {
      const std::string base = name.substr(7);
      AdamState::Moments& mo = adam.ensure(base, t.shape);
      if (name.rfind("adam.m.", 0) == 0) {
        mo.m = std::move(t);
      } else {
        mo.v = std::move(t);
      }
    }
    for (const auto& [name, steps] : ck.training.adam_steps) {
      auto it = adam.slots.find(name);
      if (it == adam.slots.end()) {
        throw std::invalid_argument("train: step counter without moments: " +
                                    name);
      }
      it->second.steps = steps;
    }
    start_iter = ck.training.iter;
    rng_from_string(&rng, ck.training.rng);
  } else {
    params = init_params<float>(cfg, tc.seed);
  }

  TrainResult result;
  if (start_iter >= tc.iters) {
    result.final_checkpoint = ckpt_path(out_dir, tc.iters);
    return result;
  }

  std::ofstream log(out_dir + "/train_log.ndjson", std::ios::app);
  if (!log) throw std::runtime_error("train: cannot open log in " + out_dir);

  const std::int64_t interval =
      tc.effective_decay_interval(cfg.scales.size());
  const bool prefetch = !tc.deterministic && worker_thread_cap() >= 2;

  BatchQueue queue(2);
  std::thread loader;
  if (prefetch) {
    loader = std::thread([&, start_iter] {
      try {
        for (std::int64_t k = start_iter; k < tc.iters; ++k) {
          if (!queue.push(make_batch(data, &rng, k, cfg, tc))) return;
        }
      } catch (...) {
        queue.set_error(std::current_exception());
      }
      queue.finish();
    });
  }
  struct Join {
    std::thread* t;
    BatchQueue* q;
    ~Join() {
      if (t->joinable()) {
        q->close();
        t->join();
      }
    }
  } join{&loader, &queue};

  auto save = [&](std::int64_t done, const std::string& rng_after,
                  const std::string& path) {
    TrainingBlob blob;
    blob.present = true;
    blob.iter = done;
    blob.rng = rng_after;
    std::vector<std::pair<std::string, TensorF>> extra;
    for (const auto& [name, mo] : adam.slots) {
      blob.adam_steps.emplace_back(name, mo.steps);
      extra.emplace_back("adam.m." + name, mo.m);
    }
    for (const auto& [name, mo] : adam.slots) {
      extra.emplace_back("adam.v." + name, mo.v);
    }
    save_checkpoint(path, cfg, params, extra, &blob);
  };

  for (std::int64_t k = start_iter; k < tc.iters; ++k) {
    Batch batch;
    if (prefetch) {
      if (!queue.pop(&batch)) {
        if (auto e = queue.error()) std::rethrow_exception(e);
        throw std::runtime_error("train: batch loader stopped early");
      }
    } else {
      batch = make_batch(data, &rng, k, cfg, tc);
    }

    const double lr = lr_schedule(k, tc, cfg.scales.size());
    const auto t0 = std::chrono::steady_clock::now();
    const double loss =
        train_step(&params, &adam, batch.lr, batch.hr, batch.scale, lr, cfg,
                   tc);
    const double wall_ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - t0)
            .count();
    result.last_loss = loss;
    ++result.iters_done;

    const std::int64_t done = k + 1;
    if (done % tc.log_every == 0 || done == tc.iters) {
      nlohmann::json rec{{"iter", done},
                         {"scale", batch.scale},
                         {"loss", loss},
                         {"lr", lr},
                         {"wall_ms", wall_ms}};
      log << rec.dump() << "\n";
      log.flush();
    }
    if (hooks.on_step) hooks.on_step(k, batch.scale, loss, lr);

    const bool boundary = done % interval == 0;
    if (done % tc.checkpoint_every == 0 || boundary || done == tc.iters) {
      save(done, batch.rng_after, ckpt_path(out_dir, done));
      if (done == tc.iters) {
        result.final_checkpoint = out_dir + "/ckpt_final.bin";
        save(done, batch.rng_after, result.final_checkpoint);
      }
    }
  }
  return result;
}

}  // namespace emsrdpn
