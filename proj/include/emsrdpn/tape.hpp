// Copyright 2026 The emsrdpn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over an eagerly evaluated op tape.
// Records are appended in execution order, which is topological by
// construction; backward walks them in strict reverse and accumulates each
// node's gradient as the sum over its consumers. Nodes that do not reach the
// loss get no gradient buffer at all, so callers can distinguish "zero" from
// "untouched".

#ifndef EMSRDPN_TAPE_HPP
#define EMSRDPN_TAPE_HPP

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "emsrdpn/ops.hpp"
#include "emsrdpn/tensor.hpp"

namespace emsrdpn {

template <typename S>
class Tape {
 public:
  struct Node {
    int id = -1;
  };

  Node input(Tensor<S> v) { return push(std::move(v)); }

  Node conv2d(Node x, Node w, Node b, int pad) {
    Node out = push(conv2d_forward(val(x), val(w), val(b), pad));
    record({OpKind::kConv2d, {x.id, w.id, b.id}, {out.id}, pad, {}});
    return out;
  }

  Node relu(Node x) {
    Node out = push(relu_forward(val(x)));
    record({OpKind::kRelu, {x.id}, {out.id}, 0, {}});
    return out;
  }

  Node add(Node a, Node b) {
    Node out = push(add_forward(val(a), val(b)));
    record({OpKind::kAdd, {a.id, b.id}, {out.id}, 0, {}});
    return out;
  }

  Node concat(const std::vector<Node>& parts) {
    std::vector<const Tensor<S>*> ptrs;
    std::vector<int> ids, widths;
    ptrs.reserve(parts.size());
    for (Node p : parts) {
      ptrs.push_back(&val(p));
      ids.push_back(p.id);
      widths.push_back(val(p).shape.c);
    }
    Node out = push(concat_forward(std::span<const Tensor<S>* const>(ptrs)));
    record({OpKind::kConcat, std::move(ids), {out.id}, 0, std::move(widths)});
    return out;
  }

  std::vector<Node> split(Node x, const std::vector<int>& widths) {
    std::vector<Tensor<S>> parts =
        split_forward(val(x), std::span<const int>(widths));
    std::vector<Node> out;
    std::vector<int> ids;
    out.reserve(parts.size());
    for (Tensor<S>& p : parts) {
      Node n = push(std::move(p));
      out.push_back(n);
      ids.push_back(n.id);
    }
    record({OpKind::kSplit, {x.id}, std::move(ids), 0, widths});
    return out;
  }

  Node pixel_shuffle(Node x, int r) {
    Node out = push(pixel_shuffle_forward(val(x), r));
    record({OpKind::kPixelShuffle, {x.id}, {out.id}, r, {}});
    return out;
  }

  Node sum(Node x) {
    double acc = 0.0;
    for (S v : val(x).data) acc += static_cast<double>(v);
    Tensor<S> out(1, 1, 1, 1);
    out.data[0] = static_cast<S>(acc);
    Node n = push(std::move(out));
    record({OpKind::kSum, {x.id}, {n.id}, 0, {}});
    return n;
  }

  Node mae(Node pred, Node target) {
    Tensor<S> out(1, 1, 1, 1);
    out.data[0] = mae_forward(val(pred), val(target));
    Node n = push(std::move(out));
    record({OpKind::kMae, {pred.id, target.id}, {n.id}, 0, {}});
    return n;
  }

  const Tensor<S>& value(Node n) const { return val(n); }

  // Gradient of the last backward() target w.r.t. node n, or null when the
  // node does not influence that target.
  const Tensor<S>* grad(Node n) const {
    check(n);
    return slots_[static_cast<std::size_t>(n.id)].grad.get();
  }

  void backward(Node loss) {
    const Tensor<S>& lv = val(loss);
    if (lv.shape.elems() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  lv.shape.str());
    }
    for (auto& s : slots_) s.grad.reset();

    std::vector<char> active(slots_.size(), 0);
    active[static_cast<std::size_t>(loss.id)] = 1;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      bool any = false;
      for (int o : it->out) any = any || active[static_cast<std::size_t>(o)];
      if (any) {
        for (int i : it->in) active[static_cast<std::size_t>(i)] = 1;
      }
    }

    ensure_grad(loss.id)->data[0] = S(1);

    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      step_back(*it, active);
    }
  }

  std::size_t node_count() const { return slots_.size(); }

  // Read-only view of the recorded graph for cost analysis.
  struct TraceOp {
    std::vector<int> in;
    std::vector<int> out;
  };

  std::vector<TraceOp> trace() const {
    std::vector<TraceOp> t;
    t.reserve(records_.size());
    for (const Record& r : records_) t.push_back(TraceOp{r.in, r.out});
    return t;
  }

  std::int64_t slot_elems(int id) const {
    return slots_[static_cast<std::size_t>(id)].value.shape.elems();
  }

 private:
  enum class OpKind { kConv2d, kRelu, kAdd, kConcat, kSplit, kPixelShuffle,
                      kSum, kMae };

  struct Record {
    OpKind kind;
    std::vector<int> in;
    std::vector<int> out;
    int iarg;
    std::vector<int> widths;
  };

  struct Slot {
    Tensor<S> value;
    std::unique_ptr<Tensor<S>> grad;
  };

  std::vector<Slot> slots_;
  std::vector<Record> records_;

  Node push(Tensor<S> v) {
    slots_.push_back(Slot{std::move(v), nullptr});
    return Node{static_cast<int>(slots_.size()) - 1};
  }

  void record(Record r) {
    for (int i : r.in) {
      for (int o : r.out) {
        if (i >= o) {
          throw std::logic_error("tape: op graph is not topological");
        }
      }
    }
    records_.push_back(std::move(r));
  }

  void check(Node n) const {
    if (n.id < 0 || n.id >= static_cast<int>(slots_.size())) {
      throw std::invalid_argument("tape: invalid node id " +
                                  std::to_string(n.id));
    }
  }

  const Tensor<S>& val(Node n) const {
    check(n);
    return slots_[static_cast<std::size_t>(n.id)].value;
  }

  Tensor<S>* ensure_grad(int id) {
    Slot& s = slots_[static_cast<std::size_t>(id)];
    if (!s.grad) {
      s.grad = std::make_unique<Tensor<S>>(s.value.shape);
    }
    return s.grad.get();
  }

  Tensor<S>* grad_if(int id) {
    return slots_[static_cast<std::size_t>(id)].grad.get();
  }

  const Tensor<S>& v(int id) const {
    return slots_[static_cast<std::size_t>(id)].value;
  }

  // Adds grad slice [c0, c0+cw) of src into dst (same layout otherwise).
  static void add_channel_slice(const Tensor<S>& src, int c0, int cw,
                                Tensor<S>* dst, int d0) {
    const std::size_t hw =
        static_cast<std::size_t>(src.shape.h) * src.shape.w;
    for (int i = 0; i < src.shape.n; ++i) {
      const S* sp = src.data.data() +
                    (static_cast<std::size_t>(i) * src.shape.c + c0) * hw;
      S* dp = dst->data.data() +
              (static_cast<std::size_t>(i) * dst->shape.c + d0) * hw;
      for (std::size_t j = 0; j < static_cast<std::size_t>(cw) * hw; ++j) {
        dp[j] += sp[j];
      }
    }
  }

  void step_back(const Record& r, const std::vector<char>& active) {
    auto out_grad = [&](std::size_t i) -> const Tensor<S>* {
      return grad_if(r.out[i]);
    };
    auto want = [&](std::size_t i) -> Tensor<S>* {
      return active[static_cast<std::size_t>(r.in[i])] ? ensure_grad(r.in[i])
                                                       : nullptr;
    };

    switch (r.kind) {
      case OpKind::kConv2d: {
        const Tensor<S>* g = out_grad(0);
        if (!g) return;
        conv2d_backward(v(r.in[0]), v(r.in[1]), r.iarg, *g, want(0), want(1),
                        want(2));
        return;
      }
      case OpKind::kRelu: {
        const Tensor<S>* g = out_grad(0);
        Tensor<S>* gx = g ? want(0) : nullptr;
        if (gx) relu_backward(v(r.in[0]), *g, gx);
        return;
      }
      case OpKind::kAdd: {
        const Tensor<S>* g = out_grad(0);
        if (!g) return;
        for (std::size_t i = 0; i < 2; ++i) {
          if (Tensor<S>* gi = want(i)) {
            for (std::size_t j = 0; j < g->data.size(); ++j) {
              gi->data[j] += g->data[j];
            }
          }
        }
        return;
      }
      case OpKind::kConcat: {
        const Tensor<S>* g = out_grad(0);
        if (!g) return;
        int c0 = 0;
        for (std::size_t i = 0; i < r.in.size(); ++i) {
          if (Tensor<S>* gi = want(i)) {
            add_channel_slice(*g, c0, r.widths[i], gi, 0);
          }
          c0 += r.widths[i];
        }
        return;
      }
      case OpKind::kSplit: {
        Tensor<S>* gx = nullptr;
        int c0 = 0;
        for (std::size_t i = 0; i < r.out.size(); ++i) {
          if (const Tensor<S>* g = grad_if(r.out[i])) {
            if (!gx) gx = want(0);
            if (gx) add_channel_slice(*g, 0, r.widths[i], gx, c0);
          }
          c0 += r.widths[i];
        }
        return;
      }
      case OpKind::kPixelShuffle: {
        const Tensor<S>* g = out_grad(0);
        Tensor<S>* gx = g ? want(0) : nullptr;
        if (gx) pixel_shuffle_backward(v(r.in[0]).shape, r.iarg, *g, gx);
        return;
      }
      case OpKind::kSum: {
        const Tensor<S>* g = out_grad(0);
        Tensor<S>* gx = g ? want(0) : nullptr;
        if (gx) {
          const S gs = g->data[0];
          for (S& gv : gx->data) gv += gs;
        }
        return;
      }
      case OpKind::kMae: {
        const Tensor<S>* g = out_grad(0);
        if (!g) return;
        mae_backward(v(r.in[0]), v(r.in[1]), g->data[0], want(0), want(1));
        return;
      }
    }
  }
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace emsrdpn

#endif  // EMSRDPN_TAPE_HPP
