/* Copyright 2026 The CCDA Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef CCDA_AUTODIFF_HPP_
#define CCDA_AUTODIFF_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ccda/tensor.hpp"

namespace ccda::ad {

// Reverse-mode autodiff over dense double tensors. Graphs are built eagerly
// by the op functions below and freed when the last Var referencing them
// goes out of scope. All computation is single-threaded and deterministic.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on demand during backward()
  bool trainable = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Accumulates into the grads of parents that have needs_grad set.
  std::function<void(Node&)> backprop;

  // scratch used by backward(); valid only during one pass
  std::uint64_t pass_id = 0;
  bool needs_grad = false;

  void ensure_grad();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool trainable = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& grad() const;
  bool trainable() const { return node_->trainable; }
  void set_trainable(bool t) const { node_->trainable = t; }
  void zero_grad() const;

  // A leaf sharing this Var's value but disconnected from the graph.
  Var detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  static Var wrap(std::shared_ptr<Node> n);

 private:
  std::shared_ptr<Node> node_;
};

// While alive, ops produce constant leaves (no graph, no closures).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

Var constant(Tensor value);
Var scalar(double v);
double scalar_value(const Var& v);

// elementwise; a and b must have identical shapes
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// scalar-by-scalar division (normalized sums); b must be a 1-element tensor
Var divide(const Var& a, const Var& b);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

Var clamp(const Var& a, double lo, double hi);
Var log(const Var& a);
Var exp(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var leaky_relu(const Var& a, double slope);

// rank-3 HWC input; softmax over the channel dimension
Var softmax_channels(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
// sum(a * w) with a constant weight tensor of the same shape
Var weighted_sum(const Var& a, const Tensor& w);

// rank-3 HWC -> rank-2 HW slice of one channel
Var channel(const Var& a, int c);
Var slice_channels(const Var& a, int c0, int c1);

// per-pixel probability of an index map's class: rank-3 probs HWC and an HW
// index tensor with values in [0,C) or negative (emits 1.0, i.e. log 0)
Var gather_channel(const Var& probs, const Tensor& index_map);

// x: HxWxCin, w: KhxKwxCinxCout, b: Cout
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

// bilinear interpolation, half-pixel centers, edge clamped
Var upsample_bilinear(const Var& x, int out_h, int out_w);

// rearranges HxWx(C*b*b) into (H*b)x(W*b)xC; a pure permutation, so the
// backward pass is the inverse shuffle
Var depth_to_space(const Var& x, int block);

// custom elementwise op: f(x) with derivative dfdx(x, f(x))
Var apply_unary(const Var& x, std::function<double(double)> f,
                std::function<double(double, double)> dfdx);

// Backpropagates from a scalar root. Grad buffers of every node reached in
// this pass (leaves included) are zeroed first, then accumulated into.
// Subgraphs with no trainable leaves underneath are skipped entirely.
void backward(const Var& root);

}  // namespace ccda::ad

#endif  // CCDA_AUTODIFF_HPP_
