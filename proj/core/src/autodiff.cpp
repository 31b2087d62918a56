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
#include "ccda/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace ccda::ad {

namespace {

thread_local int g_no_grad_depth = 0;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::shared_ptr<Node> make_leaf(Tensor value, bool trainable) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->trainable = trainable;
  n->is_leaf = true;
  return n;
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  if (!grad_enabled()) {
    return Var::wrap(make_leaf(std::move(value), false));
  }
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->is_leaf = false;
  n->parents.reserve(parents.size());
  for (const Var& p : parents) n->parents.push_back(p.node());
  n->backprop = std::move(backprop);
  return Var::wrap(std::move(n));
}

void check_defined(const Var& v, const char* who) {
  if (!v.defined()) throw std::invalid_argument(std::string(who) + ": undefined operand");
}

void check_same_shape(const Var& a, const Var& b, const char* who) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                a.value().shape_str() + " vs " + b.value().shape_str());
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

}  // namespace

void Node::ensure_grad() {
  if (!grad.same_shape(value)) grad = Tensor(value.shape());
}

Var::Var(Tensor value, bool trainable) : node_(make_leaf(std::move(value), trainable)) {}

Var Var::wrap(std::shared_ptr<Node> n) {
  Var v;
  v.node_ = std::move(n);
  return v;
}

Tensor& Var::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Var::zero_grad() const {
  node_->ensure_grad();
  node_->grad.fill(0.0);
}

Var Var::detach() const { return Var::wrap(make_leaf(node_->value, false)); }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

Var constant(Tensor value) { return Var::wrap(make_leaf(std::move(value), false)); }

Var scalar(double v) { return constant(Tensor::from_data({1}, {v})); }

double scalar_value(const Var& v) {
  if (v.value().size() != 1) throw std::invalid_argument("scalar_value: tensor is not scalar");
  return v.value()[0];
}

Var add(const Var& a, const Var& b) {
  check_defined(a, "add");
  check_defined(b, "add");
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] += b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *self.parents[k];
      if (!p.needs_grad) continue;
      axpy(1.0, self.grad, p.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_defined(a, "sub");
  check_defined(b, "sub");
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] -= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->needs_grad) axpy(1.0, self.grad, self.parents[0]->grad);
    if (self.parents[1]->needs_grad) axpy(-1.0, self.grad, self.parents[1]->grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_defined(a, "mul");
  check_defined(b, "mul");
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] *= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const std::int64_t n = self.grad.size();
    if (pa.needs_grad) {
      for (std::int64_t i = 0; i < n; ++i) pa.grad[i] += self.grad[i] * pb.value[i];
    }
    if (pb.needs_grad) {
      for (std::int64_t i = 0; i < n; ++i) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var divide(const Var& a, const Var& b) {
  check_defined(a, "divide");
  check_defined(b, "divide");
  if (a.value().size() != 1 || b.value().size() != 1) {
    throw std::invalid_argument("divide: only scalar/scalar division is supported");
  }
  const double av = a.value()[0];
  const double bv = b.value()[0];
  Tensor out = Tensor::from_data({1}, {av / bv});
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const double g = self.grad[0];
    const double av = self.parents[0]->value[0];
    const double bv = self.parents[1]->value[0];
    if (self.parents[0]->needs_grad) self.parents[0]->grad[0] += g / bv;
    if (self.parents[1]->needs_grad) self.parents[1]->grad[0] += -g * av / (bv * bv);
  });
}

Var scale(const Var& a, double s) {
  check_defined(a, "scale");
  Tensor out = a.value();
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] *= s;
  return make_op(std::move(out), {a}, [s](Node& self) {
    if (self.parents[0]->needs_grad) axpy(s, self.grad, self.parents[0]->grad);
  });
}

Var add_scalar(const Var& a, double s) {
  check_defined(a, "add_scalar");
  Tensor out = a.value();
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] += s;
  return make_op(std::move(out), {a}, [](Node& self) {
    if (self.parents[0]->needs_grad) axpy(1.0, self.grad, self.parents[0]->grad);
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var clamp(const Var& a, double lo, double hi) {
  check_defined(a, "clamp");
  Tensor out = a.value();
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = std::min(hi, std::max(lo, out[i]));
  return make_op(std::move(out), {a}, [lo, hi](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    const std::int64_t n = self.grad.size();
    for (std::int64_t i = 0; i < n; ++i) {
      const double x = p.value[i];
      if (x > lo && x < hi) p.grad[i] += self.grad[i];
    }
  });
}

Var apply_unary(const Var& x, std::function<double(double)> f,
                std::function<double(double, double)> dfdx) {
  check_defined(x, "apply_unary");
  Tensor out = x.value();
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = f(out[i]);
  return make_op(std::move(out), {x}, [df = std::move(dfdx)](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    const std::int64_t n = self.grad.size();
    for (std::int64_t i = 0; i < n; ++i) {
      p.grad[i] += self.grad[i] * df(p.value[i], self.value[i]);
    }
  });
}

Var log(const Var& a) {
  return apply_unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var exp(const Var& a) {
  return apply_unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var sigmoid(const Var& a) {
  return apply_unary(
      a, [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
  return apply_unary(
      a, [](double x) { return stable_softplus(x); },
      [](double x, double) { return stable_sigmoid(x); });
}

Var leaky_relu(const Var& a, double slope) {
  return apply_unary(
      a, [slope](double x) { return x >= 0.0 ? x : slope * x; },
      [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; });
}

Var softmax_channels(const Var& a) {
  check_defined(a, "softmax_channels");
  if (a.value().rank() != 3) throw std::invalid_argument("softmax_channels: rank-3 HWC expected");
  const Tensor& x = a.value();
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor out(x.shape());
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double m = x.at(i, j, 0);
      for (int k = 1; k < c; ++k) m = std::max(m, x.at(i, j, k));
      double z = 0.0;
      for (int k = 0; k < c; ++k) {
        const double e = std::exp(x.at(i, j, k) - m);
        out.at(i, j, k) = e;
        z += e;
      }
      for (int k = 0; k < c; ++k) out.at(i, j, k) /= z;
    }
  }
  return make_op(std::move(out), {a}, [h, w, c](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        double dot = 0.0;
        for (int k = 0; k < c; ++k) dot += self.grad.at(i, j, k) * self.value.at(i, j, k);
        for (int k = 0; k < c; ++k) {
          p.grad.at(i, j, k) += self.value.at(i, j, k) * (self.grad.at(i, j, k) - dot);
        }
      }
    }
  });
}

Var sum(const Var& a) {
  check_defined(a, "sum");
  double s = 0.0;
  for (std::int64_t i = 0; i < a.value().size(); ++i) s += a.value()[i];
  return make_op(Tensor::from_data({1}, {s}), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    const double g = self.grad[0];
    for (std::int64_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
  });
}

Var mean(const Var& a) {
  check_defined(a, "mean");
  const std::int64_t n = a.value().size();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var weighted_sum(const Var& a, const Tensor& w) {
  check_defined(a, "weighted_sum");
  if (!a.value().same_shape(w)) throw std::invalid_argument("weighted_sum: shape mismatch");
  double s = 0.0;
  for (std::int64_t i = 0; i < w.size(); ++i) s += a.value()[i] * w[i];
  return make_op(Tensor::from_data({1}, {s}), {a}, [w](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    const double g = self.grad[0];
    for (std::int64_t i = 0; i < w.size(); ++i) p.grad[i] += g * w[i];
  });
}

Var channel(const Var& a, int c) {
  check_defined(a, "channel");
  const Tensor& x = a.value();
  if (x.rank() != 3 || c < 0 || c >= x.dim(2)) {
    throw std::invalid_argument("channel: bad channel index");
  }
  const int h = x.dim(0), w = x.dim(1), nc = x.dim(2);
  Tensor out({h, w});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) out.at(i, j) = x.at(i, j, c);
  }
  return make_op(std::move(out), {a}, [h, w, nc, c](Node& self) {
    (void)nc;
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) p.grad.at(i, j, c) += self.grad.at(i, j);
    }
  });
}

Var slice_channels(const Var& a, int c0, int c1) {
  check_defined(a, "slice_channels");
  const Tensor& x = a.value();
  if (x.rank() != 3 || c0 < 0 || c1 <= c0 || c1 > x.dim(2)) {
    throw std::invalid_argument("slice_channels: bad channel range");
  }
  const int h = x.dim(0), w = x.dim(1);
  const int nc = c1 - c0;
  Tensor out({h, w, nc});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int k = 0; k < nc; ++k) out.at(i, j, k) = x.at(i, j, c0 + k);
    }
  }
  return make_op(std::move(out), {a}, [h, w, nc, c0](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        for (int k = 0; k < nc; ++k) p.grad.at(i, j, c0 + k) += self.grad.at(i, j, k);
      }
    }
  });
}

Var gather_channel(const Var& probs, const Tensor& index_map) {
  check_defined(probs, "gather_channel");
  const Tensor& x = probs.value();
  if (x.rank() != 3 || index_map.rank() != 2 || index_map.dim(0) != x.dim(0) ||
      index_map.dim(1) != x.dim(1)) {
    throw std::invalid_argument("gather_channel: shape mismatch");
  }
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor out({h, w});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const int idx = static_cast<int>(index_map.at(i, j));
      if (idx < 0) {
        out.at(i, j) = 1.0;
      } else if (idx >= c) {
        throw std::invalid_argument("gather_channel: index out of range");
      } else {
        out.at(i, j) = x.at(i, j, idx);
      }
    }
  }
  return make_op(std::move(out), {probs}, [index_map, h, w](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const int idx = static_cast<int>(index_map.at(i, j));
        if (idx >= 0) p.grad.at(i, j, idx) += self.grad.at(i, j);
      }
    }
  });
}

namespace {

struct ConvDims {
  int h, w, cin, kh, kw, cout, stride, pad, ho, wo;
};

// Gathers 3x3 (or kxk) input patches into rows of (ho*wo) x (kh*kw*cin).
// HWC layout means each (dh, dw) tap is a contiguous run of cin values.
void im2col(const Tensor& x, const ConvDims& d, double* cols) {
  const int patch = d.kh * d.kw * d.cin;
  for (int oi = 0; oi < d.ho; ++oi) {
    for (int oj = 0; oj < d.wo; ++oj) {
      double* row = cols + (static_cast<std::size_t>(oi) * d.wo + oj) * patch;
      for (int dh = 0; dh < d.kh; ++dh) {
        const int ii = oi * d.stride + dh - d.pad;
        for (int dw = 0; dw < d.kw; ++dw) {
          const int jj = oj * d.stride + dw - d.pad;
          double* dst = row + (dh * d.kw + dw) * d.cin;
          if (ii < 0 || ii >= d.h || jj < 0 || jj >= d.w) {
            std::fill(dst, dst + d.cin, 0.0);
          } else {
            const double* src = x.data() + (static_cast<std::size_t>(ii) * d.w + jj) * d.cin;
            std::copy(src, src + d.cin, dst);
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvDims& d, Tensor& gx) {
  const int patch = d.kh * d.kw * d.cin;
  for (int oi = 0; oi < d.ho; ++oi) {
    for (int oj = 0; oj < d.wo; ++oj) {
      const double* row = cols + (static_cast<std::size_t>(oi) * d.wo + oj) * patch;
      for (int dh = 0; dh < d.kh; ++dh) {
        const int ii = oi * d.stride + dh - d.pad;
        if (ii < 0 || ii >= d.h) continue;
        for (int dw = 0; dw < d.kw; ++dw) {
          const int jj = oj * d.stride + dw - d.pad;
          if (jj < 0 || jj >= d.w) continue;
          double* dst = gx.data() + (static_cast<std::size_t>(ii) * d.w + jj) * d.cin;
          const double* src = row + (dh * d.kw + dw) * d.cin;
          for (int k = 0; k < d.cin; ++k) dst[k] += src[k];
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check_defined(x, "conv2d");
  check_defined(w, "conv2d");
  check_defined(b, "conv2d");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 3 || wv.rank() != 4) {
    throw std::invalid_argument("conv2d: expects HWC input and KhKwCinCout weights");
  }
  ConvDims d;
  d.h = xv.dim(0);
  d.w = xv.dim(1);
  d.cin = xv.dim(2);
  d.kh = wv.dim(0);
  d.kw = wv.dim(1);
  d.cout = wv.dim(3);
  d.stride = stride;
  d.pad = pad;
  if (wv.dim(2) != d.cin) throw std::invalid_argument("conv2d: channel mismatch");
  if (b.value().size() != d.cout) throw std::invalid_argument("conv2d: bias size mismatch");
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.ho < 1 || d.wo < 1) throw std::invalid_argument("conv2d: output would be empty");

  const int patch = d.kh * d.kw * d.cin;
  const std::int64_t rows = static_cast<std::int64_t>(d.ho) * d.wo;
  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows) * patch);
  im2col(xv, d, cols->data());

  Tensor out({d.ho, d.wo, d.cout});
  {
    ConstMatMap m(cols->data(), rows, patch);
    ConstMatMap wm(wv.data(), patch, d.cout);
    MatMap om(out.data(), rows, d.cout);
    om.noalias() = m * wm;
    for (std::int64_t r = 0; r < rows; ++r) {
      for (int k = 0; k < d.cout; ++k) om(r, k) += b.value()[k];
    }
  }

  return make_op(std::move(out), {x, w, b}, [d, cols, rows, patch](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    ConstMatMap gy(self.grad.data(), rows, d.cout);
    if (pw.needs_grad) {
      ConstMatMap m(cols->data(), rows, patch);
      MatMap gw(pw.grad.data(), patch, d.cout);
      gw.noalias() += m.transpose() * gy;
    }
    if (pb.needs_grad) {
      for (int k = 0; k < d.cout; ++k) pb.grad[k] += gy.col(k).sum();
    }
    if (px.needs_grad) {
      std::vector<double> gcols(static_cast<std::size_t>(rows) * patch);
      MatMap gm(gcols.data(), rows, patch);
      ConstMatMap wm(pw.value.data(), patch, d.cout);
      gm.noalias() = gy * wm.transpose();
      col2im_add(gcols.data(), d, px.grad);
    }
  });
}

namespace {

struct LerpAxis {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

LerpAxis make_axis(int in, int out) {
  LerpAxis ax;
  ax.lo.resize(out);
  ax.hi.resize(out);
  ax.frac.resize(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * ratio - 0.5;
    if (s < 0.0) s = 0.0;
    if (s > in - 1) s = in - 1;
    const int i0 = static_cast<int>(s);
    ax.lo[o] = i0;
    ax.hi[o] = std::min(i0 + 1, in - 1);
    ax.frac[o] = s - i0;
  }
  return ax;
}

}  // namespace

Var upsample_bilinear(const Var& x, int out_h, int out_w) {
  check_defined(x, "upsample_bilinear");
  const Tensor& xv = x.value();
  const bool rank2 = xv.rank() == 2;
  if (!rank2 && xv.rank() != 3) {
    throw std::invalid_argument("upsample_bilinear: rank-2 or rank-3 input expected");
  }
  const int in_h = xv.dim(0), in_w = xv.dim(1);
  const int c = rank2 ? 1 : xv.dim(2);
  const LerpAxis ay = make_axis(in_h, out_h);
  const LerpAxis axx = make_axis(in_w, out_w);

  auto src_at = [&](int i, int j, int k) {
    return rank2 ? xv.at(i, j) : xv.at(i, j, k);
  };
  Tensor out(rank2 ? std::vector<int>{out_h, out_w} : std::vector<int>{out_h, out_w, c});
  for (int i = 0; i < out_h; ++i) {
    const double fy = ay.frac[i];
    for (int j = 0; j < out_w; ++j) {
      const double fx = axx.frac[j];
      for (int k = 0; k < c; ++k) {
        const double v00 = src_at(ay.lo[i], axx.lo[j], k);
        const double v01 = src_at(ay.lo[i], axx.hi[j], k);
        const double v10 = src_at(ay.hi[i], axx.lo[j], k);
        const double v11 = src_at(ay.hi[i], axx.hi[j], k);
        const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
        if (rank2) {
          out.at(i, j) = v;
        } else {
          out.at(i, j, k) = v;
        }
      }
    }
  }
  return make_op(std::move(out), {x}, [ay, axx, out_h, out_w, c, rank2](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    auto add_at = [&](int i, int j, int k, double v) {
      if (rank2) {
        p.grad.at(i, j) += v;
      } else {
        p.grad.at(i, j, k) += v;
      }
    };
    for (int i = 0; i < out_h; ++i) {
      const double fy = ay.frac[i];
      for (int j = 0; j < out_w; ++j) {
        const double fx = axx.frac[j];
        for (int k = 0; k < c; ++k) {
          const double g = rank2 ? self.grad.at(i, j) : self.grad.at(i, j, k);
          add_at(ay.lo[i], axx.lo[j], k, g * (1 - fy) * (1 - fx));
          add_at(ay.lo[i], axx.hi[j], k, g * (1 - fy) * fx);
          add_at(ay.hi[i], axx.lo[j], k, g * fy * (1 - fx));
          add_at(ay.hi[i], axx.hi[j], k, g * fy * fx);
        }
      }
    }
  });
}

Var depth_to_space(const Var& x, int block) {
  check_defined(x, "depth_to_space");
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || block < 1 || xv.dim(2) % (block * block) != 0) {
    throw std::invalid_argument("depth_to_space: channels must be a multiple of block^2");
  }
  const int h = xv.dim(0), w = xv.dim(1), b = block;
  const int c = xv.dim(2) / (b * b);
  Tensor out({h * b, w * b, c});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int di = 0; di < b; ++di) {
        for (int dj = 0; dj < b; ++dj) {
          for (int k = 0; k < c; ++k) {
            out.at(i * b + di, j * b + dj, k) = xv.at(i, j, (di * b + dj) * c + k);
          }
        }
      }
    }
  }
  return make_op(std::move(out), {x}, [h, w, b, c](Node& self) {
    Node& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        for (int di = 0; di < b; ++di) {
          for (int dj = 0; dj < b; ++dj) {
            for (int k = 0; k < c; ++k) {
              p.grad.at(i, j, (di * b + dj) * c + k) += self.grad.at(i * b + di, j * b + dj, k);
            }
          }
        }
      }
    }
  });
}

namespace {
std::uint64_t g_pass_counter = 0;
}

void backward(const Var& root) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined root");
  if (root.value().size() != 1) throw std::invalid_argument("backward: root must be scalar");

  const std::uint64_t pass = ++g_pass_counter;

  // iterative post-order DFS: parents appear before their consumers
  std::vector<Node*> topo;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* r = root.node().get();
  r->pass_id = pass;
  stack.emplace_back(r, 0);
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->pass_id != pass) {
        p->pass_id = pass;
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }

  // needs_grad: a node participates iff some trainable leaf sits beneath it
  for (Node* n : topo) {
    if (n->is_leaf) {
      n->needs_grad = n->trainable;
    } else {
      n->needs_grad = false;
      for (const auto& p : n->parents) {
        if (p->needs_grad) {
          n->needs_grad = true;
          break;
        }
      }
    }
  }
  r->needs_grad = true;

  for (Node* n : topo) {
    if (n->needs_grad) {
      n->ensure_grad();
      n->grad.fill(0.0);
    }
  }
  r->grad[0] = 1.0;

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->needs_grad && n->backprop) n->backprop(*n);
  }
}

}  // namespace ccda::ad
