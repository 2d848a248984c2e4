#pragma once

// Tape-based reverse-mode automatic differentiation over udr::Tensor.
//
// A Tape records one forward pass. Every op appends a node holding its value
// and, when any input requires a gradient, a closure that pushes the node's
// gradient back into its inputs. Nodes are appended in evaluation order, so
// the tape index is a topological order and backward() is a reverse sweep.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "udr/complex_image.hpp"
#include "udr/errors.hpp"
#include "udr/tensor.hpp"

namespace udr {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor v, bool requires_grad = false) {
    nodes_.push_back(Node{std::move(v), {}, requires_grad, {}, {}});
    return Var{this, nodes_.size() - 1};
  }
  Var param(Tensor v) { return leaf(std::move(v), true); }
  Var constant(Tensor v) { return leaf(std::move(v), false); }

  /// Append an op result. The closure is kept only if some input needs a gradient.
  Var record(Tensor v, std::vector<std::size_t> inputs, Backprop fn) {
    bool rg = false;
    for (auto i : inputs) rg = rg || nodes_[i].requires_grad;
    nodes_.push_back(Node{std::move(v), {}, rg, rg ? std::move(inputs) : std::vector<std::size_t>{},
                          rg ? std::move(fn) : Backprop{}});
    return Var{this, nodes_.size() - 1};
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& value(Var v) const { return value(v.id); }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id); }

  /// Gradient accumulator for a node, zero-allocated on first touch.
  Tensor& grad_ref(std::size_t id) {
    auto& n = nodes_.at(id);
    if (n.grad.size() == 0) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
  }

  /// Gradient of the last backward() seed w.r.t. v; zeros when v did not participate.
  Tensor grad(Var v) const {
    const auto& n = nodes_.at(v.id);
    return n.grad.size() == 0 ? Tensor(n.value.shape(), 0.0) : n.grad;
  }

  void backward(Var loss) {
    if (loss.tape != this) throw ContractError("backward: loss belongs to a different tape");
    if (value(loss).size() != 1)
      throw ContractError("backward: seed must be a scalar, got shape " + shape_str(value(loss).shape()));
    for (auto& n : nodes_) n.grad = Tensor();
    grad_ref(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.backprop && n.grad.size() != 0) n.backprop(*this, i);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace ad {

namespace detail {

inline void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("operands recorded on different tapes");
}

// Accumulate g (or f(g)) into input i when it needs a gradient.
template <typename F>
inline void accumulate(Tape& t, std::size_t i, std::size_t self, F&& f) {
  if (!t.requires_grad(i)) return;
  auto& gi = t.grad_ref(i);
  const auto& g = t.grad_ref(self);
  for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += f(g[k], k);
}

}  // namespace detail

inline Var add(Var a, Var b) {
  detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += bv[k];
  return a.tape->record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t s) {
    detail::accumulate(t, a, s, [](double g, std::size_t) { return g; });
    detail::accumulate(t, b, s, [](double g, std::size_t) { return g; });
  });
}

inline Var sub(Var a, Var b) {
  detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= bv[k];
  return a.tape->record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t s) {
    detail::accumulate(t, a, s, [](double g, std::size_t) { return g; });
    detail::accumulate(t, b, s, [](double g, std::size_t) { return -g; });
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= bv[k];
  return a.tape->record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t s) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    detail::accumulate(t, a, s, [&](double g, std::size_t k) { return g * bv[k]; });
    detail::accumulate(t, b, s, [&](double g, std::size_t k) { return g * av[k]; });
  });
}

inline Var scale(Var a, double c) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v *= c;
  return a.tape->record(std::move(out), {a.id}, [a = a.id, c](Tape& t, std::size_t s) {
    detail::accumulate(t, a, s, [c](double g, std::size_t) { return g * c; });
  });
}

inline Var leaky_relu(Var a, double slope = 0.2) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v = v > 0.0 ? v : slope * v;
  return a.tape->record(std::move(out), {a.id}, [a = a.id, slope](Tape& t, std::size_t s) {
    const auto& av = t.value(a);
    detail::accumulate(t, a, s, [&](double g, std::size_t k) { return av[k] > 0.0 ? g : slope * g; });
  });
}

/// Elementwise |a|; subgradient 0 at 0.
inline Var abs(Var a) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v = std::abs(v);
  return a.tape->record(std::move(out), {a.id}, [a = a.id](Tape& t, std::size_t s) {
    const auto& av = t.value(a);
    detail::accumulate(t, a, s, [&](double g, std::size_t k) {
      return av[k] > 0.0 ? g : (av[k] < 0.0 ? -g : 0.0);
    });
  });
}

inline Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return a.tape->record(Tensor::scalar(acc), {a.id}, [a = a.id](Tape& t, std::size_t s) {
    if (!t.requires_grad(a)) return;
    const double g = t.grad_ref(s)[0];
    for (auto& v : t.grad_ref(a).vec()) v += g;
  });
}

inline Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape->record(std::move(out), {a.id}, [a = a.id](Tape& t, std::size_t s) {
    detail::accumulate(t, a, s, [](double g, std::size_t) { return g; });
  });
}

inline Var transpose(Var a) {
  const auto& av = a.value();
  if (av.rank() != 2) throw DimensionError("transpose: expects a matrix, got " + shape_str(av.shape()));
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return a.tape->record(std::move(out), {a.id}, [a = a.id, m, n](Tape& t, std::size_t s) {
    if (!t.requires_grad(a)) return;
    auto& ga = t.grad_ref(a);
    const auto& g = t.grad_ref(s);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

namespace detail {

// c[m x n] += a[m x k] * b[k x n], optionally with a and/or b transposed in storage.
inline void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                     bool ta, bool tb) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? a[p * m + i] : a[i * k + p];
      if (av == 0.0) continue;
      if (!tb) {
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      }
    }
  }
}

}  // namespace detail

/// Matrix product a[m x k] * b[k x n].
inline Var matmul(Var a, Var b) {
  detail::same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  detail::gemm_acc(av.data().data(), bv.data().data(), out.data().data(), m, k, n, false, false);
  return a.tape->record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id, m, k, n](Tape& t, std::size_t s) {
    const auto& g = t.grad_ref(s);
    if (t.requires_grad(a)) {
      // dA = G * B^T
      auto& ga = t.grad_ref(a);
      detail::gemm_acc(g.data().data(), t.value(b).data().data(), ga.data().data(), m, n, k, false, true);
    }
    if (t.requires_grad(b)) {
      // dB = A^T * G
      auto& gb = t.grad_ref(b);
      detail::gemm_acc(t.value(a).data().data(), g.data().data(), gb.data().data(), k, m, n, true, false);
    }
  });
}

/// x[m x n] + bias[n] broadcast over rows.
inline Var add_bias(Var x, Var bias) {
  detail::same_tape(x, bias);
  const auto& xv = x.value();
  const auto& bv = bias.value();
  if (xv.rank() != 2 || bv.size() != xv.dim(1))
    throw DimensionError("add_bias: bias " + shape_str(bv.shape()) + " does not match columns of " +
                         shape_str(xv.shape()));
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return x.tape->record(std::move(out), {x.id, bias.id}, [x = x.id, b = bias.id, m, n](Tape& t, std::size_t s) {
    detail::accumulate(t, x, s, [](double g, std::size_t) { return g; });
    if (!t.requires_grad(b)) return;
    auto& gb = t.grad_ref(b);
    const auto& g = t.grad_ref(s);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
  });
}

/// Dense layer: x[m x in] * w[in x out] + b[out].
inline Var linear(Var x, Var w, Var b) { return add_bias(matmul(x, w), b); }

/// Row-wise softmax with max subtraction.
inline Var softmax_rows(Var x) {
  const auto& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("softmax_rows: expects a matrix, got " + shape_str(xv.shape()));
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (out[i * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return x.tape->record(std::move(out), {x.id}, [x = x.id, r, c](Tape& t, std::size_t s) {
    if (!t.requires_grad(x)) return;
    const auto& y = t.value(s);
    const auto& g = t.grad_ref(s);
    auto& gx = t.grad_ref(x);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

namespace detail {

// Accumulating 3x3 same-size cross-correlation primitives (zero padding 1).
struct Conv3 {
  std::size_t cin, cout, h, w;

  void forward(const double* x, const double* k, double* y) const {
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t ky = 0; ky < 3; ++ky)
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const double wgt = k[((o * cin + c) * 3 + ky) * 3 + kx];
            if (wgt == 0.0) continue;
            each(ky, kx, [&](std::size_t yo, std::size_t yi, std::size_t x0, std::size_t x1, std::ptrdiff_t dx) {
              double* yrow = y + (o * h + yo) * w;
              const double* xrow = x + (c * h + yi) * w;
              for (std::size_t xo = x0; xo < x1; ++xo) yrow[xo] += wgt * xrow[xo + dx];
            });
          }
  }

  void backward_input(const double* gy, const double* k, double* gx) const {
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t ky = 0; ky < 3; ++ky)
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const double wgt = k[((o * cin + c) * 3 + ky) * 3 + kx];
            if (wgt == 0.0) continue;
            each(ky, kx, [&](std::size_t yo, std::size_t yi, std::size_t x0, std::size_t x1, std::ptrdiff_t dx) {
              const double* grow = gy + (o * h + yo) * w;
              double* xrow = gx + (c * h + yi) * w;
              for (std::size_t xo = x0; xo < x1; ++xo) xrow[xo + dx] += wgt * grow[xo];
            });
          }
  }

  void backward_kernel(const double* gy, const double* x, double* gk) const {
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t ky = 0; ky < 3; ++ky)
          for (std::size_t kx = 0; kx < 3; ++kx) {
            double acc = 0.0;
            each(ky, kx, [&](std::size_t yo, std::size_t yi, std::size_t x0, std::size_t x1, std::ptrdiff_t dx) {
              const double* grow = gy + (o * h + yo) * w;
              const double* xrow = x + (c * h + yi) * w;
              for (std::size_t xo = x0; xo < x1; ++xo) acc += grow[xo] * xrow[xo + dx];
            });
            gk[((o * cin + c) * 3 + ky) * 3 + kx] += acc;
          }
  }

  // Visit output rows that have an in-bounds input row for tap (ky, kx).
  template <typename F>
  void each(std::size_t ky, std::size_t kx, F&& f) const {
    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - 1;
    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - 1;
    const std::size_t y0 = dy < 0 ? 1 : 0, y1 = dy > 0 ? h - 1 : h;
    const std::size_t x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? w - 1 : w;
    for (std::size_t yo = y0; yo < y1; ++yo)
      f(yo, static_cast<std::size_t>(static_cast<std::ptrdiff_t>(yo) + dy), x0, x1, dx);
  }
};

}  // namespace detail

/// Same-size 3x3 cross-correlation: input[c_in x h x w], kernel[c_out x c_in x 3 x 3].
inline Var conv2d(Var input, Var kernel) {
  detail::same_tape(input, kernel);
  const auto& xv = input.value();
  const auto& kv = kernel.value();
  if (xv.rank() != 3) throw DimensionError("conv2d: input must be c x h x w, got " + shape_str(xv.shape()));
  if (kv.rank() != 4 || kv.dim(2) != 3 || kv.dim(3) != 3)
    throw DimensionError("conv2d: kernel must be c_out x c_in x 3 x 3, got " + shape_str(kv.shape()));
  if (kv.dim(1) != xv.dim(0))
    throw DimensionError("conv2d: kernel expects " + std::to_string(kv.dim(1)) + " input channels, input has " +
                         std::to_string(xv.dim(0)));
  const detail::Conv3 cv{xv.dim(0), kv.dim(0), xv.dim(1), xv.dim(2)};
  Tensor out({cv.cout, cv.h, cv.w});
  cv.forward(xv.data().data(), kv.data().data(), out.data().data());
  return input.tape->record(std::move(out), {input.id, kernel.id}, [x = input.id, k = kernel.id, cv](Tape& t, std::size_t s) {
    const auto& g = t.grad_ref(s);
    if (t.requires_grad(x)) cv.backward_input(g.data().data(), t.value(k).data().data(), t.grad_ref(x).data().data());
    if (t.requires_grad(k)) cv.backward_kernel(g.data().data(), t.value(x).data().data(), t.grad_ref(k).data().data());
  });
}

/// Scales kernel[o x c x 3 x 3] by per-input-channel s[c]; optionally demodulates each
/// output channel to unit norm: d_o = 1 / sqrt(sum_{c,k} (s_c k_{o,c})^2 + 1e-8).
inline Var modulate_kernel(Var kernel, Var scales, bool demodulate = true) {
  detail::same_tape(kernel, scales);
  const auto& kv = kernel.value();
  const auto& sv = scales.value();
  if (kv.rank() != 4 || sv.size() != kv.dim(1))
    throw DimensionError("modulate_kernel: scales " + shape_str(sv.shape()) + " do not match input channels of " +
                         shape_str(kv.shape()));
  const std::size_t co = kv.dim(0), ci = kv.dim(1), taps = kv.dim(2) * kv.dim(3);
  Tensor mod = kv;
  std::vector<double> demod(co, 1.0);
  for (std::size_t o = 0; o < co; ++o) {
    double ss = 0.0;
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t p = 0; p < taps; ++p) {
        double& v = mod[(o * ci + c) * taps + p];
        v *= sv[c];
        ss += v * v;
      }
    if (demodulate) demod[o] = 1.0 / std::sqrt(ss + 1e-8);
  }
  Tensor out = mod;
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t q = 0; q < ci * taps; ++q) out[o * ci * taps + q] *= demod[o];

  return kernel.tape->record(
      std::move(out), {kernel.id, scales.id},
      [k = kernel.id, sc = scales.id, co, ci, taps, mod = std::move(mod), demod = std::move(demod),
       demodulate](Tape& t, std::size_t s) {
        const auto& g = t.grad_ref(s);
        // gradient w.r.t. the modulated (pre-demodulation) kernel
        std::vector<double> gm(g.size());
        for (std::size_t o = 0; o < co; ++o) {
          const std::size_t base = o * ci * taps;
          double dot = 0.0;
          if (demodulate)
            for (std::size_t q = 0; q < ci * taps; ++q) dot += g[base + q] * mod[base + q];
          const double d = demod[o];
          for (std::size_t q = 0; q < ci * taps; ++q)
            gm[base + q] = d * g[base + q] - (demodulate ? d * d * d * mod[base + q] * dot : 0.0);
        }
        const auto& kv = t.value(k);
        const auto& sv = t.value(sc);
        if (t.requires_grad(k)) {
          auto& gk = t.grad_ref(k);
          for (std::size_t o = 0; o < co; ++o)
            for (std::size_t c = 0; c < ci; ++c)
              for (std::size_t p = 0; p < taps; ++p) {
                const std::size_t q = (o * ci + c) * taps + p;
                gk[q] += gm[q] * sv[c];
              }
        }
        if (t.requires_grad(sc)) {
          auto& gs = t.grad_ref(sc);
          for (std::size_t o = 0; o < co; ++o)
            for (std::size_t c = 0; c < ci; ++c)
              for (std::size_t p = 0; p < taps; ++p) {
                const std::size_t q = (o * ci + c) * taps + p;
                gs[c] += gm[q] * kv[q];
              }
        }
      });
}

/// Normalizes each channel (leading axis) over the remaining axes to zero mean and
/// unit variance: (x - mu) / sqrt(var + eps).
inline Var instance_norm(Var x, double eps = 1e-8) {
  const auto& xv = x.value();
  if (xv.rank() < 2) throw DimensionError("instance_norm: expects channels-first tensor");
  const std::size_t ch = xv.dim(0), n = xv.size() / ch;
  Tensor out(xv.shape());
  std::vector<double> inv(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    const double* row = xv.data().data() + c * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += row[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(n);
    inv[c] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) out[c * n + i] = (row[i] - mu) * inv[c];
  }
  return x.tape->record(std::move(out), {x.id}, [x = x.id, ch, n, inv = std::move(inv)](Tape& t, std::size_t s) {
    if (!t.requires_grad(x)) return;
    const auto& y = t.value(s);
    const auto& g = t.grad_ref(s);
    auto& gx = t.grad_ref(x);
    const double nn = static_cast<double>(n);
    for (std::size_t c = 0; c < ch; ++c) {
      double mg = 0.0, mgy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        mg += g[c * n + i];
        mgy += g[c * n + i] * y[c * n + i];
      }
      mg /= nn;
      mgy /= nn;
      for (std::size_t i = 0; i < n; ++i) gx[c * n + i] += inv[c] * (g[c * n + i] - mg - y[c * n + i] * mgy);
    }
  });
}

// ---------------------------------------------------------------------------
// Complex-valued ops on real tensors shaped [2 x h x w] (channel 0 real, 1 imag).

inline ComplexImage to_complex(const Tensor& t, Domain d = Domain::image) {
  if (t.rank() != 3 || t.dim(0) != 2)
    throw DimensionError("expected a 2 x h x w real/imag tensor, got " + shape_str(t.shape()));
  const std::size_t h = t.dim(1), w = t.dim(2), n = h * w;
  ComplexImage out(h, w, d);
  for (std::size_t i = 0; i < n; ++i) out[i] = cplx(t[i], t[n + i]);
  return out;
}

inline Tensor to_tensor(const ComplexImage& x) {
  const std::size_t n = x.size();
  Tensor out({2, x.height(), x.width()});
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[i].real();
    out[n + i] = x[i].imag();
  }
  return out;
}

namespace detail {

inline void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

}  // namespace detail

/// fft2c on a real/imag tensor. Its adjoint is ifft2c because the transform is unitary.
inline Var fft2c(Var x) {
  Tensor out = to_tensor(udr::fft2c(to_complex(x.value())));
  return x.tape->record(std::move(out), {x.id}, [x = x.id](Tape& t, std::size_t s) {
    if (!t.requires_grad(x)) return;
    detail::add_into(t.grad_ref(x), to_tensor(udr::ifft2c(to_complex(t.grad_ref(s), Domain::kspace))));
  });
}

inline Var ifft2c(Var k) {
  Tensor out = to_tensor(udr::ifft2c(to_complex(k.value(), Domain::kspace)));
  return k.tape->record(std::move(out), {k.id}, [k = k.id](Tape& t, std::size_t s) {
    if (!t.requires_grad(k)) return;
    detail::add_into(t.grad_ref(k), to_tensor(udr::fft2c(to_complex(t.grad_ref(s)))));
  });
}

/// Pixelwise product with a constant complex map, conj(c) * x when `conjugate`.
inline Var complex_mul(Var x, const ComplexImage& c, bool conjugate = false) {
  const auto& xv = x.value();
  const std::size_t n = c.size();
  if (xv.rank() != 3 || xv.dim(0) != 2 || xv.dim(1) != c.height() || xv.dim(2) != c.width())
    throw DimensionError("complex_mul: tensor " + shape_str(xv.shape()) + " does not match complex map");
  std::vector<cplx> cv(c.values().begin(), c.values().end());
  if (conjugate)
    for (auto& v : cv) v = std::conj(v);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const cplx r = cv[i] * cplx(xv[i], xv[n + i]);
    out[i] = r.real();
    out[n + i] = r.imag();
  }
  return x.tape->record(std::move(out), {x.id}, [x = x.id, cv = std::move(cv), n](Tape& t, std::size_t s) {
    if (!t.requires_grad(x)) return;
    const auto& g = t.grad_ref(s);
    auto& gx = t.grad_ref(x);
    for (std::size_t i = 0; i < n; ++i) {
      const cplx r = std::conj(cv[i]) * cplx(g[i], g[n + i]);
      gx[i] += r.real();
      gx[n + i] += r.imag();
    }
  });
}

}  // namespace ad

}  // namespace udr
