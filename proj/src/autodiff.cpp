// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "physfuse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <fmt/format.h>

#include "physfuse/error.hpp"

namespace physfuse::ad {
namespace {

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shapes {} and {} differ", op, to_string(a.shape()),
                                 to_string(b.shape())));
  }
}

void require_rank3(Var x, const char* op) {
  if (x.value().rank() != 3) {
    throw ShapeError(fmt::format("{}: expected (C,H,W), got {}", op, to_string(x.shape())));
  }
}

inline std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

// Element-wise unary op with derivative expressed through input and output.
template <typename F, typename D>
Var unary(Var x, F f, D dfdx) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return x.tape().record(std::move(out), {x},
                         [dfdx](const Tensor& out_value, const Tensor& g,
                                std::span<const Tensor* const> in_values,
                                std::span<Tensor* const> in_grads) {
                           if (in_grads[0] == nullptr) return;
                           const Tensor& xin = *in_values[0];
                           Tensor& gx = *in_grads[0];
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             gx[i] += g[i] * dfdx(xin[i], out_value[i]);
                           }
                         });
}

}  // namespace

const Tensor& Var::value() const { return tape_->value(index_); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(ParamStore& store, const std::string& name) {
  auto& entry = store.at(name);
  Node n;
  n.value = entry.value;
  n.param = &entry;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.tape_ != this) throw ContractError("input recorded on a different tape");
    n.inputs.push_back(v.index_);
    n.requires_grad = n.requires_grad || nodes_[v.index_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("loss recorded on a different tape");
  const auto& root = nodes_.at(loss.index_);
  if (root.value.size() != 1) {
    throw ContractError(fmt::format("backward needs a scalar loss, got shape {}",
                                    to_string(root.value.shape())));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  nodes_[loss.index_].grad = Tensor(root.value.shape(), 1.0);

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t i = loss.index_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      auto dst = n.param->grad.values();
      auto src = n.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      continue;
    }
    in_values.clear();
    in_grads.clear();
    for (std::size_t j : n.inputs) {
      Node& in = nodes_[j];
      in_values.push_back(&in.value);
      if (in.requires_grad) {
        if (in.grad.size() == 0) in.grad = Tensor(in.value.shape());
        in_grads.push_back(&in.grad);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    n.backward(n.value, n.grad, in_values, in_grads);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.index_);
  if (n.grad.size() == 0) return Tensor(n.value.shape());
  return n.grad;
}

// ---------------------------------------------------------------------------

Var conv2d(Var x, Var w, Var b) {
  require_same_tape(x, w);
  require_same_tape(x, b);
  require_rank3(x, "conv2d");
  const Tensor& xin = x.value();
  const Tensor& win = w.value();
  const std::size_t cin = xin.dim(0);
  const std::size_t h = xin.dim(1);
  const std::size_t wd = xin.dim(2);
  if (win.rank() != 4 || win.dim(1) != cin || win.dim(2) != 3 || win.dim(3) != 3) {
    throw ShapeError(fmt::format("conv2d: weight {} incompatible with input {}",
                                 to_string(win.shape()), to_string(xin.shape())));
  }
  const std::size_t cout = win.dim(0);
  if (b.value().rank() != 1 || b.value().dim(0) != cout) {
    throw ShapeError(fmt::format("conv2d: bias {} for {} output channels",
                                 to_string(b.shape()), cout));
  }

  // Replicate-padded neighbour index tables, shared by forward and backward.
  auto rows = std::make_shared<std::vector<std::size_t>>(h * 3);
  auto cols = std::make_shared<std::vector<std::size_t>>(wd * 3);
  for (std::size_t r = 0; r < h; ++r) {
    for (int k = 0; k < 3; ++k) (*rows)[r * 3 + k] = clamp_index(static_cast<std::ptrdiff_t>(r) + k - 1, h);
  }
  for (std::size_t c = 0; c < wd; ++c) {
    for (int k = 0; k < 3; ++k) (*cols)[c * 3 + k] = clamp_index(static_cast<std::ptrdiff_t>(c) + k - 1, wd);
  }

  Tensor out({cout, h, wd});
  const Tensor& bin = b.value();
  for (std::size_t o = 0; o < cout; ++o) {
    double* op = out.data() + (o * h * wd);
    for (std::size_t i = 0; i < h * wd; ++i) op[i] = bin[o];
    for (std::size_t c = 0; c < cin; ++c) {
      const double* xp = xin.data() + (c * h * wd);
      const double* wp = win.data() + (o * cin + c) * 9;
      for (std::size_t r = 0; r < h; ++r) {
        const std::size_t* rr = (*rows).data() + (r * 3);
        for (std::size_t col = 0; col < wd; ++col) {
          const std::size_t* cc = (*cols).data() + (col * 3);
          double acc = 0.0;
          for (int kr = 0; kr < 3; ++kr) {
            const double* xrow = xp + rr[kr] * wd;
            acc += wp[kr * 3 + 0] * xrow[cc[0]] + wp[kr * 3 + 1] * xrow[cc[1]] +
                   wp[kr * 3 + 2] * xrow[cc[2]];
          }
          op[r * wd + col] += acc;
        }
      }
    }
  }

  return x.tape().record(
      std::move(out), {x, w, b},
      [rows, cols, cin, cout, h, wd](const Tensor&, const Tensor& g,
                                     std::span<const Tensor* const> in_values,
                                     std::span<Tensor* const> in_grads) {
        const Tensor& xv = *in_values[0];
        const Tensor& wv = *in_values[1];
        Tensor* gx = in_grads[0];
        Tensor* gw = in_grads[1];
        Tensor* gb = in_grads[2];
        for (std::size_t o = 0; o < cout; ++o) {
          const double* gp = g.data() + (o * h * wd);
          if (gb != nullptr) {
            double s = 0.0;
            for (std::size_t i = 0; i < h * wd; ++i) s += gp[i];
            (*gb)[o] += s;
          }
          for (std::size_t c = 0; c < cin; ++c) {
            const double* xp = xv.data() + (c * h * wd);
            const double* wp = wv.data() + (o * cin + c) * 9;
            double* gxp = gx != nullptr ? (*gx).data() + (c * h * wd) : nullptr;
            double* gwp = gw != nullptr ? (*gw).data() + ((o * cin + c) * 9) : nullptr;
            for (std::size_t r = 0; r < h; ++r) {
              const std::size_t* rr = (*rows).data() + (r * 3);
              for (std::size_t col = 0; col < wd; ++col) {
                const std::size_t* cc = (*cols).data() + (col * 3);
                const double go = gp[r * wd + col];
                if (go == 0.0) continue;
                for (int kr = 0; kr < 3; ++kr) {
                  for (int kc = 0; kc < 3; ++kc) {
                    const std::size_t src = rr[kr] * wd + cc[kc];
                    if (gwp != nullptr) gwp[kr * 3 + kc] += go * xp[src];
                    if (gxp != nullptr) gxp[src] += go * wp[kr * 3 + kc];
                  }
                }
              }
            }
          }
        }
      });
}

Var downsample2(Var x) {
  require_rank3(x, "downsample2");
  const Tensor& in = x.value();
  const std::size_t c = in.dim(0);
  const std::size_t h = in.dim(1);
  const std::size_t w = in.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError(fmt::format("downsample2: odd spatial size {}", to_string(in.shape())));
  }
  const std::size_t ho = h / 2;
  const std::size_t wo = w / 2;
  Tensor out({c, ho, wo});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t r = 0; r < ho; ++r) {
      for (std::size_t col = 0; col < wo; ++col) {
        const std::size_t base = (k * h + 2 * r) * w + 2 * col;
        out[(k * ho + r) * wo + col] =
            0.25 * (in[base] + in[base + 1] + in[base + w] + in[base + w + 1]);
      }
    }
  }
  return x.tape().record(std::move(out), {x},
                         [c, h, w, ho, wo](const Tensor&, const Tensor& g,
                                           std::span<const Tensor* const>,
                                           std::span<Tensor* const> in_grads) {
                           Tensor& gx = *in_grads[0];
                           for (std::size_t k = 0; k < c; ++k) {
                             for (std::size_t r = 0; r < ho; ++r) {
                               for (std::size_t col = 0; col < wo; ++col) {
                                 const double v = 0.25 * g[(k * ho + r) * wo + col];
                                 const std::size_t base = (k * h + 2 * r) * w + 2 * col;
                                 gx[base] += v;
                                 gx[base + 1] += v;
                                 gx[base + w] += v;
                                 gx[base + w + 1] += v;
                               }
                             }
                           }
                         });
}

Var upsample2(Var x) {
  require_rank3(x, "upsample2");
  const Tensor& in = x.value();
  const std::size_t c = in.dim(0);
  const std::size_t h = in.dim(1);
  const std::size_t w = in.dim(2);
  const std::size_t ho = h * 2;
  const std::size_t wo = w * 2;
  Tensor out({c, ho, wo});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t r = 0; r < ho; ++r) {
      for (std::size_t col = 0; col < wo; ++col) {
        out[(k * ho + r) * wo + col] = in[(k * h + r / 2) * w + col / 2];
      }
    }
  }
  return x.tape().record(std::move(out), {x},
                         [c, h, w, ho, wo](const Tensor&, const Tensor& g,
                                           std::span<const Tensor* const>,
                                           std::span<Tensor* const> in_grads) {
                           Tensor& gx = *in_grads[0];
                           for (std::size_t k = 0; k < c; ++k) {
                             for (std::size_t r = 0; r < ho; ++r) {
                               for (std::size_t col = 0; col < wo; ++col) {
                                 gx[(k * h + r / 2) * w + col / 2] += g[(k * ho + r) * wo + col];
                               }
                             }
                           }
                         });
}

Var leaky_relu(Var x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var sigmoid(Var x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var scale(Var a, double s) {
  return unary(
      a, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(
      a, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var clamp(Var x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

namespace {

template <typename F, typename DA, typename DB>
Var binary(Var a, Var b, const char* op, F f, DA dfda, DB dfdb) {
  require_same_tape(a, b);
  require_same_shape(a, b, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  return a.tape().record(std::move(out), {a, b},
                         [dfda, dfdb](const Tensor&, const Tensor& g,
                                      std::span<const Tensor* const> in_values,
                                      std::span<Tensor* const> in_grads) {
                           const Tensor& x = *in_values[0];
                           const Tensor& y = *in_values[1];
                           if (in_grads[0] != nullptr) {
                             Tensor& ga = *in_grads[0];
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfda(x[i], y[i]);
                           }
                           if (in_grads[1] != nullptr) {
                             Tensor& gb = *in_grads[1];
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * dfdb(x[i], y[i]);
                           }
                         });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var concat(Var a, Var b) {
  require_same_tape(a, b);
  require_rank3(a, "concat");
  require_rank3(b, "concat");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2)) {
    throw ShapeError(fmt::format("concat: spatial sizes {} and {} differ", to_string(av.shape()),
                                 to_string(bv.shape())));
  }
  Tensor out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
  std::copy(av.values().begin(), av.values().end(), out.values().begin());
  std::copy(bv.values().begin(), bv.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(av.size()));
  const std::size_t na = av.size();
  return a.tape().record(std::move(out), {a, b},
                         [na](const Tensor&, const Tensor& g, std::span<const Tensor* const>,
                              std::span<Tensor* const> in_grads) {
                           if (in_grads[0] != nullptr) {
                             for (std::size_t i = 0; i < na; ++i) (*in_grads[0])[i] += g[i];
                           }
                           if (in_grads[1] != nullptr) {
                             Tensor& gb = *in_grads[1];
                             for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
                           }
                         });
}

Var channel_scale(Var x, Var m) {
  require_same_tape(x, m);
  require_rank3(x, "channel_scale");
  const Tensor& xv = x.value();
  const Tensor& mv = m.value();
  const std::size_t c = xv.dim(0);
  if (mv.size() != c) {
    throw ShapeError(fmt::format("channel_scale: {} factors for {} channels", mv.size(), c));
  }
  const std::size_t plane = xv.dim(1) * xv.dim(2);
  Tensor out(xv.shape());
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < plane; ++i) out[k * plane + i] = mv[k] * xv[k * plane + i];
  }
  return x.tape().record(std::move(out), {x, m},
                         [c, plane](const Tensor&, const Tensor& g,
                                    std::span<const Tensor* const> in_values,
                                    std::span<Tensor* const> in_grads) {
                           const Tensor& xin = *in_values[0];
                           const Tensor& min = *in_values[1];
                           for (std::size_t k = 0; k < c; ++k) {
                             double gm = 0.0;
                             for (std::size_t i = 0; i < plane; ++i) {
                               const std::size_t idx = k * plane + i;
                               if (in_grads[0] != nullptr) (*in_grads[0])[idx] += g[idx] * min[k];
                               gm += g[idx] * xin[idx];
                             }
                             if (in_grads[1] != nullptr) (*in_grads[1])[k] += gm;
                           }
                         });
}

Var mean(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.values()) s += v;
  const double n = static_cast<double>(xv.size());
  return x.tape().record(Tensor::scalar(s / n), {x},
                         [n](const Tensor&, const Tensor& g, std::span<const Tensor* const>,
                             std::span<Tensor* const> in_grads) {
                           const double v = g[0] / n;
                           for (double& gx : in_grads[0]->values()) gx += v;
                         });
}

Var mse_loss(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mse_loss");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  const double n = static_cast<double>(av.size());
  return a.tape().record(Tensor::scalar(s / n), {a, b},
                         [n](const Tensor&, const Tensor& g, std::span<const Tensor* const> in_values,
                             std::span<Tensor* const> in_grads) {
                           const Tensor& x = *in_values[0];
                           const Tensor& y = *in_values[1];
                           const double k = 2.0 * g[0] / n;
                           for (std::size_t i = 0; i < x.size(); ++i) {
                             const double d = k * (x[i] - y[i]);
                             if (in_grads[0] != nullptr) (*in_grads[0])[i] += d;
                             if (in_grads[1] != nullptr) (*in_grads[1])[i] -= d;
                           }
                         });
}

}  // namespace physfuse::ad
