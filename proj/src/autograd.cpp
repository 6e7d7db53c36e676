#include "usspine/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace usspine {

namespace {

using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void require_rank4(const Tensor& t, const char* op) {
  require(t.shape().rank() == 4, std::string(op) + ": expected rank-4 tensor, got " + t.shape().str());
}

struct ConvGeometry {
  int cin, h, w, kh, kw, stride, pad, ho, wo;
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Column buffer for output rows [oh0, oh1): [cin*kh*kw, (oh1-oh0)*wo].
void im2col(const Real* x, const ConvGeometry& g, int oh0, int oh1, Real* col) {
  const int plane = (oh1 - oh0) * g.wo;
  for (int c = 0; c < g.cin; ++c) {
    const Real* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        Real* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * plane;
        for (int oh = oh0; oh < oh1; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          Real* out = row + (oh - oh0) * g.wo;
          if (ih < 0 || ih >= g.h) {
            std::fill(out, out + g.wo, 0.0);
            continue;
          }
          const Real* xrow = xc + static_cast<std::size_t>(ih) * g.w;
          if (g.stride == 1) {
            const int lo = std::max(0, g.pad - kj);
            const int hi = std::min(g.wo, g.w + g.pad - kj);
            std::fill(out, out + lo, 0.0);
            if (hi > lo) std::copy(xrow + lo - g.pad + kj, xrow + hi - g.pad + kj, out + lo);
            std::fill(out + std::max(lo, hi), out + g.wo, 0.0);
          } else {
            for (int ow = 0; ow < g.wo; ++ow) {
              const int iw = ow * g.stride - g.pad + kj;
              out[ow] = (iw >= 0 && iw < g.w) ? xrow[iw] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const Real* col, const ConvGeometry& g, int oh0, int oh1, Real* dx) {
  const int plane = (oh1 - oh0) * g.wo;
  for (int c = 0; c < g.cin; ++c) {
    Real* dxc = dx + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const Real* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * plane;
        for (int oh = oh0; oh < oh1; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.h) continue;
          Real* dxrow = dxc + static_cast<std::size_t>(ih) * g.w;
          const Real* in = row + (oh - oh0) * g.wo;
          for (int ow = 0; ow < g.wo; ++ow) {
            const int iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < g.w) dxrow[iw] += in[ow];
          }
        }
      }
    }
  }
}

// Output rows per column tile, keeping the tile near 256 KiB.
int tile_rows(const ConvGeometry& g) {
  const int k = g.cin * g.kh * g.kw;
  const int rows = 32768 / std::max(1, k * g.wo);
  return std::clamp(rows, 1, g.ho);
}

}  // namespace

int conv_output_extent(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Node& Tape::node(Var v) {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::out_of_range("Tape: unknown variable id " + std::to_string(v.id));
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::out_of_range("Tape: unknown variable id " + std::to_string(v.id));
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_grad_;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::watch(Parameter& param) {
  Node n;
  n.value = param.value;
  n.requires_grad = record_grad_;
  n.param = record_grad_ ? &param : nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const { return node(v).grad; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_grad_) {
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](Var in) { return node(in).requires_grad; });
    if (n.requires_grad) {
      n.inputs = std::move(inputs);
      n.backward = std::move(fn);
    }
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!record_grad_) throw std::logic_error("Tape::backward: tape was created without gradient recording");
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be a single element, got " +
                                root.value.shape().str());
  }
  if (!root.requires_grad) throw std::invalid_argument("Tape::backward: loss does not depend on any variable");
  grad_buffer(loss)[0] += 1.0;

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param != nullptr) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.zero_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Ops

namespace ops {

Var conv2d(Tape& tape, Var input, Var weight, Var bias, int stride, int padding) {
  const Tensor& x = tape.value(input);
  const Tensor& w = tape.value(weight);
  const Tensor& b = tape.value(bias);
  require_rank4(x, "conv2d");
  require_rank4(w, "conv2d");
  require(stride > 0, "conv2d: stride must be positive");
  require(padding >= 0, "conv2d: padding must be non-negative");
  require(x.shape()[1] == w.shape()[1],
          "conv2d: input has " + std::to_string(x.shape()[1]) + " channels but weight expects " +
              std::to_string(w.shape()[1]) + " (input " + x.shape().str() + ", weight " + w.shape().str() + ")");
  require(w.shape()[2] % 2 == 1 && w.shape()[3] % 2 == 1, "conv2d: kernel extents must be odd, got " + w.shape().str());
  require(b.shape().rank() == 1 && b.shape()[0] == w.shape()[0],
          "conv2d: bias shape " + b.shape().str() + " does not match " + std::to_string(w.shape()[0]) + " outputs");

  const int batch = x.shape()[0];
  const int cout = w.shape()[0];
  ConvGeometry g{x.shape()[1], x.shape()[2], x.shape()[3], w.shape()[2], w.shape()[3], stride, padding, 0, 0};
  g.ho = conv_output_extent(g.h, g.kh, stride, padding);
  g.wo = conv_output_extent(g.w, g.kw, stride, padding);
  require(g.ho > 0 && g.wo > 0, "conv2d: kernel larger than padded input");

  const int k = g.cin * g.kh * g.kw;
  const int plane = g.ho * g.wo;
  const int tile = tile_rows(g);
  Tensor y(Shape{batch, cout, g.ho, g.wo});
  CMapR wm(w.raw(), cout, k);
  Eigen::Map<const Eigen::VectorXd> bv(b.raw(), cout);
  MatR col;

  for (int n = 0; n < batch; ++n) {
    const Real* xn = x.raw() + static_cast<std::size_t>(n) * g.cin * g.h * g.w;
    MapR yn(y.raw() + static_cast<std::size_t>(n) * cout * plane, cout, plane);
    if (g.pointwise()) {
      yn.noalias() = wm * CMapR(xn, k, plane);
    } else {
      for (int r0 = 0; r0 < g.ho; r0 += tile) {
        const int r1 = std::min(g.ho, r0 + tile);
        const int cols = (r1 - r0) * g.wo;
        col.resize(k, cols);
        im2col(xn, g, r0, r1, col.data());
        yn.middleCols(r0 * g.wo, cols).noalias() = wm * col;
      }
    }
    yn.colwise() += bv;
  }

  return tape.record(std::move(y), {input, weight, bias},
                     [input, weight, bias, g, cout, batch, tile](Tape& t, const Tensor& dy) {
                       const int kk = g.cin * g.kh * g.kw;
                       const int pl = g.ho * g.wo;
                       const Tensor& xv = t.value(input);
                       const Tensor& wv = t.value(weight);
                       const bool need_x = t.requires_grad(input);
                       const bool need_w = t.requires_grad(weight);
                       const bool need_b = t.requires_grad(bias);
                       CMapR wmat(wv.raw(), cout, kk);
                       MatR colbuf;
                       MatR dcol;
                       for (int n = 0; n < batch; ++n) {
                         const Real* xn = xv.raw() + static_cast<std::size_t>(n) * g.cin * g.h * g.w;
                         CMapR dyn(dy.raw() + static_cast<std::size_t>(n) * cout * pl, cout, pl);
                         if (need_b) {
                           // Plain loop: Eigen's vectorized reduction order depends on the row address.
                           Real* db = t.grad_buffer(bias).raw();
                           for (int c = 0; c < cout; ++c) {
                             const Real* row = dyn.data() + static_cast<std::size_t>(c) * pl;
                             Real s = 0.0;
                             for (int i = 0; i < pl; ++i) s += row[i];
                             db[c] += s;
                           }
                         }
                         Real* dxn = need_x ? t.grad_buffer(input).raw() +
                                                  static_cast<std::size_t>(n) * g.cin * g.h * g.w
                                            : nullptr;
                         if (g.pointwise()) {
                           if (need_w) {
                             MapR dw(t.grad_buffer(weight).raw(), cout, kk);
                             dw.noalias() += dyn * CMapR(xn, kk, pl).transpose();
                           }
                           if (need_x) MapR(dxn, kk, pl).noalias() += wmat.transpose() * dyn;
                           continue;
                         }
                         for (int r0 = 0; r0 < g.ho; r0 += tile) {
                           const int r1 = std::min(g.ho, r0 + tile);
                           const int cols = (r1 - r0) * g.wo;
                           auto dy_tile = dyn.middleCols(r0 * g.wo, cols);
                           if (need_w) {
                             colbuf.resize(kk, cols);
                             im2col(xn, g, r0, r1, colbuf.data());
                             MapR dw(t.grad_buffer(weight).raw(), cout, kk);
                             dw.noalias() += dy_tile * colbuf.transpose();
                           }
                           if (need_x) {
                             dcol.resize(kk, cols);
                             dcol.noalias() = wmat.transpose() * dy_tile;
                             col2im_add(dcol.data(), g, r0, r1, dxn);
                           }
                         }
                       }
                     });
}

Var maxpool2(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  require_rank4(x, "maxpool2");
  const int b = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  require(h % 2 == 0 && w % 2 == 0, "maxpool2: spatial extents must be even, got " + x.shape().str());
  const int ho = h / 2, wo = w / 2;
  Tensor y(Shape{b, c, ho, wo});
  std::vector<int> argmax(y.size());
  const Real* xp = x.raw();
  std::size_t o = 0;
  for (int plane = 0; plane < b * c; ++plane) {
    const Real* xc = xp + static_cast<std::size_t>(plane) * h * w;
    const int base = plane * h * w;
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j, ++o) {
        const int r0 = (2 * i) * w + 2 * j;
        const int cand[4] = {r0, r0 + 1, r0 + w, r0 + w + 1};
        int best = cand[0];
        for (int q = 1; q < 4; ++q) {
          if (xc[cand[q]] > xc[best]) best = cand[q];
        }
        y[o] = xc[best];
        argmax[o] = base + best;
      }
    }
  }
  return tape.record(std::move(y), {input}, [input, argmax = std::move(argmax)](Tape& t, const Tensor& dy) {
    Tensor& dx = t.grad_buffer(input);
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[static_cast<std::size_t>(argmax[i])] += dy[i];
  });
}

Var upsample_nearest2(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  require_rank4(x, "upsample_nearest2");
  const int b = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const int ho = 2 * h, wo = 2 * w;
  Tensor y(Shape{b, c, ho, wo});
  for (int plane = 0; plane < b * c; ++plane) {
    const Real* xc = x.raw() + static_cast<std::size_t>(plane) * h * w;
    Real* yc = y.raw() + static_cast<std::size_t>(plane) * ho * wo;
    for (int i = 0; i < ho; ++i) {
      const Real* xrow = xc + (i / 2) * w;
      Real* yrow = yc + i * wo;
      for (int j = 0; j < wo; ++j) yrow[j] = xrow[j / 2];
    }
  }
  return tape.record(std::move(y), {input}, [input, b, c, h, w](Tape& t, const Tensor& dy) {
    Tensor& dx = t.grad_buffer(input);
    const int ho2 = 2 * h, wo2 = 2 * w;
    for (int plane = 0; plane < b * c; ++plane) {
      Real* dxc = dx.raw() + static_cast<std::size_t>(plane) * h * w;
      const Real* dyc = dy.raw() + static_cast<std::size_t>(plane) * ho2 * wo2;
      for (int i = 0; i < ho2; ++i) {
        Real* dxrow = dxc + (i / 2) * w;
        const Real* dyrow = dyc + i * wo2;
        for (int j = 0; j < wo2; ++j) dxrow[j / 2] += dyrow[j];
      }
    }
  });
}

Var relu(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return tape.record(std::move(y), {input}, [input](Tape& t, const Tensor& dy) {
    const Tensor& xv = t.value(input);
    Tensor& dx = t.grad_buffer(input);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > 0.0) dx[i] += dy[i];
    }
  });
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& z = tape.value(b);
  require(x.shape() == z.shape(), "add: shape mismatch " + x.shape().str() + " vs " + z.shape().str());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + z[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& dy) {
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      Tensor& d = t.grad_buffer(v);
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
  });
}

Var mse_loss(Tape& tape, Var pred, Var target) {
  const Tensor& p = tape.value(pred);
  const Tensor& q = tape.value(target);
  require(p.shape() == q.shape(), "mse_loss: shape mismatch " + p.shape().str() + " vs " + q.shape().str());
  Real acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Real d = p[i] - q[i];
    acc += d * d;
  }
  const Real n = static_cast<Real>(p.size());
  Tensor y(Shape{1}, acc / n);
  return tape.record(std::move(y), {pred, target}, [pred, target, n](Tape& t, const Tensor& dy) {
    const Tensor& pv = t.value(pred);
    const Tensor& qv = t.value(target);
    const Real scale = 2.0 * dy[0] / n;
    if (t.requires_grad(pred)) {
      Tensor& d = t.grad_buffer(pred);
      for (std::size_t i = 0; i < pv.size(); ++i) d[i] += scale * (pv[i] - qv[i]);
    }
    if (t.requires_grad(target)) {
      Tensor& d = t.grad_buffer(target);
      for (std::size_t i = 0; i < pv.size(); ++i) d[i] -= scale * (pv[i] - qv[i]);
    }
  });
}

Var sum(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  Real acc = 0.0;
  for (Real v : x.data()) acc += v;
  return tape.record(Tensor(Shape{1}, acc), {input}, [input](Tape& t, const Tensor& dy) {
    Tensor& dx = t.grad_buffer(input);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[0];
  });
}

Var dot_const(Tape& tape, Var input, const Tensor& weights) {
  const Tensor& x = tape.value(input);
  require(x.shape() == weights.shape(),
          "dot_const: shape mismatch " + x.shape().str() + " vs " + weights.shape().str());
  Real acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * weights[i];
  return tape.record(Tensor(Shape{1}, acc), {input}, [input, weights](Tape& t, const Tensor& dy) {
    Tensor& dx = t.grad_buffer(input);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[0] * weights[i];
  });
}

Var channel_norm(Tape& tape, Var input, Var gamma, Var beta, Real eps) {
  const Tensor& x = tape.value(input);
  const Tensor& g = tape.value(gamma);
  const Tensor& bt = tape.value(beta);
  require_rank4(x, "channel_norm");
  const int b = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  require(g.size() == static_cast<std::size_t>(c) && bt.size() == static_cast<std::size_t>(c),
          "channel_norm: affine parameters must have one entry per channel");
  const Real count = static_cast<Real>(b) * hw;
  std::vector<Real> mean(c, 0.0), inv_std(c, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    Real s = 0.0;
    for (int n = 0; n < b; ++n) {
      const Real* p = x.raw() + (static_cast<std::size_t>(n) * c + ch) * hw;
      for (int i = 0; i < hw; ++i) s += p[i];
    }
    mean[ch] = s / count;
    Real v = 0.0;
    for (int n = 0; n < b; ++n) {
      const Real* p = x.raw() + (static_cast<std::size_t>(n) * c + ch) * hw;
      for (int i = 0; i < hw; ++i) v += (p[i] - mean[ch]) * (p[i] - mean[ch]);
    }
    inv_std[ch] = 1.0 / std::sqrt(v / count + eps);
  }
  Tensor xhat(x.shape());
  Tensor y(x.shape());
  for (int n = 0; n < b; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(n) * c + ch) * hw;
      for (int i = 0; i < hw; ++i) {
        xhat[off + i] = (x[off + i] - mean[ch]) * inv_std[ch];
        y[off + i] = g[ch] * xhat[off + i] + bt[ch];
      }
    }
  }
  return tape.record(std::move(y), {input, gamma, beta},
                     [input, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), b, c, hw,
                      count](Tape& t, const Tensor& dy) {
                       const Tensor& gv = t.value(gamma);
                       for (int ch = 0; ch < c; ++ch) {
                         Real sum_dy = 0.0, sum_dy_xhat = 0.0;
                         for (int n = 0; n < b; ++n) {
                           const std::size_t off = (static_cast<std::size_t>(n) * c + ch) * hw;
                           for (int i = 0; i < hw; ++i) {
                             sum_dy += dy[off + i];
                             sum_dy_xhat += dy[off + i] * xhat[off + i];
                           }
                         }
                         if (t.requires_grad(gamma)) t.grad_buffer(gamma)[ch] += sum_dy_xhat;
                         if (t.requires_grad(beta)) t.grad_buffer(beta)[ch] += sum_dy;
                         if (!t.requires_grad(input)) continue;
                         Tensor& dx = t.grad_buffer(input);
                         const Real k = gv[ch] * inv_std[ch] / count;
                         for (int n = 0; n < b; ++n) {
                           const std::size_t off = (static_cast<std::size_t>(n) * c + ch) * hw;
                           for (int i = 0; i < hw; ++i) {
                             dx[off + i] += k * (count * dy[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat);
                           }
                         }
                       }
                     });
}

}  // namespace ops

}  // namespace usspine
