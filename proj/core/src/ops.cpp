// SPDX-License-Identifier: Apache-2.0
#include "stvl/ops.hpp"

#include <Eigen/Core>
#include <cmath>

#include "stvl/errors.hpp"

namespace stvl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

// Gradient buffer of parent i, or nullptr if it does not need one.
double* grad_of(detail::Node& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

void require_same_numel(const Tensor& a, const Tensor& b, const char* op) {
  if (a.numel() != b.numel())
    throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Shape with_cols(const Shape& s, Index cols) {
  Shape out = s.empty() ? Shape{1} : s;
  out.back() = cols;
  return out;
}

template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& x : out) x = f(x);
  return make_result(a.shape(), std::move(out), {a}, [df](detail::Node& self) {
    double* ga = grad_of(self, 0);
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (b.ndim() != 2 || a.cols() != b.dim(0))
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const Index n = a.rows(), k = a.cols(), m = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n * m));
  MapM(out.data(), n, m).noalias() = MapC(a.data().data(), n, k) * MapC(b.data().data(), k, m);
  MacCounter::add(static_cast<std::uint64_t>(n * k * m));
  return make_result(with_cols(a.shape(), m), std::move(out), {a, b}, [n, k, m](detail::Node& self) {
    MapC g(self.grad.data(), n, m);
    if (double* ga = grad_of(self, 0))
      MapM(ga, n, k).noalias() += g * MapC(self.parents[1]->value.data(), k, m).transpose();
    if (double* gb = grad_of(self, 1))
      MapM(gb, k, m).noalias() += MapC(self.parents[0]->value.data(), n, k).transpose() * g;
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  return b.defined() ? add_row(y, b) : y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_numel(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (double* g = grad_of(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_numel(a, b, "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_numel(a, b, "mul");
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  MacCounter::add(out.size());
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (double* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& x : out) x *= s;
  return make_result(a.shape(), std::move(out), {a}, [s](detail::Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& v) {
  const Index n = a.rows(), c = a.cols();
  if (v.numel() != c) throw ShapeError("add_row: " + shape_str(a.shape()) + " + " + shape_str(v.shape()));
  std::vector<double> out(a.data().begin(), a.data().end());
  auto vd = v.data();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < c; ++j) out[i * c + j] += vd[j];
  return make_result(a.shape(), std::move(out), {a, v}, [n, c](detail::Node& self) {
    if (double* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = grad_of(self, 1))
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
  });
}

Tensor mul_row(const Tensor& a, const Tensor& v) {
  const Index n = a.rows(), c = a.cols();
  if (v.numel() != c) throw ShapeError("mul_row: " + shape_str(a.shape()) + " * " + shape_str(v.shape()));
  std::vector<double> out(a.data().begin(), a.data().end());
  auto vd = v.data();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < c; ++j) out[i * c + j] *= vd[j];
  MacCounter::add(static_cast<std::uint64_t>(n * c));
  return make_result(a.shape(), std::move(out), {a, v}, [n, c](detail::Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& vv = self.parents[1]->value;
    if (double* g = grad_of(self, 0))
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j] * vv[j];
    if (double* g = grad_of(self, 1))
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < c; ++j) g[j] += self.grad[i * c + j] * av[i * c + j];
  });
}

Tensor gelu(const Tensor& a) {
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))); },
      [](double x, double) {
        const double u = kGeluC * (x + 0.044715 * x * x * x);
        const double t = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Index n = x.rows(), c = x.cols();
  if (gamma.numel() != c || beta.numel() != c) throw ShapeError("layer_norm: parameter width");
  std::vector<double> out(static_cast<std::size_t>(n * c));
  std::vector<double> xhat(out.size()), inv_std(static_cast<std::size_t>(n));
  auto xd = x.data(), gd = gamma.data(), bd = beta.data();
  for (Index i = 0; i < n; ++i) {
    double mu = 0.0;
    for (Index j = 0; j < c; ++j) mu += xd[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (Index j = 0; j < c; ++j) var += (xd[i * c + j] - mu) * (xd[i * c + j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (Index j = 0; j < c; ++j) {
      xhat[i * c + j] = (xd[i * c + j] - mu) * is;
      out[i * c + j] = xhat[i * c + j] * gd[j] + bd[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [n, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
                       const auto& gv = self.parents[1]->value;
                       double* gx = grad_of(self, 0);
                       double* gg = grad_of(self, 1);
                       double* gb = grad_of(self, 2);
                       for (Index i = 0; i < n; ++i) {
                         const double* dy = self.grad.data() + i * c;
                         const double* xh = xhat.data() + i * c;
                         if (gg)
                           for (Index j = 0; j < c; ++j) gg[j] += dy[j] * xh[j];
                         if (gb)
                           for (Index j = 0; j < c; ++j) gb[j] += dy[j];
                         if (gx) {
                           double m1 = 0.0, m2 = 0.0;
                           for (Index j = 0; j < c; ++j) {
                             const double dxh = dy[j] * gv[j];
                             m1 += dxh;
                             m2 += dxh * xh[j];
                           }
                           m1 /= static_cast<double>(c);
                           m2 /= static_cast<double>(c);
                           for (Index j = 0; j < c; ++j)
                             gx[i * c + j] += inv_std[i] * (dy[j] * gv[j] - m1 - xh[j] * m2);
                         }
                       }
                     });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return make_result({}, {s}, {a}, [](detail::Node& self) {
    double* g = grad_of(self, 0);
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor gather_rows(const Tensor& a, std::span<const Index> index) {
  const Index c = a.cols(), n = a.rows();
  std::vector<double> out(index.size() * static_cast<std::size_t>(c), 0.0);
  auto ad = a.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Index r = index[i];
    if (r < -1 || r >= n) throw ShapeError("gather_rows: index " + std::to_string(r) + " out of range");
    if (r >= 0) std::copy_n(ad.begin() + r * c, c, out.begin() + static_cast<Index>(i) * c);
  }
  std::vector<Index> idx(index.begin(), index.end());
  return make_result({static_cast<Index>(index.size()), c}, std::move(out), {a},
                     [c, idx = std::move(idx)](detail::Node& self) {
                       double* g = grad_of(self, 0);
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         if (idx[i] < 0) continue;
                         const double* src = self.grad.data() + static_cast<Index>(i) * c;
                         double* dst = g + idx[i] * c;
                         for (Index j = 0; j < c; ++j) dst[j] += src[j];
                       }
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Index c = parts[0].cols();
  Index total = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeError("concat_rows: column mismatch");
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total * c));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result({total, c}, std::move(out), std::move(inputs), [](detail::Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      const std::size_t n = self.parents[p]->value.size();
      if (double* g = grad_of(self, p))
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      off += n;
    }
  });
}

Tensor mask_rows(const Tensor& a, std::span<const unsigned char> keep) {
  const Index n = a.rows(), c = a.cols();
  if (static_cast<Index>(keep.size()) != n) throw ShapeError("mask_rows: mask length");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (Index i = 0; i < n; ++i)
    if (!keep[i]) std::fill_n(out.begin() + i * c, c, 0.0);
  std::vector<unsigned char> k(keep.begin(), keep.end());
  return make_result(a.shape(), std::move(out), {a}, [c, k = std::move(k)](detail::Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t i = 0; i < k.size(); ++i)
      if (k[i])
        for (Index j = 0; j < c; ++j) g[static_cast<Index>(i) * c + j] += self.grad[static_cast<Index>(i) * c + j];
  });
}

Tensor temporal_conv3(const Tensor& x, const Tensor& w) {
  if (x.ndim() != 4 || w.ndim() != 3 || w.dim(0) != 3 || w.dim(1) != x.dim(3))
    throw ShapeError("temporal_conv3: " + shape_str(x.shape()) + " with kernel " + shape_str(w.shape()));
  const Index T = x.dim(0), S = x.dim(1) * x.dim(2), ci = w.dim(1), co = w.dim(2);
  std::vector<double> out(static_cast<std::size_t>(T * S * co), 0.0);
  // out[t] += x[t + k - 1] W[k]
  for (Index k = 0; k < 3; ++k) {
    const Index t0 = std::max<Index>(0, 1 - k), t1 = std::min<Index>(T, T + 1 - k);
    if (t1 <= t0) continue;
    const Index rows = (t1 - t0) * S;
    MapM(out.data() + t0 * S * co, rows, co).noalias() +=
        MapC(x.data().data() + (t0 + k - 1) * S * ci, rows, ci) * MapC(w.data().data() + k * ci * co, ci, co);
  }
  MacCounter::add(static_cast<std::uint64_t>(3 * T * S * ci * co));
  Shape shape = x.shape();
  shape.back() = co;
  return make_result(std::move(shape), std::move(out), {x, w}, [T, S, ci, co](detail::Node& self) {
    double* gx = grad_of(self, 0);
    double* gw = grad_of(self, 1);
    const auto& xv = self.parents[0]->value;
    const auto& wv = self.parents[1]->value;
    for (Index k = 0; k < 3; ++k) {
      const Index t0 = std::max<Index>(0, 1 - k), t1 = std::min<Index>(T, T + 1 - k);
      if (t1 <= t0) continue;
      const Index rows = (t1 - t0) * S;
      MapC g(self.grad.data() + t0 * S * co, rows, co);
      if (gx) MapM(gx + (t0 + k - 1) * S * ci, rows, ci).noalias() += g * MapC(wv.data() + k * ci * co, ci, co).transpose();
      if (gw) MapM(gw + k * ci * co, ci, co).noalias() += MapC(xv.data() + (t0 + k - 1) * S * ci, rows, ci).transpose() * g;
    }
  });
}

Tensor depthwise_conv3d(const Tensor& x, const Tensor& w) {
  if (x.ndim() != 4 || w.ndim() != 2 || w.dim(0) != 27 || w.dim(1) != x.dim(3))
    throw ShapeError("depthwise_conv3d: " + shape_str(x.shape()) + " with kernel " + shape_str(w.shape()));
  const Index T = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  auto xd = x.data(), wd = w.data();
  std::vector<double> out(xd.size(), 0.0);
  auto for_each_tap = [T, H, W, C](auto&& body) {
    for (Index t = 0; t < T; ++t)
      for (Index y = 0; y < H; ++y)
        for (Index xx = 0; xx < W; ++xx) {
          const Index o = ((t * H + y) * W + xx) * C;
          Index tap = 0;
          for (Index dt = -1; dt <= 1; ++dt)
            for (Index dy = -1; dy <= 1; ++dy)
              for (Index dx = -1; dx <= 1; ++dx, ++tap) {
                const Index ts = t + dt, ys = y + dy, xs = xx + dx;
                if (ts < 0 || ts >= T || ys < 0 || ys >= H || xs < 0 || xs >= W) continue;
                body(o, ((ts * H + ys) * W + xs) * C, tap * C);
              }
        }
  };
  for_each_tap([&](Index o, Index s, Index wo) {
    for (Index c = 0; c < C; ++c) out[o + c] += wd[wo + c] * xd[s + c];
  });
  MacCounter::add(static_cast<std::uint64_t>(27 * T * H * W * C));
  return make_result(x.shape(), std::move(out), {x, w}, [for_each_tap, C](detail::Node& self) {
    double* gx = grad_of(self, 0);
    double* gw = grad_of(self, 1);
    const auto& xv = self.parents[0]->value;
    const auto& wv = self.parents[1]->value;
    const double* g = self.grad.data();
    for_each_tap([&](Index o, Index s, Index wo) {
      for (Index c = 0; c < C; ++c) {
        if (gx) gx[s + c] += wv[wo + c] * g[o + c];
        if (gw) gw[wo + c] += xv[s + c] * g[o + c];
      }
    });
  });
}

void AttentionPattern::add_row(Index q, std::span<const Index> key_rows) {
  query_row.push_back(q);
  keys.insert(keys.end(), key_rows.begin(), key_rows.end());
  offsets.push_back(static_cast<Index>(keys.size()));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionPattern& pattern,
                 int n_heads, double scale) {
  const Index dq = q.cols(), dv = v.cols(), nk = k.rows();
  if (k.cols() != dq || v.rows() != nk)
    throw ShapeError("attention: q " + shape_str(q.shape()) + " k " + shape_str(k.shape()) + " v " +
                     shape_str(v.shape()));
  if (n_heads < 1 || dq % n_heads != 0 || dv % n_heads != 0) throw ShapeError("attention: head split");
  const Index hq = dq / n_heads, hv = dv / n_heads, rows = pattern.rows();
  for (Index r : pattern.query_row)
    if (r < 0 || r >= q.rows()) throw ShapeError("attention: query row out of range");
  for (Index key : pattern.keys)
    if (key < 0 || key >= nk) throw ShapeError("attention: key row out of range");

  auto qd = q.data(), kd = k.data(), vd = v.data();
  std::vector<double> out(static_cast<std::size_t>(rows * dv), 0.0);
  // Softmax weights, laid out [pair][head].
  std::vector<double> probs(pattern.keys.size() * static_cast<std::size_t>(n_heads));
  for (Index i = 0; i < rows; ++i) {
    const auto ks = pattern.keys_of(i);
    if (ks.empty()) continue;
    const Index base = pattern.offsets[i];
    const double* qi = qd.data() + pattern.query_row[i] * dq;
    for (int h = 0; h < n_heads; ++h) {
      double mx = -INFINITY;
      for (std::size_t j = 0; j < ks.size(); ++j) {
        const double* kj = kd.data() + ks[j] * dq + h * hq;
        double s = 0.0;
        for (Index c = 0; c < hq; ++c) s += qi[h * hq + c] * kj[c];
        s *= scale;
        probs[(base + j) * n_heads + h] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < ks.size(); ++j) {
        double& p = probs[(base + j) * n_heads + h];
        p = std::exp(p - mx);
        z += p;
      }
      double* oi = out.data() + i * dv + h * hv;
      for (std::size_t j = 0; j < ks.size(); ++j) {
        double& p = probs[(base + j) * n_heads + h];
        p /= z;
        const double* vj = vd.data() + ks[j] * dv + h * hv;
        for (Index c = 0; c < hv; ++c) oi[c] += p * vj[c];
      }
    }
  }
  MacCounter::add(static_cast<std::uint64_t>(pattern.keys.size()) * static_cast<std::uint64_t>(dq + dv));

  return make_result({rows, dv}, std::move(out), {q, k, v},
                     [pattern, probs = std::move(probs), n_heads, hq, hv, dq, dv, scale](detail::Node& self) {
                       const auto& qv = self.parents[0]->value;
                       const auto& kv = self.parents[1]->value;
                       const auto& vv = self.parents[2]->value;
                       double* gq = grad_of(self, 0);
                       double* gk = grad_of(self, 1);
                       double* gv = grad_of(self, 2);
                       std::vector<double> dw;
                       for (Index i = 0; i < pattern.rows(); ++i) {
                         const auto ks = pattern.keys_of(i);
                         if (ks.empty()) continue;
                         const Index base = pattern.offsets[i];
                         const Index qr = pattern.query_row[i];
                         dw.assign(ks.size(), 0.0);
                         for (int h = 0; h < n_heads; ++h) {
                           const double* go = self.grad.data() + i * dv + h * hv;
                           double dot = 0.0;
                           for (std::size_t j = 0; j < ks.size(); ++j) {
                             const double p = probs[(base + j) * n_heads + h];
                             const double* vj = vv.data() + ks[j] * dv + h * hv;
                             double s = 0.0;
                             for (Index c = 0; c < hv; ++c) s += go[c] * vj[c];
                             dw[j] = s;
                             dot += p * s;
                             if (gv) {
                               double* gvj = gv + ks[j] * dv + h * hv;
                               for (Index c = 0; c < hv; ++c) gvj[c] += p * go[c];
                             }
                           }
                           for (std::size_t j = 0; j < ks.size(); ++j) {
                             const double ds = probs[(base + j) * n_heads + h] * (dw[j] - dot) * scale;
                             if (ds == 0.0) continue;
                             const double* kj = kv.data() + ks[j] * dq + h * hq;
                             const double* qi = qv.data() + qr * dq + h * hq;
                             if (gq)
                               for (Index c = 0; c < hq; ++c) gq[qr * dq + h * hq + c] += ds * kj[c];
                             if (gk)
                               for (Index c = 0; c < hq; ++c) gk[ks[j] * dq + h * hq + c] += ds * qi[c];
                           }
                         }
                       }
                     });
}

}  // namespace stvl
