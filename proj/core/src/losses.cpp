// SPDX-License-Identifier: Apache-2.0
#include "stvl/losses.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "stvl/errors.hpp"

namespace stvl {

namespace {

std::vector<Index> resolve_rows(std::span<const Index> rows, Index n) {
  std::vector<Index> out(rows.begin(), rows.end());
  if (out.empty()) {
    out.resize(static_cast<std::size_t>(n));
    std::iota(out.begin(), out.end(), Index{0});
  }
  for (Index r : out)
    if (r < 0 || r >= n) throw ShapeError("loss: row index out of range");
  return out;
}

double* grad_of(detail::Node& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

}  // namespace

Tensor distill_loss(const Tensor& pred, const Tensor& teacher, std::span<const Index> rows, bool strict, double eps) {
  if (pred.shape() != teacher.shape() || pred.numel() == 0)
    throw ShapeError("distill_loss: " + shape_str(pred.shape()) + " vs " + shape_str(teacher.shape()));
  const Index c = pred.cols();
  auto sel = resolve_rows(rows, pred.rows());
  if (sel.empty()) throw ShapeError("distill_loss: no rows selected");
  auto a = pred.data(), b = teacher.data();
  std::vector<double> na(sel.size()), nb(sel.size()), dots(sel.size());
  double total = 0.0;
  for (std::size_t k = 0; k < sel.size(); ++k) {
    const double* ar = a.data() + sel[k] * c;
    const double* br = b.data() + sel[k] * c;
    double aa = 0.0, bb = 0.0, ab = 0.0;
    for (Index j = 0; j < c; ++j) {
      aa += ar[j] * ar[j];
      bb += br[j] * br[j];
      ab += ar[j] * br[j];
    }
    na[k] = std::sqrt(aa);
    nb[k] = std::sqrt(bb);
    dots[k] = ab;
    if (strict && (na[k] == 0.0 || nb[k] == 0.0))
      throw std::domain_error("distill_loss: zero-norm row " + std::to_string(sel[k]));
    total += ab / ((na[k] + eps) * (nb[k] + eps));
  }
  const double m = static_cast<double>(sel.size());
  return make_result({}, {-total / m}, {pred, teacher},
                     [sel = std::move(sel), na = std::move(na), nb = std::move(nb), dots = std::move(dots), c, eps,
                      m](detail::Node& self) {
                       const double g = -self.grad[0] / m;
                       const auto& av = self.parents[0]->value;
                       const auto& bv = self.parents[1]->value;
                       double* ga = grad_of(self, 0);
                       double* gb = grad_of(self, 1);
                       for (std::size_t k = 0; k < sel.size(); ++k) {
                         const double da = na[k] + eps, db = nb[k] + eps;
                         const double base = g / (da * db);
                         // d|x|/dx = x/|x|, taken as 0 at x = 0.
                         const double ka = na[k] > 0.0 ? g * dots[k] / (da * da * db * na[k]) : 0.0;
                         const double kb = nb[k] > 0.0 ? g * dots[k] / (da * db * db * nb[k]) : 0.0;
                         const Index off = sel[k] * c;
                         for (Index j = 0; j < c; ++j) {
                           if (ga) ga[off + j] += base * bv[off + j] - ka * av[off + j];
                           if (gb) gb[off + j] += base * av[off + j] - kb * bv[off + j];
                         }
                       }
                     });
}

Tensor distill_loss_mse(const Tensor& pred, const Tensor& teacher, std::span<const Index> rows) {
  if (pred.shape() != teacher.shape() || pred.numel() == 0)
    throw ShapeError("distill_loss_mse: " + shape_str(pred.shape()) + " vs " + shape_str(teacher.shape()));
  const Index c = pred.cols();
  auto sel = resolve_rows(rows, pred.rows());
  auto a = pred.data(), b = teacher.data();
  double total = 0.0;
  for (Index r : sel)
    for (Index j = 0; j < c; ++j) {
      const double e = a[r * c + j] - b[r * c + j];
      total += e * e;
    }
  const double n = static_cast<double>(sel.size()) * static_cast<double>(c);
  return make_result({}, {total / n}, {pred, teacher}, [sel = std::move(sel), c, n](detail::Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    double* ga = grad_of(self, 0);
    double* gb = grad_of(self, 1);
    const double g = 2.0 * self.grad[0] / n;
    for (Index r : sel)
      for (Index j = 0; j < c; ++j) {
        const double e = g * (av[r * c + j] - bv[r * c + j]);
        if (ga) ga[r * c + j] += e;
        if (gb) gb[r * c + j] -= e;
      }
  });
}

Tensor text_loss(const Tensor& logits, std::span<const int> targets, std::span<const double> weights) {
  const Index n = logits.rows(), V = logits.cols();
  if (n < 1 || static_cast<Index>(targets.size()) != n) throw ShapeError("text_loss: need one target per logits row");
  if (!weights.empty() && static_cast<Index>(weights.size()) != n) throw ShapeError("text_loss: weight count");
  for (int t : targets)
    if (t < 0 || t >= V) throw std::out_of_range("text_loss: target id " + std::to_string(t) + " outside vocab of " + std::to_string(V));
  auto x = logits.data();
  std::vector<double> probs(static_cast<std::size_t>(n * V));
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  if (!weights.empty()) std::copy(weights.begin(), weights.end(), w.begin());
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(wsum > 0.0)) throw std::invalid_argument("text_loss: weights sum to zero");
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double* row = x.data() + i * V;
    double mx = row[0];
    for (Index j = 1; j < V; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (Index j = 0; j < V; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (Index j = 0; j < V; ++j) probs[i * V + j] = std::exp(row[j] - lse);
    total += w[i] * (lse - row[targets[i]]);
  }
  std::vector<int> tg(targets.begin(), targets.end());
  return make_result({}, {total / wsum}, {logits},
                     [probs = std::move(probs), w = std::move(w), tg = std::move(tg), n, V, wsum](detail::Node& self) {
                       double* g = grad_of(self, 0);
                       const double s = self.grad[0] / wsum;
                       for (Index i = 0; i < n; ++i) {
                         if (w[i] == 0.0) continue;
                         for (Index j = 0; j < V; ++j) g[i * V + j] += s * w[i] * probs[i * V + j];
                         g[i * V + tg[i]] -= s * w[i];
                       }
                     });
}

}  // namespace stvl
