#include "hvae/tensor.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

#include "hvae/errors.hpp"

namespace hvae {

namespace {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor shape entries must be positive");
    n *= static_cast<std::size_t>(d);
  }
  if (shape.empty() || shape.size() > 2) {
    throw std::invalid_argument("tensor rank must be 1 or 2");
  }
  return n;
}

void check_no_nan(const std::vector<double>& values) {
#ifndef NDEBUG
  for (double v : values) {
    assert(!std::isnan(v) && "NaN produced by a forward op");
  }
#else
  (void)values;
#endif
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto d = std::make_shared<Data>();
  const std::size_t n = shape_size(shape);
  d->shape = std::move(shape);
  d->values.assign(n, 0.0);
  d->requires_grad = requires_grad;
  if (requires_grad) d->grad.assign(n, 0.0);
  return wrap(std::move(d));
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
  auto d = std::make_shared<Data>();
  if (shape_size(shape) != values.size()) {
    throw std::invalid_argument("tensor values length does not match shape");
  }
  d->shape = std::move(shape);
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  if (requires_grad) d->grad.assign(d->values.size(), 0.0);
  return wrap(std::move(d));
}

Tensor Tensor::scalar(double v) { return from_values({1}, {v}); }

Tensor Tensor::param(std::vector<int> shape, std::string name) {
  Tensor t = zeros(std::move(shape), true);
  t.d_->name = std::move(name);
  return t;
}

void Tensor::zero_grad() {
  if (d_->requires_grad) d_->grad.assign(d_->values.size(), 0.0);
}

Tensor Tape::make_output(std::vector<int> shape, std::vector<double> values,
                         bool requires_grad) {
  check_no_nan(values);
  return Tensor::from_values(std::move(shape), std::move(values), requires_grad);
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  int m, k, n;
  bool a_vec = sa.size() == 1, b_vec = sb.size() == 1;
  if (!a_vec && !b_vec) {
    m = sa[0]; k = sa[1]; n = sb[1];
    if (sb[0] != k) throw std::invalid_argument("matmul: inner dimensions differ");
  } else if (!a_vec && b_vec) {
    m = sa[0]; k = sa[1]; n = 1;
    if (sb[0] != k) throw std::invalid_argument("matmul: inner dimensions differ");
  } else if (a_vec && !b_vec) {
    m = 1; k = sa[0]; n = sb[1];
    if (sb[0] != k) throw std::invalid_argument("matmul: inner dimensions differ");
  } else {
    throw std::invalid_argument("matmul: at least one operand must be rank 2");
  }

  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < k; ++j) {
      const double aij = av[static_cast<std::size_t>(i) * k + j];
      if (aij == 0.0) continue;
      for (int l = 0; l < n; ++l) {
        out[static_cast<std::size_t>(i) * n + l] += aij * bv[static_cast<std::size_t>(j) * n + l];
      }
    }
  }

  std::vector<int> out_shape;
  if (!a_vec && !b_vec) out_shape = {m, n};
  else if (!a_vec) out_shape = {m};
  else out_shape = {n};

  const bool rg = a.requires_grad() || b.requires_grad();
  Tensor y = make_output(out_shape, std::move(out), rg);
  if (rg) {
    record([a, b, y, m, k, n]() {
      const auto& g = y.grad();
      if (a.requires_grad()) {
        auto& ga = const_cast<std::vector<double>&>(a.grad());
        const auto& bv = b.values();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < k; ++j) {
            double acc = 0.0;
            for (int l = 0; l < n; ++l)
              acc += g[static_cast<std::size_t>(i) * n + l] *
                     bv[static_cast<std::size_t>(j) * n + l];
            ga[static_cast<std::size_t>(i) * k + j] += acc;
          }
      }
      if (b.requires_grad()) {
        auto& gb = const_cast<std::vector<double>&>(b.grad());
        const auto& av = a.values();
        for (int j = 0; j < k; ++j)
          for (int l = 0; l < n; ++l) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i)
              acc += av[static_cast<std::size_t>(i) * k + j] *
                     g[static_cast<std::size_t>(i) * n + l];
            gb[static_cast<std::size_t>(j) * n + l] += acc;
          }
      }
    });
  }
  return y;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const bool same = sa == sb;
  // broadcast a rank-1 operand across the other's leading (batch) axis
  const bool broadcast_b = !same && sa.size() == 2 && sb.size() == 1 && sa[1] == sb[0];
  const bool broadcast_a = !same && sb.size() == 2 && sa.size() == 1 && sb[1] == sa[0];
  if (!same && !broadcast_a && !broadcast_b) {
    throw std::invalid_argument("add: incompatible shapes");
  }
  const Tensor& big = broadcast_a ? b : a;
  const Tensor& small = broadcast_a ? a : b;

  std::vector<double> out;
  if (same) {
    out = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  } else {
    out = big.values();
    const auto& sv = small.values();
    const std::size_t n = sv.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sv[i % n];
  }

  const bool rg = a.requires_grad() || b.requires_grad();
  Tensor y = make_output(big.shape(), std::move(out), rg);
  if (rg) {
    record([a, b, y, same, broadcast_a]() {
      const auto& g = y.grad();
      auto accumulate = [&](const Tensor& t, bool broadcast) {
        if (!t.requires_grad()) return;
        auto& gt = const_cast<std::vector<double>&>(t.grad());
        if (!broadcast) {
          for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
        } else {
          const std::size_t n = gt.size();
          for (std::size_t i = 0; i < g.size(); ++i) gt[i % n] += g[i];
        }
      };
      if (same) {
        accumulate(a, false);
        accumulate(b, false);
      } else {
        accumulate(a, broadcast_a);
        accumulate(b, !broadcast_a);
      }
    });
  }
  return y;
}

Tensor Tape::negate(const Tensor& x) { return scale(x, -1.0); }

Tensor Tape::multiply(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("multiply: shapes differ");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  const bool rg = a.requires_grad() || b.requires_grad();
  Tensor y = make_output(a.shape(), std::move(out), rg);
  if (rg) {
    record([a, b, y]() {
      const auto& g = y.grad();
      if (a.requires_grad()) {
        auto& ga = const_cast<std::vector<double>&>(a.grad());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.values()[i];
      }
      if (b.requires_grad()) {
        auto& gb = const_cast<std::vector<double>&>(b.grad());
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.values()[i];
      }
    });
  }
  return y;
}

Tensor Tape::scale(const Tensor& x, double c) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x.values()[i];
  const bool rg = x.requires_grad();
  Tensor y = make_output(x.shape(), std::move(out), rg);
  if (rg) {
    record([x, y, c]() {
      auto& gx = const_cast<std::vector<double>&>(x.grad());
      const auto& g = y.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    });
  }
  return y;
}

Tensor Tape::tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.values()[i]);
  const bool rg = x.requires_grad();
  Tensor y = make_output(x.shape(), std::move(out), rg);
  if (rg) {
    record([x, y]() {
      auto& gx = const_cast<std::vector<double>&>(x.grad());
      const auto& g = y.grad();
      const auto& yv = y.values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - yv[i] * yv[i]);
    });
  }
  return y;
}

Tensor Tape::sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(x.values()[i]);
  const bool rg = x.requires_grad();
  Tensor y = make_output(x.shape(), std::move(out), rg);
  if (rg) {
    record([x, y]() {
      auto& gx = const_cast<std::vector<double>&>(x.grad());
      const auto& g = y.grad();
      const auto& yv = y.values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
    });
  }
  return y;
}

Tensor Tape::softplus(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_softplus(x.values()[i]);
  const bool rg = x.requires_grad();
  Tensor y = make_output(x.shape(), std::move(out), rg);
  if (rg) {
    record([x, y]() {
      auto& gx = const_cast<std::vector<double>&>(x.grad());
      const auto& g = y.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        gx[i] += g[i] * stable_sigmoid(x.values()[i]);
    });
  }
  return y;
}

Tensor Tape::exp(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.values()[i]);
  const bool rg = x.requires_grad();
  Tensor y = make_output(x.shape(), std::move(out), rg);
  if (rg) {
    record([x, y]() {
      auto& gx = const_cast<std::vector<double>&>(x.grad());
      const auto& g = y.grad();
      const auto& yv = y.values();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i];
    });
  }
  return y;
}

Tensor Tape::log(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(x.values()[i]);
  const bool rg = x.requires_grad();
  Tensor y = make_output(x.shape(), std::move(out), rg);
  if (rg) {
    record([x, y]() {
      auto& gx = const_cast<std::vector<double>&>(x.grad());
      const auto& g = y.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / x.values()[i];
    });
  }
  return y;
}

Tensor Tape::concat(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  std::vector<int> out_shape;
  if (sa.size() == 1 && sb.size() == 1) {
    out_shape = {sa[0] + sb[0]};
  } else if (sa.size() == 2 && sb.size() == 2 && sa[0] == sb[0]) {
    out_shape = {sa[0], sa[1] + sb[1]};
  } else {
    throw std::invalid_argument("concat: shapes incompatible along last axis");
  }
  const int rows = out_shape.size() == 2 ? out_shape[0] : 1;
  const int ca = sa.size() == 2 ? sa[1] : sa[0];
  const int cb = sb.size() == 2 ? sb[1] : sb[0];

  std::vector<double> out;
  out.reserve(a.size() + b.size());
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < ca; ++j) out.push_back(a.values()[static_cast<std::size_t>(r) * ca + j]);
    for (int j = 0; j < cb; ++j) out.push_back(b.values()[static_cast<std::size_t>(r) * cb + j]);
  }

  const bool rg = a.requires_grad() || b.requires_grad();
  Tensor y = make_output(out_shape, std::move(out), rg);
  if (rg) {
    record([a, b, y, rows, ca, cb]() {
      const auto& g = y.grad();
      const int cw = ca + cb;
      if (a.requires_grad()) {
        auto& ga = const_cast<std::vector<double>&>(a.grad());
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < ca; ++j)
            ga[static_cast<std::size_t>(r) * ca + j] += g[static_cast<std::size_t>(r) * cw + j];
      }
      if (b.requires_grad()) {
        auto& gb = const_cast<std::vector<double>&>(b.grad());
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < cb; ++j)
            gb[static_cast<std::size_t>(r) * cb + j] +=
                g[static_cast<std::size_t>(r) * cw + ca + j];
      }
    });
  }
  return y;
}

Tensor Tape::embedding_lookup(const Tensor& table, std::span<const int> ids) {
  if (table.shape().size() != 2) throw std::invalid_argument("embedding_lookup: table must be rank 2");
  const int v = table.shape()[0];
  const int e = table.shape()[1];
  const int t = static_cast<int>(ids.size());
  std::vector<double> out(static_cast<std::size_t>(t) * e);
  for (int i = 0; i < t; ++i) {
    if (ids[i] < 0 || ids[i] >= v) throw std::invalid_argument("embedding_lookup: id out of range");
    for (int j = 0; j < e; ++j)
      out[static_cast<std::size_t>(i) * e + j] =
          table.values()[static_cast<std::size_t>(ids[i]) * e + j];
  }
  const bool rg = table.requires_grad();
  Tensor y = make_output({t, e}, std::move(out), rg);
  if (rg) {
    std::vector<int> ids_copy(ids.begin(), ids.end());
    record([table, y, ids_copy, e]() {
      auto& gt = const_cast<std::vector<double>&>(table.grad());
      const auto& g = y.grad();
      for (std::size_t i = 0; i < ids_copy.size(); ++i)
        for (int j = 0; j < e; ++j)
          gt[static_cast<std::size_t>(ids_copy[i]) * e + j] += g[i * e + j];
    });
  }
  return y;
}

Tensor Tape::embedding_row(const Tensor& table, int id) {
  if (table.shape().size() != 2) throw std::invalid_argument("embedding_row: table must be rank 2");
  const int v = table.shape()[0];
  const int e = table.shape()[1];
  if (id < 0 || id >= v) throw std::invalid_argument("embedding_row: id out of range");
  std::vector<double> out(table.values().begin() + static_cast<std::size_t>(id) * e,
                          table.values().begin() + static_cast<std::size_t>(id + 1) * e);
  const bool rg = table.requires_grad();
  Tensor y = make_output({e}, std::move(out), rg);
  if (rg) {
    record([table, y, id, e]() {
      auto& gt = const_cast<std::vector<double>&>(table.grad());
      const auto& g = y.grad();
      for (int j = 0; j < e; ++j) gt[static_cast<std::size_t>(id) * e + j] += g[j];
    });
  }
  return y;
}

Tensor Tape::l2_normalize(const Tensor& x) {
  if (x.shape().size() != 1) throw std::invalid_argument("l2_normalize: rank-1 input expected");
  double norm_sq = 0.0;
  for (double v : x.values()) norm_sq += v * v;
  const double norm = std::sqrt(norm_sq);
  if (norm < 1e-12) throw NumericError("l2_normalize: input norm below 1e-12");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] / norm;
  const bool rg = x.requires_grad();
  Tensor y = make_output(x.shape(), std::move(out), rg);
  if (rg) {
    record([x, y, norm]() {
      auto& gx = const_cast<std::vector<double>&>(x.grad());
      const auto& g = y.grad();
      const auto& yv = y.values();
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * yv[i];
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += (g[i] - yv[i] * dot) / norm;
    });
  }
  return y;
}

Tensor Tape::sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const bool rg = x.requires_grad();
  Tensor y = make_output({1}, {acc}, rg);
  if (rg) {
    record([x, y]() {
      auto& gx = const_cast<std::vector<double>&>(x.grad());
      const double g = y.grad()[0];
      for (double& gi : gx) gi += g;
    });
  }
  return y;
}

Tensor Tape::mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double inv_n = 1.0 / static_cast<double>(x.size());
  const bool rg = x.requires_grad();
  Tensor y = make_output({1}, {acc * inv_n}, rg);
  if (rg) {
    record([x, y, inv_n]() {
      auto& gx = const_cast<std::vector<double>&>(x.grad());
      const double g = y.grad()[0] * inv_n;
      for (double& gi : gx) gi += g;
    });
  }
  return y;
}

Tensor Tape::log_softmax(const Tensor& x) {
  const int rows = x.shape().size() == 2 ? x.shape()[0] : 1;
  const int cols = x.shape().size() == 2 ? x.shape()[1] : x.shape()[0];
  std::vector<double> out(x.size());
  for (int r = 0; r < rows; ++r) {
    const double* row = x.values().data() + static_cast<std::size_t>(r) * cols;
    double m = row[0];
    for (int j = 1; j < cols; ++j) m = std::max(m, row[j]);
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += std::exp(row[j] - m);
    const double lse = m + std::log(acc);
    for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(r) * cols + j] = row[j] - lse;
  }
  const bool rg = x.requires_grad();
  Tensor y = make_output(x.shape(), std::move(out), rg);
  if (rg) {
    record([x, y, rows, cols]() {
      auto& gx = const_cast<std::vector<double>&>(x.grad());
      const auto& g = y.grad();
      const auto& yv = y.values();
      for (int r = 0; r < rows; ++r) {
        double gsum = 0.0;
        for (int j = 0; j < cols; ++j) gsum += g[static_cast<std::size_t>(r) * cols + j];
        for (int j = 0; j < cols; ++j) {
          const std::size_t i = static_cast<std::size_t>(r) * cols + j;
          gx[i] += g[i] - std::exp(yv[i]) * gsum;
        }
      }
    });
  }
  return y;
}

Tensor Tape::masked_nll(const Tensor& logits, std::span<const int> targets,
                        std::span<const double> mask) {
  const int rows = logits.shape().size() == 2 ? logits.shape()[0] : 1;
  const int cols = logits.shape().size() == 2 ? logits.shape()[1] : logits.shape()[0];
  if (static_cast<int>(targets.size()) != rows) {
    throw std::invalid_argument("masked_nll: one target per row expected");
  }
  if (!mask.empty() && static_cast<int>(mask.size()) != rows) {
    throw std::invalid_argument("masked_nll: mask length must match rows");
  }
  // row-wise log-sum-exp, cached for the backward pass
  std::vector<double> lse(rows);
  double loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (targets[r] < 0 || targets[r] >= cols) {
      throw std::invalid_argument("masked_nll: target out of range");
    }
    const double* row = logits.values().data() + static_cast<std::size_t>(r) * cols;
    double m = row[0];
    for (int j = 1; j < cols; ++j) m = std::max(m, row[j]);
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += std::exp(row[j] - m);
    lse[r] = m + std::log(acc);
    const double w = mask.empty() ? 1.0 : mask[r];
    loss += w * (lse[r] - row[targets[r]]);
  }
  const bool rg = logits.requires_grad();
  Tensor y = make_output({1}, {loss}, rg);
  if (rg) {
    std::vector<int> tgt(targets.begin(), targets.end());
    std::vector<double> msk(mask.begin(), mask.end());
    record([logits, y, tgt, msk, rows, cols, lse]() {
      auto& gx = const_cast<std::vector<double>&>(logits.grad());
      const double g = y.grad()[0];
      for (int r = 0; r < rows; ++r) {
        const double w = msk.empty() ? 1.0 : msk[r];
        if (w == 0.0) continue;
        const double* row = logits.values().data() + static_cast<std::size_t>(r) * cols;
        for (int j = 0; j < cols; ++j) {
          double p = std::exp(row[j] - lse[r]);
          if (j == tgt[r]) p -= 1.0;
          gx[static_cast<std::size_t>(r) * cols + j] += g * w * p;
        }
      }
    });
  }
  return y;
}

Tensor Tape::scalar_chain(const Tensor& x, double value, double derivative) {
  if (!x.is_scalar()) throw std::invalid_argument("scalar_chain: scalar input expected");
  const bool rg = x.requires_grad();
  Tensor y = make_output({1}, {value}, rg);
  if (rg) {
    record([x, y, derivative]() {
      const_cast<std::vector<double>&>(x.grad())[0] += derivative * y.grad()[0];
    });
  }
  return y;
}

void Tape::backward(const Tensor& scalar_loss) {
  if (!scalar_loss.defined() || !scalar_loss.is_scalar()) {
    throw std::invalid_argument("backward: loss must be a 1-element tensor");
  }
  if (!scalar_loss.requires_grad()) {
    throw std::invalid_argument("backward: loss is disconnected from any gradient");
  }
  const_cast<std::vector<double>&>(scalar_loss.grad())[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

void sgd_step(std::span<Tensor> params, double learning_rate, double clip_norm) {
  if (!(learning_rate > 0.0) || !(clip_norm > 0.0)) {
    throw std::invalid_argument("sgd_step: learning rate and clip norm must be positive");
  }
  double norm_sq = 0.0;
  for (const Tensor& p : params) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("sgd_step: non-finite gradient in parameter '" + p.name() + "'");
      }
      norm_sq += g * g;
    }
  }
  const double norm = std::sqrt(norm_sq);
  const double scale = norm > clip_norm ? clip_norm / norm : 1.0;
  for (Tensor& p : params) {
    auto& v = p.values_mutable();
    const auto& g = p.grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= learning_rate * scale * g[i];
    p.zero_grad();
  }
}

void init_uniform_fan_in(Tensor& w, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : w.values_mutable()) v = (2.0 * rng.uniform() - 1.0) * bound;
}

}  // namespace hvae
