#pragma once

// Differentiable ops recorded on a Tape. Every op validates shapes and
// rejects non-finite results.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "topologic/nn/tape.hpp"

namespace topologic::nn {

namespace detail {

inline void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value())) {
    throw InvalidInput(std::string(op) + " shape mismatch: " + a.value().shape() + " vs " + b.value().shape());
  }
}

inline void require_scalar(const char* op, const Var& s) {
  if (s.rows() != 1 || s.cols() != 1) throw InvalidInput(std::string(op) + " needs a 1x1 scalar, got " + s.value().shape());
}

template <class F>
Matrix map(const Matrix& a, F&& f) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = f(a[k]);
  return out;
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw InvalidInput("matmul shape mismatch: " + a.value().shape() + " * " + b.value().shape());
  return a.tape().record(OpKind::matmul, matmul(a.value(), b.value()), {a, b}, [](Tape::Context& c) {
    if (Matrix* ga = c.in_grad(0)) *ga += matmul_nt(c.grad(), c.in(1));
    if (Matrix* gb = c.in_grad(1)) *gb += matmul_tn(c.in(0), c.grad());
  });
}

inline Var transpose(const Var& a) {
  return a.tape().record(OpKind::transpose, transpose(a.value()), {a}, [](Tape::Context& c) {
    if (Matrix* ga = c.in_grad(0)) *ga += transpose(c.grad());
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape("add", a, b);
  Matrix out = a.value();
  out += b.value();
  return a.tape().record(OpKind::add, std::move(out), {a, b}, [](Tape::Context& c) {
    if (Matrix* ga = c.in_grad(0)) *ga += c.grad();
    if (Matrix* gb = c.in_grad(1)) *gb += c.grad();
  });
}

/// x + b with the 1 x cols row `b` broadcast over rows.
inline Var add_bias(const Var& x, const Var& b) {
  if (b.rows() != 1 || b.cols() != x.cols()) {
    throw InvalidInput("add_bias shape mismatch: " + x.value().shape() + " + " + b.value().shape());
  }
  Matrix out = x.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b.value()(0, j);
  return x.tape().record(OpKind::add_bias, std::move(out), {x, b}, [](Tape::Context& c) {
    if (Matrix* gx = c.in_grad(0)) *gx += c.grad();
    if (Matrix* gb = c.in_grad(1)) {
      for (std::size_t i = 0; i < c.grad().rows(); ++i)
        for (std::size_t j = 0; j < c.grad().cols(); ++j) (*gb)(0, j) += c.grad()(i, j);
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape("sub", a, b);
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= b.value()[k];
  return a.tape().record(OpKind::sub, std::move(out), {a, b}, [](Tape::Context& c) {
    if (Matrix* ga = c.in_grad(0)) *ga += c.grad();
    if (Matrix* gb = c.in_grad(1))
      for (std::size_t k = 0; k < gb->size(); ++k) (*gb)[k] -= c.grad()[k];
  });
}

/// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape("mul", a, b);
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b.value()[k];
  return a.tape().record(OpKind::mul, std::move(out), {a, b}, [](Tape::Context& c) {
    if (Matrix* ga = c.in_grad(0))
      for (std::size_t k = 0; k < ga->size(); ++k) (*ga)[k] += c.grad()[k] * c.in(1)[k];
    if (Matrix* gb = c.in_grad(1))
      for (std::size_t k = 0; k < gb->size(); ++k) (*gb)[k] += c.grad()[k] * c.in(0)[k];
  });
}

inline Var scale(const Var& x, double s) {
  return x.tape().record(OpKind::scale, detail::map(x.value(), [s](double v) { return v * s; }), {x},
                         [s](Tape::Context& c) {
                           if (Matrix* gx = c.in_grad(0))
                             for (std::size_t k = 0; k < gx->size(); ++k) (*gx)[k] += c.grad()[k] * s;
                         });
}

/// x * s for a 1x1 variable s.
inline Var scale_by(const Var& x, const Var& s) {
  detail::require_scalar("scale_by", s);
  const double sv = s.value()[0];
  return x.tape().record(OpKind::scale_by, detail::map(x.value(), [sv](double v) { return v * sv; }), {x, s},
                         [](Tape::Context& c) {
                           const double sv = c.in(1)[0];
                           if (Matrix* gx = c.in_grad(0))
                             for (std::size_t k = 0; k < gx->size(); ++k) (*gx)[k] += c.grad()[k] * sv;
                           if (Matrix* gs = c.in_grad(1)) {
                             double acc = 0.0;
                             for (std::size_t k = 0; k < c.grad().size(); ++k) acc += c.grad()[k] * c.in(0)[k];
                             (*gs)[0] += acc;
                           }
                         });
}

inline Var exp(const Var& x) {
  return x.tape().record(OpKind::exp, detail::map(x.value(), [](double v) { return std::exp(v); }), {x},
                         [](Tape::Context& c) {
                           if (Matrix* gx = c.in_grad(0))
                             for (std::size_t k = 0; k < gx->size(); ++k) (*gx)[k] += c.grad()[k] * c.out()[k];
                         });
}

inline Var log(const Var& x) {
  return x.tape().record(OpKind::log, detail::map(x.value(), [](double v) { return std::log(v); }), {x},
                         [](Tape::Context& c) {
                           if (Matrix* gx = c.in_grad(0))
                             for (std::size_t k = 0; k < gx->size(); ++k) (*gx)[k] += c.grad()[k] / c.in(0)[k];
                         });
}

/// Elementwise x^e for a constant exponent. Inputs must be non-negative
/// unless e is an integer.
inline Var power(const Var& x, double e) {
  return x.tape().record(OpKind::power, detail::map(x.value(), [e](double v) { return std::pow(v, e); }), {x},
                         [e](Tape::Context& c) {
                           if (Matrix* gx = c.in_grad(0)) {
                             for (std::size_t k = 0; k < gx->size(); ++k) {
                               const double d = e * std::pow(c.in(0)[k], e - 1.0);
                               if (!std::isfinite(d)) throw NumericalError("power: derivative undefined at entry " + std::to_string(k));
                               (*gx)[k] += c.grad()[k] * d;
                             }
                           }
                         });
}

/// Elementwise x^e for a learnable 1x1 exponent e; x must be >= 0.
/// d(x^e)/de uses the limit 0 at x = 0.
inline Var power(const Var& x, const Var& e) {
  detail::require_scalar("power", e);
  const double ev = e.value()[0];
  for (double v : x.value().values()) {
    if (v < 0.0) throw NumericalError("power with variable exponent needs non-negative base");
  }
  return x.tape().record(
      OpKind::power, detail::map(x.value(), [ev](double v) { return std::pow(v, ev); }), {x, e}, [](Tape::Context& c) {
        const double ev = c.in(1)[0];
        if (Matrix* gx = c.in_grad(0)) {
          for (std::size_t k = 0; k < gx->size(); ++k) {
            const double d = ev * std::pow(c.in(0)[k], ev - 1.0);
            if (!std::isfinite(d)) throw NumericalError("power: derivative undefined at entry " + std::to_string(k));
            (*gx)[k] += c.grad()[k] * d;
          }
        }
        if (Matrix* ge = c.in_grad(1)) {
          double acc = 0.0;
          for (std::size_t k = 0; k < c.grad().size(); ++k) {
            const double xv = c.in(0)[k];
            if (xv > 0.0) acc += c.grad()[k] * c.out()[k] * std::log(xv);
          }
          (*ge)[0] += acc;
        }
      });
}

inline double sigmoid(double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

inline Var sigmoid(const Var& x) {
  return x.tape().record(OpKind::sigmoid, detail::map(x.value(), [](double v) { return sigmoid(v); }), {x},
                         [](Tape::Context& c) {
                           if (Matrix* gx = c.in_grad(0))
                             for (std::size_t k = 0; k < gx->size(); ++k) {
                               const double s = c.out()[k];
                               (*gx)[k] += c.grad()[k] * s * (1.0 - s);
                             }
                         });
}

inline Var relu(const Var& x) {
  return x.tape().record(OpKind::relu, detail::map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {x},
                         [](Tape::Context& c) {
                           if (Matrix* gx = c.in_grad(0))
                             for (std::size_t k = 0; k < gx->size(); ++k)
                               if (c.in(0)[k] > 0.0) (*gx)[k] += c.grad()[k];
                         });
}

inline Var abs(const Var& x) {
  return x.tape().record(OpKind::abs, detail::map(x.value(), [](double v) { return std::abs(v); }), {x},
                         [](Tape::Context& c) {
                           if (Matrix* gx = c.in_grad(0))
                             for (std::size_t k = 0; k < gx->size(); ++k) {
                               const double v = c.in(0)[k];
                               (*gx)[k] += c.grad()[k] * (v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : 0.0);
                             }
                         });
}

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape().record(OpKind::sum, Matrix::scalar(s), {x}, [](Tape::Context& c) {
    if (Matrix* gx = c.in_grad(0))
      for (auto& v : gx->values()) v += c.grad()[0];
  });
}

inline Var mean(const Var& x) {
  if (x.value().empty()) throw InvalidInput("mean of an empty matrix");
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const double n = static_cast<double>(x.value().size());
  return x.tape().record(OpKind::mean, Matrix::scalar(s / n), {x}, [n](Tape::Context& c) {
    if (Matrix* gx = c.in_grad(0))
      for (auto& v : gx->values()) v += c.grad()[0] / n;
  });
}

/// Population standard deviation over all entries.
inline Var stddev(const Var& x) {
  if (x.value().empty()) throw InvalidInput("std of an empty matrix");
  const double n = static_cast<double>(x.value().size());
  double mu = 0.0;
  for (double v : x.value().values()) mu += v;
  mu /= n;
  double var = 0.0;
  for (double v : x.value().values()) var += (v - mu) * (v - mu);
  const double s = std::sqrt(var / n);
  return x.tape().record(OpKind::stddev, Matrix::scalar(s), {x}, [n, mu](Tape::Context& c) {
    const double s = c.out()[0];
    if (s == 0.0) return;
    if (Matrix* gx = c.in_grad(0))
      for (std::size_t k = 0; k < gx->size(); ++k) (*gx)[k] += c.grad()[0] * (c.in(0)[k] - mu) / (n * s);
  });
}

/// Divides each row by max(row sum, 1).
inline Var row_normalize(const Var& g) {
  const Matrix& gv = g.value();
  Matrix out(gv.rows(), gv.cols());
  std::vector<double> denom(gv.rows(), 1.0);
  for (std::size_t i = 0; i < gv.rows(); ++i) {
    double s = 0.0;
    for (double v : gv.row(i)) s += v;
    denom[i] = std::max(s, 1.0);
    for (std::size_t j = 0; j < gv.cols(); ++j) out(i, j) = gv(i, j) / denom[i];
  }
  return g.tape().record(OpKind::row_normalize, std::move(out), {g}, [denom](Tape::Context& c) {
    Matrix* gg = c.in_grad(0);
    if (!gg) return;
    const Matrix& go = c.grad();
    for (std::size_t i = 0; i < go.rows(); ++i) {
      const double d = denom[i];
      double dot = 0.0;
      if (d > 1.0) {
        for (std::size_t j = 0; j < go.cols(); ++j) dot += go(i, j) * c.out()(i, j);
      }
      for (std::size_t j = 0; j < go.cols(); ++j) (*gg)(i, j) += (go(i, j) - dot) / d;
    }
  });
}

inline Var zero_diagonal(const Var& x) {
  if (x.rows() != x.cols()) throw InvalidInput("zero_diagonal needs a square matrix, got " + x.value().shape());
  Matrix out = x.value();
  for (std::size_t i = 0; i < out.rows(); ++i) out(i, i) = 0.0;
  return x.tape().record(OpKind::zero_diagonal, std::move(out), {x}, [](Tape::Context& c) {
    if (Matrix* gx = c.in_grad(0))
      for (std::size_t i = 0; i < gx->rows(); ++i)
        for (std::size_t j = 0; j < gx->cols(); ++j)
          if (i != j) (*gx)(i, j) += c.grad()(i, j);
  });
}

inline Var gather_rows(const Var& x, std::vector<std::size_t> idx) {
  Matrix out(idx.size(), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= x.rows()) throw InvalidInput("gather_rows index " + std::to_string(idx[r]) + " out of range");
    for (std::size_t j = 0; j < x.cols(); ++j) out(r, j) = x.value()(idx[r], j);
  }
  return x.tape().record(OpKind::gather_rows, std::move(out), {x}, [idx = std::move(idx)](Tape::Context& c) {
    if (Matrix* gx = c.in_grad(0))
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < gx->cols(); ++j) (*gx)(idx[r], j) += c.grad()(r, j);
  });
}

inline Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw InvalidInput("concat_cols row mismatch: " + a.value().shape() + " | " + b.value().shape());
  const std::size_t ca = a.cols(), cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = a.value()(i, j);
    for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = b.value()(i, j);
  }
  return a.tape().record(OpKind::concat_cols, std::move(out), {a, b}, [ca, cb](Tape::Context& c) {
    if (Matrix* ga = c.in_grad(0))
      for (std::size_t i = 0; i < ga->rows(); ++i)
        for (std::size_t j = 0; j < ca; ++j) (*ga)(i, j) += c.grad()(i, j);
    if (Matrix* gb = c.in_grad(1))
      for (std::size_t i = 0; i < gb->rows(); ++i)
        for (std::size_t j = 0; j < cb; ++j) (*gb)(i, j) += c.grad()(i, ca + j);
  });
}

/// Row-major reinterpretation with the same number of entries.
inline Var reshape(const Var& x, std::size_t rows, std::size_t cols) {
  if (rows * cols != x.value().size()) {
    throw InvalidInput("reshape " + x.value().shape() + " to " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  std::vector<double> v(x.value().values().begin(), x.value().values().end());
  return x.tape().record(OpKind::reshape, Matrix(rows, cols, std::move(v)), {x}, [](Tape::Context& c) {
    if (Matrix* gx = c.in_grad(0))
      for (std::size_t k = 0; k < gx->size(); ++k) (*gx)[k] += c.grad()[k];
  });
}

struct FocalOptions {
  double gamma = 2.0;
  /// Weight of the positive class; negatives get 1 - alpha. A negative
  /// value disables class balancing.
  double alpha = 0.25;
  double clamp_eps = 1e-7;
};

/// Per-entry binary focal loss of probability p against label y.
inline double focal_term(double p, double y, const FocalOptions& o) {
  const double pc = std::clamp(p, o.clamp_eps, 1.0 - o.clamp_eps);
  const double a_pos = o.alpha < 0.0 ? 1.0 : o.alpha;
  const double a_neg = o.alpha < 0.0 ? 1.0 : 1.0 - o.alpha;
  return y > 0.5 ? -a_pos * std::pow(1.0 - pc, o.gamma) * std::log(pc)
                 : -a_neg * std::pow(pc, o.gamma) * std::log(1.0 - pc);
}

inline double focal_derivative(double p, double y, const FocalOptions& o) {
  if (p < o.clamp_eps || p > 1.0 - o.clamp_eps) return 0.0;
  const double g = o.gamma;
  const double a_pos = o.alpha < 0.0 ? 1.0 : o.alpha;
  const double a_neg = o.alpha < 0.0 ? 1.0 : 1.0 - o.alpha;
  if (y > 0.5) {
    const double q = 1.0 - p;
    const double lead = g == 0.0 ? 0.0 : g * std::pow(q, g - 1.0) * std::log(p);
    return -a_pos * (-lead + std::pow(q, g) / p);
  }
  const double lead = g == 0.0 ? 0.0 : g * std::pow(p, g - 1.0) * std::log(1.0 - p);
  return -a_neg * (lead - std::pow(p, g) / (1.0 - p));
}

/// Mean focal loss over entries where `mask` is nonzero (all entries when
/// `mask` is empty). Probabilities are clamped to [eps, 1 - eps].
inline Var focal_loss(const Var& probs, const Matrix& labels, const Matrix& mask, const FocalOptions& opts) {
  if (!probs.value().same_shape(labels)) {
    throw InvalidInput("focal_loss label shape " + labels.shape() + " vs probabilities " + probs.value().shape());
  }
  if (!mask.empty() && !mask.same_shape(labels)) throw InvalidInput("focal_loss mask shape mismatch");
  double total = 0.0;
  double count = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (!mask.empty() && mask[k] == 0.0) continue;
    total += focal_term(probs.value()[k], labels[k], opts);
    count += 1.0;
  }
  const double denom = std::max(count, 1.0);
  return probs.tape().record(OpKind::focal, Matrix::scalar(total / denom), {probs},
                             [labels, mask, opts, denom](Tape::Context& c) {
                               Matrix* gp = c.in_grad(0);
                               if (!gp) return;
                               for (std::size_t k = 0; k < labels.size(); ++k) {
                                 if (!mask.empty() && mask[k] == 0.0) continue;
                                 (*gp)[k] += c.grad()[0] * focal_derivative(c.in(0)[k], labels[k], opts) / denom;
                               }
                             });
}

inline Var focal_loss(const Var& probs, const Matrix& labels, const FocalOptions& opts = {}) {
  return focal_loss(probs, labels, Matrix(), opts);
}

}  // namespace topologic::nn
