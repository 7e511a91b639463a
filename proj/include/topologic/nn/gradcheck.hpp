#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "topologic/nn/tape.hpp"

namespace topologic::nn {

using ScalarFn = std::function<Var(Tape&)>;

struct GradCheckReport {
  /// ||analytic - numeric|| / max(||analytic||, ||numeric||) over all entries.
  double relative = 0.0;
  /// Largest entrywise |a - n| / max(|a|, |n|, floor).
  double worst_entry = 0.0;
  std::string worst_name;
  std::size_t worst_index = 0;
  double norm = 0.0;
  /// Distance of the base point from the nearest relu/abs kink.
  double kink_margin = 0.0;
};

/// Tape gradient against central differences with step `eps`. The entrywise
/// figure uses `floor` so that entries at roundoff level do not dominate.
inline GradCheckReport gradient_check(const ScalarFn& f, std::span<Parameter* const> params, double eps = 1e-5,
                                      double floor = 1e-8) {
  Gradients analytic;
  double margin = 0.0;
  {
    Tape tape;
    analytic = tape.backward(f(tape));
    margin = tape.kink_margin();
  }
  auto evaluate = [&] {
    Tape tape;
    return f(tape).value().item();
  };
  GradCheckReport r;
  r.kink_margin = margin;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (Parameter* p : params) {
    const Matrix a = analytic.of(*p);
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double saved = p->value[k];
      p->value[k] = saved + eps;
      const double up = evaluate();
      p->value[k] = saved - eps;
      const double down = evaluate();
      p->value[k] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      diff2 += (a[k] - numeric) * (a[k] - numeric);
      a2 += a[k] * a[k];
      n2 += numeric * numeric;
      const double rel = std::abs(a[k] - numeric) / std::max({std::abs(a[k]), std::abs(numeric), floor});
      if (rel > r.worst_entry) {
        r.worst_entry = rel;
        r.worst_name = p->name;
        r.worst_index = k;
      }
    }
  }
  r.norm = std::sqrt(a2);
  const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
  r.relative = diff2 == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
  return r;
}

/// Largest entrywise relative error, denominator max(|a|, |b|, 1e-8).
inline double finite_diff_check(const ScalarFn& f, std::span<Parameter* const> params, double eps = 1e-5) {
  return gradient_check(f, params, eps).worst_entry;
}

}  // namespace topologic::nn
