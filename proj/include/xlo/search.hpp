#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <stdexcept>

namespace xlo {

struct ScalarMinimum {
  double arg = 0.0;
  double value = 0.0;
};

enum class TiePreference { lower, upper };

namespace detail {

// a is better than b; near-equal values defer to the tie preference.
inline bool better(const ScalarMinimum& a, const ScalarMinimum& b, TiePreference tie) {
  if (std::isinf(a.value) && std::isinf(b.value)) return false;
  const double scale = std::max({1.0, std::abs(a.value), std::abs(b.value)});
  if (std::isfinite(a.value) && std::isfinite(b.value) &&
      std::abs(a.value - b.value) <= 1e-12 * scale) {
    return tie == TiePreference::upper ? a.arg > b.arg : a.arg < b.arg;
  }
  return a.value < b.value;
}

}  // namespace detail

/// Golden-section minimization of a unimodal function on [lo, hi], stopping
/// once the bracket is narrower than `tol`. Both endpoints are compared
/// against the interior result so corner optima are returned exactly.
///
/// +inf is allowed on a suffix of the interval (e.g. an energy cost that
/// saturates at large payloads); the bracket then shrinks from the right.
template <class F>
ScalarMinimum golden_section_minimize(F&& f, double lo, double hi, double tol = 1e-8,
                                      TiePreference tie = TiePreference::upper) {
  if (!(hi >= lo)) throw std::domain_error("golden section: empty interval");
  ScalarMinimum best{lo, f(lo)};
  if (hi == lo) return best;
  const ScalarMinimum top{hi, f(hi)};
  if (detail::better(top, best, tie)) best = top;

  constexpr double inv_phi = 0.6180339887498949;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    const bool both_inf = std::isinf(fc) && std::isinf(fd);
    if (fc < fd || both_inf) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  for (const ScalarMinimum cand : {ScalarMinimum{c, fc}, ScalarMinimum{d, fd}}) {
    if (detail::better(cand, best, tie)) best = cand;
  }
  return best;
}

}  // namespace xlo
