#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "xlo/core_types.hpp"
#include "xlo/rng.hpp"

namespace xlo {

inline constexpr double kExponentClamp = 1024.0;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct ShannonEnergyParams {
  double n0 = 1.0;            // thermal noise density
  double bandwidth_hz = 1.0;  // B; B = 1 reduces to the raw bits-per-second exponent
};

/// Energy to push `a_bits` through a window [x, y] at channel gain c:
/// (N0 B / c) (2^{a / ((y - x) B)} - 1) (y - x).
///
/// Zero bits cost zero. A zero-length window with a > 0 returns +inf, which
/// optimizers treat as unselectable. Positive-length windows always give a
/// finite value: the exponent is clamped at 1024 and the result saturates at
/// the largest double.
[[nodiscard]] inline double energy_cost(const ShannonEnergyParams& p, double c, double x, double y,
                                        double a_bits) {
  const double tau = y - x;
  if (!(a_bits >= 0.0)) throw std::domain_error("energy_cost: negative payload");
  if (!(tau >= 0.0)) throw std::domain_error("energy_cost: window ends before it starts");
  if (!(c > 0.0)) throw std::domain_error("energy_cost: channel gain must be positive");
  if (a_bits == 0.0) return 0.0;
  if (tau == 0.0) return kInf;
  const double z = std::min(a_bits / (tau * p.bandwidth_hz), kExponentClamp);
  const double scale = p.n0 * p.bandwidth_hz / c;
  constexpr double ln2 = 0.6931471805599453;
  if (z < 64.0) {
    const double w = scale * std::expm1(z * ln2) * tau;
    return std::isfinite(w) ? w : std::numeric_limits<double>::max();
  }
  // log domain: log(2^z - 1) = z ln2 + log1p(-2^-z)
  const double log_w = std::log(scale) + z * ln2 + std::log1p(-std::exp2(-z)) + std::log(tau);
  constexpr double log_max = 709.782712893384;
  if (log_w >= log_max) return std::numeric_limits<double>::max();
  return std::exp(log_w);
}

/// Remaining-distortion fraction 2^{-theta min(a, l)}, clamped to [0, 1].
[[nodiscard]] inline double loss_fraction(double theta, double l, double a) {
  if (!(theta > 0.0) || !(l > 0.0) || !(a >= 0.0)) {
    throw std::domain_error("loss_fraction: requires theta > 0, l > 0, a >= 0");
  }
  const double z = std::min(theta * std::min(a, l), kExponentClamp);
  return std::clamp(std::exp2(-z), 0.0, 1.0);
}

// The example model propagates exactly the fraction it loses.
[[nodiscard]] inline double error_propagation(double theta, double l, double a) {
  return loss_fraction(theta, l, a);
}

[[nodiscard]] inline double independent_distortion(double q, double theta, double l, double a) {
  if (!(q > 0.0)) throw std::domain_error("independent_distortion: q must be positive");
  return q * loss_fraction(theta, l, a);
}

/// Contract for per-unit transmission models. `loss` is the distortion
/// fraction p, `propagation` the error passed to dependants e, `cost` the
/// resource use w; all are functions of the unit, its window, and payload.
template <class M>
concept TransmissionModel = requires(const M& m, const DataUnit& du, double x, double y, double a) {
  { m.loss(du, x, y, a) } -> std::convertible_to<double>;
  { m.propagation(du, x, y, a) } -> std::convertible_to<double>;
  { m.cost(du, x, y, a) } -> std::convertible_to<double>;
};

// Models whose functions see (x, y) only through y - x can declare
// `static constexpr bool duration_only = true;` to enable the reduced
// schedule search.
template <class M>
inline constexpr bool duration_only_v = [] {
  if constexpr (requires { M::duration_only; }) {
    return static_cast<bool>(M::duration_only);
  } else {
    return false;
  }
}();

/// Exponential distortion decay over a Shannon-type energy link. Sizes and
/// payloads are in units of `bits_per_unit` bits (1000 = kilobits).
struct ExponentialShannonModel {
  static constexpr bool duration_only = true;

  ShannonEnergyParams energy{};
  double bits_per_unit = 1000.0;

  [[nodiscard]] double loss(const DataUnit& du, double, double, double a) const {
    return loss_fraction(du.theta, du.l, a);
  }
  [[nodiscard]] double propagation(const DataUnit& du, double, double, double a) const {
    return error_propagation(du.theta, du.l, a);
  }
  [[nodiscard]] double cost(const DataUnit& du, double x, double y, double a) const {
    return energy_cost(energy, du.c, x, y, a * bits_per_unit);
  }
};

/// Expected distortion of unit i given every earlier decision:
/// q_i - q_i (1 - p_i) prod_{k anc i} (1 - e_k).
template <TransmissionModel Model>
[[nodiscard]] double dag_distortion(std::size_t i, std::span<const CrossLayerDecision> decisions,
                                    std::span<const DataUnit> units, const Closure& closure,
                                    const Model& model) {
  if (i >= units.size() || i >= closure.ancestors.size()) {
    throw std::out_of_range("dag_distortion: unit index out of range");
  }
  if (decisions.size() <= i) throw std::domain_error("dag_distortion: missing decision");
  const auto& du = units[i];
  const auto& di = decisions[i];
  const double p = model.loss(du, di.x, di.y, di.a);
  const auto& anc = closure.ancestors[i];
  if (anc.empty()) return du.q * p;
  double survive = 1.0 - p;
  for (auto k : anc) {
    if (k >= decisions.size()) throw std::domain_error("dag_distortion: missing ancestor decision");
    const auto& dk = decisions[k];
    survive *= 1.0 - model.propagation(units[k], dk.x, dk.y, dk.a);
  }
  return du.q - du.q * survive;
}

/// Average distortion (1/M) sum Q_i, using the dependency closure when given.
template <TransmissionModel Model>
[[nodiscard]] double average_distortion(std::span<const CrossLayerDecision> decisions,
                                        std::span<const DataUnit> units, const Closure* closure,
                                        const Model& model) {
  if (units.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& d = decisions[i];
    total += closure ? dag_distortion(i, decisions, units, *closure, model)
                     : units[i].q * model.loss(units[i], d.x, d.y, d.a);
  }
  return total / static_cast<double>(units.size());
}

template <TransmissionModel Model>
[[nodiscard]] double average_cost(std::span<const CrossLayerDecision> decisions,
                                  std::span<const DataUnit> units, const Model& model) {
  if (units.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    total += model.cost(units[i], decisions[i].x, decisions[i].y, decisions[i].a);
  }
  return total / static_cast<double>(units.size());
}

struct ShapeReport {
  std::size_t samples = 0;
  std::size_t monotonicity_violations = 0;
  std::size_t convexity_violations = 0;
  std::vector<std::string> details;  // first few offending samples

  [[nodiscard]] bool ok() const { return monotonicity_violations == 0 && convexity_violations == 0; }
};

/// Spot-checks the monotonicity and convexity conditions on a unit's window
/// range: p and e non-increasing in (duration, payload); p, e and w midpoint
/// convex. Durations are drawn from [1e-3 (d - t), d - t], payloads from
/// [0, l]. Tolerance is `tol` relative to max(1, |value|).
template <TransmissionModel Model>
[[nodiscard]] ShapeReport verify_shape(const Model& model, const DataUnit& du, std::size_t samples,
                                       std::uint64_t seed, double tol = 1e-9) {
  ShapeReport rep;
  rep.samples = samples;
  if (samples == 0) return rep;
  Rng rng(seed);
  const double tmax = du.lifetime();
  const double tmin = 1e-3 * tmax;
  const double step_tau = 1e-3 * (tmax - tmin);
  const double step_a = 1e-3 * du.l;
  auto at = [&](auto fn, double tau, double a) { return fn(du, du.t, du.t + tau, a); };
  auto p = [&](const DataUnit& u, double x, double y, double a) { return model.loss(u, x, y, a); };
  auto e = [&](const DataUnit& u, double x, double y, double a) { return model.propagation(u, x, y, a); };
  auto w = [&](const DataUnit& u, double x, double y, double a) { return model.cost(u, x, y, a); };
  auto exceeds = [&](double lhs, double rhs) {
    return lhs > rhs + tol * std::max(1.0, std::abs(rhs));
  };
  auto note = [&](const std::string& what, double tau, double a) {
    if (rep.details.size() < 8) {
      rep.details.push_back(what + " at tau=" + std::to_string(tau) + " a=" + std::to_string(a));
    }
  };

  for (std::size_t s = 0; s < samples; ++s) {
    const double tau1 = rng.uniform(tmin, tmax - step_tau);
    const double a1 = rng.uniform(0.0, du.l - step_a);
    const double tau2 = rng.uniform(tmin, tmax);
    const double a2 = rng.uniform(0.0, du.l);

    auto monotone_check = [&](auto fn, const char* name) {
      const double base = at(fn, tau1, a1);
      if (exceeds(at(fn, tau1 + step_tau, a1), base)) {
        ++rep.monotonicity_violations;
        note(std::string(name) + " increases with duration", tau1, a1);
      }
      if (exceeds(at(fn, tau1, a1 + step_a), base)) {
        ++rep.monotonicity_violations;
        note(std::string(name) + " increases with payload", tau1, a1);
      }
    };
    monotone_check(p, "p");
    monotone_check(e, "e");

    const double tm = 0.5 * (tau1 + tau2);
    const double am = 0.5 * (a1 + a2);
    auto midpoint_check = [&](auto fn, const char* name) {
      const double avg = 0.5 * at(fn, tau1, a1) + 0.5 * at(fn, tau2, a2);
      if (exceeds(at(fn, tm, am), avg)) {
        ++rep.convexity_violations;
        note(std::string(name) + " not midpoint convex", tm, am);
      }
    };
    midpoint_check(p, "p");
    midpoint_check(e, "e");
    midpoint_check(w, "w");
  }
  return rep;
}

}  // namespace xlo
