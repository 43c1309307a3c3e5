#pragma once

// Complete-knowledge solvers. The resource constraint and the FIFO coupling
// x_{i+1} >= y_i are relaxed with a price lambda and neighboring impact
// factors mu_i; each unit then solves a small layered problem (payload at the
// lower layer, window at the upper layer) and the multipliers follow
// projected subgradient steps. Interdependent units replace the per-unit
// solve with block coordinate descent over the units.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "xlo/core_types.hpp"
#include "xlo/models.hpp"
#include "xlo/search.hpp"

namespace xlo {

struct SolverOptions {
  double epsilon = 1e-3;          // multiplier-change stopping norm
  std::size_t max_outer = 2000;
  std::size_t max_inner = 50;     // coordinate-descent sweeps per outer iteration
  StepSchedule price_step{2.0, 1.0};
  StepSchedule nif_step{3000.0, 1.0};  // mu is in value per second; slacks are tens of ms
  double inner_tol = 1e-9;        // relative sweep improvement that ends descent
  double gap_tol = 0.0;           // stop once the relative gap drops below (0 = off)
  double lambda0 = 0.0;
  // The resource subgradient is clipped to +-price_clip * W. Near lambda = 0
  // a short window can cost astronomically more than W, and one unclipped
  // step would then swamp the price for the rest of the run.
  double price_clip = 1.0;
  bool fixed_price = false;       // hold lambda; the budget is priced, not enforced
  double search_tol = 1e-8;
};

struct LowerResult {
  double a = 0.0;
  double value = 0.0;  // best response f(x, y)
};

struct DucloResult {
  CrossLayerDecision decision;
  double objective = 0.0;      // f - mu_prev x + mu_next y
  double best_response = 0.0;  // f(x, y)
};

namespace detail {

// (1/M) D + (lambda/M) w, with infinite cost never selectable.
template <TransmissionModel Model, class Distortion>
double penalized(const Distortion& dist, const DataUnit& du, const Model& model, double lambda,
                 double inv_m, double x, double y, double a) {
  const double w = model.cost(du, x, y, a);
  if (std::isinf(w)) return kInf;
  const double priced = lambda == 0.0 ? 0.0 : lambda * w;
  return inv_m * (dist(x, y, a) + priced);
}

template <TransmissionModel Model>
struct OwnDistortion {
  const DataUnit& du;
  const Model& model;
  double operator()(double x, double y, double a) const { return du.q * model.loss(du, x, y, a); }
};

}  // namespace detail

/// Lower-layer best response for an arbitrary distortion term D(x, y, a):
/// minimizes (1/M) D + (lambda/M) w over a in [0, l].
template <TransmissionModel Model, class Distortion>
[[nodiscard]] LowerResult lower_optimization_with(const Distortion& dist, const DataUnit& du,
                                                  double lambda, double x, double y,
                                                  std::size_t m, const Model& model,
                                                  double tol = 1e-8) {
  if (x > y) throw std::domain_error("lower_optimization: window ends before it starts");
  if (lambda < 0.0) throw std::domain_error("lower_optimization: negative price");
  const double inv_m = 1.0 / static_cast<double>(m);
  auto f = [&](double a) { return detail::penalized(dist, du, model, lambda, inv_m, x, y, a); };
  const auto best = golden_section_minimize(f, 0.0, du.l, tol, TiePreference::upper);
  return {best.arg, best.value};
}

template <TransmissionModel Model>
[[nodiscard]] LowerResult lower_optimization(const DataUnit& du, double lambda, double x, double y,
                                             std::size_t m, const Model& model, double tol = 1e-8) {
  return lower_optimization_with(detail::OwnDistortion<Model>{du, model}, du, lambda, x, y, m, model,
                                 tol);
}

/// Upper-layer window choice: minimizes f(x, y) - mu_prev x + mu_next y over
/// t <= x <= y <= d. For duration-only models the x-term is linear given the
/// duration, so x sits at t (mu_next >= mu_prev, ties included) or at d - tau.
/// Flat objectives resolve to the longest window.
template <TransmissionModel Model, class Distortion>
[[nodiscard]] DucloResult upper_optimization_with(const Distortion& dist, const DataUnit& du,
                                                  double lambda, double mu_prev, double mu_next,
                                                  std::size_t m, const Model& model,
                                                  double tol = 1e-8) {
  if (mu_prev < 0.0 || mu_next < 0.0) throw std::domain_error("upper_optimization: negative NIF");
  const double span = du.lifetime();
  if (span < 0.0) throw std::domain_error("upper_optimization: deadline before ready time");
  auto lower = [&](double x, double y) {
    return lower_optimization_with(dist, du, lambda, x, y, m, model, tol);
  };

  if constexpr (duration_only_v<Model>) {
    const bool early = mu_next >= mu_prev;
    auto window = [&](double tau) {
      return early ? std::pair{du.t, std::min(du.t + tau, du.d)}
                   : std::pair{std::max(du.d - tau, du.t), du.d};
    };
    const double slope = early ? mu_next : mu_prev;
    auto g = [&](double tau) {
      const auto [x, y] = window(tau);
      return lower(x, y).value + slope * tau;
    };
    const auto best = golden_section_minimize(g, 0.0, span, tol, TiePreference::upper);
    const auto [x, y] = window(best.arg);
    const auto low = lower(x, y);
    return {{x, y, low.a}, low.value - mu_prev * x + mu_next * y, low.value};
  } else {
    // General models: nested search over the duration and the start time.
    auto at_tau = [&](double tau) {
      auto h = [&](double x) { return lower(x, x + tau).value - mu_prev * x + mu_next * (x + tau); };
      return golden_section_minimize(h, du.t, std::max(du.t, du.d - tau), tol, TiePreference::lower);
    };
    const auto best = golden_section_minimize([&](double tau) { return at_tau(tau).value; }, 0.0,
                                              span, tol, TiePreference::upper);
    const double x = at_tau(best.arg).arg;
    const double y = std::min(x + best.arg, du.d);
    const auto low = lower(x, y);
    return {{x, y, low.a}, low.value - mu_prev * x + mu_next * y, low.value};
  }
}

template <TransmissionModel Model>
[[nodiscard]] DucloResult upper_optimization(const DataUnit& du, double lambda, double mu_prev,
                                             double mu_next, std::size_t m, const Model& model,
                                             double tol = 1e-8) {
  return upper_optimization_with(detail::OwnDistortion<Model>{du, model}, du, lambda, mu_prev,
                                 mu_next, m, model, tol);
}

[[nodiscard]] inline double price_update(double lambda, double avg_usage, double budget,
                                         double step) {
  return std::max(lambda + step * (avg_usage - budget), 0.0);
}

[[nodiscard]] inline double nif_update(double mu, double y_i, double x_next, double step) {
  return std::max(mu + step * (y_i - x_next), 0.0);
}

/// Portion of the total dependent distortion that moves with unit i's own
/// decision, every other decision held fixed:
///   Q'_i = q_i p_i prod_{k anc i}(1 - e_k)
///          - (1 - e_i) sum_{j desc i} q_j (1 - p_j) prod_{k anc j, k != i}(1 - e_k)
/// Total distortion = Q'_i + (terms independent of unit i).
template <TransmissionModel Model>
struct Sensitivity {
  const DataUnit* du = nullptr;
  const Model* model = nullptr;
  double upstream = 1.0;    // prod over ancestors of (1 - e_k)
  double downstream = 0.0;  // descendant relief carried by unit i

  double operator()(double x, double y, double a) const {
    const double p = model->loss(*du, x, y, a);
    const double e = model->propagation(*du, x, y, a);
    return du->q * p * upstream - (1.0 - e) * downstream;
  }
};

template <TransmissionModel Model>
[[nodiscard]] Sensitivity<Model> dag_sensitivity(std::size_t i,
                                                 std::span<const CrossLayerDecision> decisions,
                                                 std::span<const DataUnit> units,
                                                 const Closure& closure, const Model& model) {
  if (i >= units.size() || i >= closure.ancestors.size()) {
    throw std::out_of_range("dag_sensitivity: unit index out of range");
  }
  if (decisions.size() != units.size()) {
    throw std::domain_error("dag_sensitivity: one decision per unit required");
  }
  auto survive = [&](std::size_t k) {
    const auto& d = decisions[k];
    return 1.0 - model.propagation(units[k], d.x, d.y, d.a);
  };
  Sensitivity<Model> s{&units[i], &model, 1.0, 0.0};
  for (auto k : closure.ancestors[i]) s.upstream *= survive(k);
  for (auto j : closure.descendants[i]) {
    const auto& dj = decisions[j];
    double term = units[j].q * (1.0 - model.loss(units[j], dj.x, dj.y, dj.a));
    for (auto k : closure.ancestors[j]) {
      if (k != i) term *= survive(k);
    }
    s.downstream += term;
  }
  return s;
}

struct RecoveredPrimal {
  std::vector<CrossLayerDecision> decisions;
  double value = 0.0;        // average distortion (plus priced cost when the price is fixed)
  double average_cost = 0.0;
  double payload_scale = 1.0;
};

namespace detail {

template <TransmissionModel Model>
double priced_objective(std::span<const CrossLayerDecision> dec, std::span<const DataUnit> units,
                        const Closure* closure, const Model& model, double lambda) {
  return average_distortion(dec, units, closure, model) + lambda * average_cost(dec, units, model);
}

// The relaxed objective without the constant -lambda W term.
template <TransmissionModel Model>
double relaxed_objective(std::span<const CrossLayerDecision> dec, std::span<const DataUnit> units,
                         const Closure* closure, const Model& model, const DualState& st) {
  double v = priced_objective(dec, units, closure, model, st.lambda);
  for (std::size_t i = 0; i + 1 < units.size(); ++i) v += st.mu[i] * (dec[i].y - dec[i + 1].x);
  return v;
}

}  // namespace detail

/// Turns per-unit decisions into a feasible schedule. A forward sweep clips
/// each start to the previous end (x_{i+1} <- max(x_{i+1}, y_i)), keeps the
/// unit's duration where the deadline allows, and re-solves the payload of
/// every unit whose window moved. Ends are capped by later deadlines so no
/// unit is squeezed out entirely. If average cost then exceeds the budget,
/// all payloads shrink by a common factor found by bisection. Feasible input
/// comes back unchanged.
template <TransmissionModel Model>
[[nodiscard]] RecoveredPrimal recover_primal(const Instance& inst,
                                             std::span<const CrossLayerDecision> decisions,
                                             const Model& model, double lambda,
                                             const Closure* closure = nullptr,
                                             bool enforce_budget = true, double tol = 1e-8) {
  const auto& units = inst.units;
  const std::size_t m = units.size();
  if (decisions.size() != m) throw std::domain_error("recover_primal: one decision per unit required");
  RecoveredPrimal out;
  out.decisions.assign(decisions.begin(), decisions.end());
  if (m == 0) return out;
  auto& dec = out.decisions;

  std::vector<double> cap(m, kInf);
  for (std::size_t i = m - 1; i > 0; --i) cap[i - 1] = std::min(cap[i], units[i].d);

  double prev_end = -kInf;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& du = units[i];
    const auto old = dec[i];
    const double limit = std::min(du.d, cap[i]);
    const double x = std::clamp(std::max(old.x, prev_end), du.t, limit);
    const double dur = std::max(old.y - old.x, 0.0);
    const double y = std::min(x + dur, limit);
    if (x != old.x || y != old.y) {
      dec[i].x = x;
      dec[i].y = y;
      if (closure) {
        const auto sens = dag_sensitivity(i, dec, units, *closure, model);
        dec[i].a = lower_optimization_with(sens, du, lambda, x, y, m, model, tol).a;
      } else {
        dec[i].a = lower_optimization(du, lambda, x, y, m, model, tol).a;
      }
    }
    prev_end = dec[i].y;
  }

  out.average_cost = average_cost(dec, units, model);
  if (enforce_budget && out.average_cost > inst.budget) {
    const std::vector<CrossLayerDecision> base = dec;
    auto usage = [&](double s) {
      for (std::size_t i = 0; i < m; ++i) dec[i].a = s * base[i].a;
      return average_cost(dec, units, model);
    };
    double lo = 0.0;
    double hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      (usage(mid) <= inst.budget ? lo : hi) = mid;
    }
    out.payload_scale = lo;
    out.average_cost = usage(lo);
  }
  out.value = enforce_budget ? average_distortion(dec, units, closure, model)
                             : detail::priced_objective(dec, units, closure, model, lambda);
  return out;
}

namespace detail {

struct InnerResult {
  double relaxed = 0.0;  // relaxed objective at the returned decisions
  std::size_t sweeps = 0;
};

// Per-unit layered solves: exact minimization for independent units.
template <TransmissionModel Model>
InnerResult solve_independent_block(const Instance& inst, const Model& model, const DualState& st,
                                    std::vector<CrossLayerDecision>& dec, const SolverOptions& opt) {
  const auto m = inst.size();
  for (std::size_t i = 0; i < m; ++i) {
    dec[i] = upper_optimization(inst.units[i], st.lambda, st.mu_before(i), st.mu_after(i), m, model,
                                opt.search_tol)
                 .decision;
  }
  return {relaxed_objective<Model>(dec, inst.units, nullptr, model, st), 1};
}

// Sweeps of block coordinate descent in FIFO order, warm-started from `dec`.
// A block update is kept only if it lowers that unit's share of the relaxed
// objective, so the objective never rises between sweeps.
template <TransmissionModel Model>
InnerResult solve_dependent_block(const Instance& inst, const Closure& closure, const Model& model,
                                  const DualState& st, std::vector<CrossLayerDecision>& dec,
                                  const SolverOptions& opt,
                                  std::vector<double>* sweep_trace = nullptr) {
  const auto& units = inst.units;
  const auto m = inst.size();
  const double inv_m = 1.0 / static_cast<double>(m);
  double current = relaxed_objective<Model>(dec, units, &closure, model, st);
  if (sweep_trace) sweep_trace->push_back(current);
  InnerResult res{current, 0};
  for (std::size_t sweep = 0; sweep < std::max<std::size_t>(opt.max_inner, 1); ++sweep) {
    for (std::size_t i = 0; i < m; ++i) {
      const auto sens = dag_sensitivity(i, dec, units, closure, model);
      const double mp = st.mu_before(i);
      const double mn = st.mu_after(i);
      const auto& cur = dec[i];
      const double cur_val =
          penalized(sens, units[i], model, st.lambda, inv_m, cur.x, cur.y, cur.a) - mp * cur.x +
          mn * cur.y;
      const auto cand =
          upper_optimization_with(sens, units[i], st.lambda, mp, mn, m, model, opt.search_tol);
      if (cand.objective < cur_val) dec[i] = cand.decision;
    }
    ++res.sweeps;
    const double next = relaxed_objective<Model>(dec, units, &closure, model, st);
    if (sweep_trace) sweep_trace->push_back(next);
    const double improvement = current - next;
    current = std::min(current, next);
    if (improvement <= opt.inner_tol * std::max(1.0, std::abs(next))) break;
  }
  res.relaxed = current;
  return res;
}

}  // namespace detail

/// Subgradient dual loop shared by both solvers. `inner` minimizes the
/// relaxed objective at fixed multipliers, updating the decisions in place.
///
/// The reported dual value is the best lower bound seen. Each iteration's
/// bound is min over every evaluated point of the Lagrangian at that
/// iteration's multipliers, which includes the best feasible point; this keeps
/// the bound honest when the inner minimization is only locally optimal.
template <TransmissionModel Model, class Inner>
[[nodiscard]] SolveReport run_dual_loop(const Instance& inst, const Model& model,
                                        const SolverOptions& opt, const Closure* closure,
                                        Inner&& inner) {
  const auto& units = inst.units;
  const auto m = inst.size();
  SolveReport rep;
  if (m == 0) {
    rep.converged = true;
    return rep;
  }

  DualState st;
  st.lambda = opt.lambda0;
  st.mu.assign(m - 1, 0.0);

  std::vector<CrossLayerDecision> dec(m);
  for (std::size_t i = 0; i < m; ++i) dec[i] = {units[i].t, units[i].d, units[i].l};

  struct Snapshot {
    double lambda;
    std::vector<double> mu;
    double relaxed;
  };
  std::vector<Snapshot> snaps;

  // Lagrangian of a fixed point at given multipliers, minus the relaxed terms' constant.
  struct PointTerms {
    double objective = 0.0;  // distortion average (+ priced cost when fixed)
    double cost = 0.0;
    std::vector<double> slack;  // y_i - x_{i+1}
  };
  auto terms_of = [&](const std::vector<CrossLayerDecision>& d) {
    PointTerms p;
    p.objective = average_distortion(d, units, closure, model);
    p.cost = average_cost(d, units, model);
    p.slack.resize(m - 1);
    for (std::size_t i = 0; i + 1 < m; ++i) p.slack[i] = d[i].y - d[i + 1].x;
    return p;
  };
  auto lagrangian_at = [&](const PointTerms& p, double lambda, const std::vector<double>& mu) {
    double v = p.objective;
    v += opt.fixed_price ? lambda * p.cost : lambda * (p.cost - inst.budget);
    for (std::size_t i = 0; i + 1 < m; ++i) v += mu[i] * p.slack[i];
    return v;
  };
  auto dual_of = [&](const Snapshot& s) {
    return opt.fixed_price ? s.relaxed : s.relaxed - s.lambda * inst.budget;
  };

  double best_primal = kInf;
  std::vector<CrossLayerDecision> best_point;
  PointTerms best_terms;
  double best_dual = -kInf;
  auto refresh_best_dual = [&] {
    best_dual = -kInf;
    for (const auto& s : snaps) {
      double g = dual_of(s);
      if (!best_point.empty()) g = std::min(g, lagrangian_at(best_terms, s.lambda, s.mu));
      best_dual = std::max(best_dual, g);
    }
  };

  std::size_t k = 1;
  for (; k <= opt.max_outer; ++k) {
    const auto in = inner(st, dec);
    rep.inner_iterations += in.sweeps;
    snaps.push_back({st.lambda, st.mu, in.relaxed});

    const auto rec = recover_primal(inst, dec, model, st.lambda, closure, !opt.fixed_price,
                                    opt.search_tol);
    bool improved_primal = false;
    if (rec.value < best_primal) {
      best_primal = rec.value;
      best_point = rec.decisions;
      best_terms = terms_of(best_point);
      improved_primal = true;
    }
    if (improved_primal) {
      refresh_best_dual();
    } else {
      best_dual = std::max(best_dual, std::min(dual_of(snaps.back()),
                                               lagrangian_at(best_terms, st.lambda, st.mu)));
    }

    DualState next = st;
    if (!opt.fixed_price) {
      const double bound = opt.price_clip * inst.budget;
      const double usage = std::min(average_cost(dec, units, model), inst.budget + bound);
      next.lambda = price_update(st.lambda, std::max(usage, inst.budget - bound), inst.budget,
                                 opt.price_step.at(k));
    }
    const double beta = opt.nif_step.at(k);
    for (std::size_t i = 0; i + 1 < m; ++i) {
      next.mu[i] = nif_update(st.mu[i], dec[i].y, dec[i + 1].x, beta);
    }
    double dmu = 0.0;
    double mu_norm = 0.0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
      dmu += (next.mu[i] - st.mu[i]) * (next.mu[i] - st.mu[i]);
      mu_norm += next.mu[i] * next.mu[i];
    }
    const double change = std::abs(next.lambda - st.lambda) + std::sqrt(dmu);

    const double gap = relative_gap(best_primal, best_dual);
    rep.history.push_back({k, best_dual, best_primal, gap, st.lambda,
                           std::sqrt(std::inner_product(st.mu.begin(), st.mu.end(), st.mu.begin(), 0.0)),
                           in.sweeps});
    rep.dual_decisions = dec;
    rep.final_state = st;
    st = next;
    st.iteration = k + 1;

    if (k > 1 && change <= opt.epsilon) {
      rep.converged = true;
      break;
    }
    if (opt.gap_tol > 0.0 && gap <= opt.gap_tol) {
      rep.converged = true;
      break;
    }
  }
  rep.outer_iterations = std::min(k, opt.max_outer);
  rep.decisions = best_point;
  rep.primal_value = best_primal;
  rep.dual_value = best_dual;
  rep.gap = relative_gap(best_primal, best_dual);
  return rep;
}

/// Dual decomposition for independently decodable units.
template <TransmissionModel Model>
[[nodiscard]] SolveReport solve_independent(const Instance& inst, const Model& model,
                                            const SolverOptions& opt = {}) {
  if (!(opt.epsilon > 0.0)) throw std::domain_error("solve_independent: epsilon must be positive");
  return run_dual_loop(inst, model, opt, nullptr,
                       [&](const DualState& st, std::vector<CrossLayerDecision>& dec) {
                         return detail::solve_independent_block(inst, model, st, dec, opt);
                       });
}

/// Dual decomposition with block coordinate descent for units coupled by a
/// dependency DAG. Descent is warm-started from the previous outer iteration.
template <TransmissionModel Model>
[[nodiscard]] SolveReport solve_interdependent(const Instance& inst, const Model& model,
                                               const SolverOptions& opt = {},
                                               std::vector<std::vector<double>>* sweep_traces = nullptr) {
  if (!(opt.epsilon > 0.0)) throw std::domain_error("solve_interdependent: epsilon must be positive");
  const DependencyGraph graph = inst.graph ? *inst.graph : DependencyGraph(inst.size());
  if (!graph.acyclic()) throw std::domain_error("solve_interdependent: graph not acyclic");
  const Closure closure(graph);
  return run_dual_loop(inst, model, opt, &closure,
                       [&](const DualState& st, std::vector<CrossLayerDecision>& dec) {
                         std::vector<double>* trace = nullptr;
                         if (sweep_traces) trace = &sweep_traces->emplace_back();
                         return detail::solve_dependent_block(inst, closure, model, st, dec, opt,
                                                              trace);
                       });
}

}  // namespace xlo
