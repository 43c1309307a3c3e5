#pragma once

// Exhaustive search over a discretized feasible set. Each unit's window ends
// lie on {t, d} plus every multiple of `time_step` strictly inside (t, d);
// payloads on `action_points` evenly spaced values of [0, l]. Assignments
// are enumerated in FIFO order with x_{i+1} >= y_i and the average-cost
// budget enforced, and branches are cut once their distortion bound cannot
// beat the incumbent.
//
// Cost: at most (P * A)^M leaf evaluations, P = window pairs per unit,
// A = action_points. With a 50 ms lifetime, a 10 ms grid and 21 actions
// that is 441^M (about 8.6e7 for M = 3); M is capped at 4.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "xlo/core_types.hpp"
#include "xlo/models.hpp"

namespace xlo {

struct OracleOptions {
  double time_step = 0.01;
  std::size_t action_points = 21;
  std::size_t max_units = 4;
};

struct OracleResult {
  std::vector<CrossLayerDecision> decisions;
  double value = kInf;  // average distortion at the optimum
  bool feasible = false;
  std::size_t leaves = 0;
};

class OracleTooLarge : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Grid of window endpoints for one unit.
[[nodiscard]] inline std::vector<double> window_grid(const DataUnit& du, double step) {
  if (!(step > 0.0)) throw std::domain_error("window_grid: step must be positive");
  std::vector<double> g{du.t};
  const auto first = static_cast<long long>(std::floor(du.t / step)) + 1;
  for (long long k = first;; ++k) {
    const double v = static_cast<double>(k) * step;
    if (v >= du.d - 1e-12 * std::max(1.0, std::abs(du.d))) break;
    if (v > du.t) g.push_back(v);
  }
  if (du.d > du.t) g.push_back(du.d);
  return g;
}

[[nodiscard]] inline std::vector<double> action_grid(const DataUnit& du, std::size_t points) {
  if (points < 2) throw std::domain_error("action_grid: need at least two points");
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k) {
    g[k] = du.l * static_cast<double>(k) / static_cast<double>(points - 1);
  }
  g.back() = du.l;
  return g;
}

template <TransmissionModel Model>
[[nodiscard]] OracleResult brute_force_oracle(const Instance& inst, const Model& model,
                                              const OracleOptions& opt = {}) {
  const auto m = inst.size();
  if (m > opt.max_units) {
    throw OracleTooLarge("oracle refuses " + std::to_string(m) + " units (limit " +
                         std::to_string(opt.max_units) + ")");
  }
  OracleResult res;
  if (m == 0) {
    res.value = 0.0;
    res.feasible = true;
    return res;
  }
  const auto& units = inst.units;
  const Closure closure = inst.graph ? Closure(*inst.graph) : Closure(DependencyGraph(m));

  struct Candidate {
    CrossLayerDecision d;
    double cost;
    double p;
    double e;
  };
  std::vector<std::vector<Candidate>> cands(m);
  std::vector<double> floor_q(m);  // smallest possible distortion of each unit
  for (std::size_t i = 0; i < m; ++i) {
    const auto ts = window_grid(units[i], opt.time_step);
    const auto as = action_grid(units[i], opt.action_points);
    double pmin = 1.0;
    for (std::size_t xi = 0; xi < ts.size(); ++xi) {
      for (std::size_t yi = xi; yi < ts.size(); ++yi) {
        for (double a : as) {
          const double x = ts[xi];
          const double y = ts[yi];
          const double w = model.cost(units[i], x, y, a);
          if (std::isinf(w)) continue;
          const double p = model.loss(units[i], x, y, a);
          pmin = std::min(pmin, p);
          cands[i].push_back({{x, y, a}, w, p, model.propagation(units[i], x, y, a)});
        }
      }
    }
    floor_q[i] = units[i].q * pmin;
  }
  std::vector<double> suffix_floor(m + 1, 0.0);
  for (std::size_t i = m; i > 0; --i) suffix_floor[i - 1] = suffix_floor[i] + floor_q[i - 1];

  const double cost_cap = inst.budget * static_cast<double>(m) * (1.0 + 1e-12);
  std::vector<const Candidate*> pick(m, nullptr);
  double best_total = kInf;
  double best_cost = kInf;  // ties go to the cheaper schedule
  std::vector<const Candidate*> best_pick;

  auto distortion_of = [&](std::size_t i, const Candidate& c) {
    if (closure.ancestors[i].empty()) return units[i].q * c.p;
    double survive = 1.0 - c.p;
    for (auto k : closure.ancestors[i]) survive *= 1.0 - pick[k]->e;
    return units[i].q - units[i].q * survive;
  };

  auto recurse = [&](auto&& self, std::size_t i, double prev_y, double cost, double total) -> void {
    if (i == m) {
      ++res.leaves;
      if (total < best_total || (total == best_total && cost < best_cost)) {
        best_total = total;
        best_cost = cost;
        best_pick = pick;
      }
      return;
    }
    for (const auto& c : cands[i]) {
      if (c.d.x < prev_y) continue;
      const double next_cost = cost + c.cost;
      if (next_cost > cost_cap) continue;
      pick[i] = &c;
      const double next_total = total + distortion_of(i, c);
      if (next_total + suffix_floor[i + 1] > best_total) continue;
      self(self, i + 1, c.d.y, next_cost, next_total);
    }
  };
  recurse(recurse, 0, -kInf, 0.0, 0.0);

  if (!best_pick.empty()) {
    res.feasible = true;
    res.value = best_total / static_cast<double>(m);
    for (const auto* c : best_pick) res.decisions.push_back(c->d);
  }
  return res;
}

/// Best feasible grid point among the cell corners around a continuous
/// schedule: each of x, y, a is rounded down or up to its grid. This is the
/// continuous solution restricted to the oracle's grid, so the oracle value
/// never exceeds it.
template <TransmissionModel Model>
[[nodiscard]] OracleResult restrict_to_grid(const Instance& inst,
                                            std::span<const CrossLayerDecision> decisions,
                                            const Model& model, const OracleOptions& opt = {}) {
  const auto m = inst.size();
  if (decisions.size() != m) throw std::domain_error("restrict_to_grid: one decision per unit required");
  if (m > opt.max_units + 4) throw OracleTooLarge("restrict_to_grid: too many units");
  const auto& units = inst.units;
  const Closure closure = inst.graph ? Closure(*inst.graph) : Closure(DependencyGraph(m));
  auto around = [](const std::vector<double>& g, double v) {
    auto hi = std::lower_bound(g.begin(), g.end(), v - 1e-12);
    std::vector<double> out;
    if (hi != g.end()) out.push_back(*hi);
    if (hi != g.begin() && (hi == g.end() || *hi > v + 1e-12)) out.push_back(*std::prev(hi));
    return out;
  };
  std::vector<std::vector<CrossLayerDecision>> cells(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto ts = window_grid(units[i], opt.time_step);
    const auto as = action_grid(units[i], opt.action_points);
    for (double x : around(ts, decisions[i].x)) {
      for (double y : around(ts, decisions[i].y)) {
        if (y < x) continue;
        for (double a : around(as, decisions[i].a)) cells[i].push_back({x, y, a});
      }
    }
  }
  OracleResult res;
  std::vector<CrossLayerDecision> pick(m);
  const double cost_cap = inst.budget * static_cast<double>(m) * (1.0 + 1e-12);
  auto recurse = [&](auto&& self, std::size_t i, double prev_y, double cost) -> void {
    if (i == m) {
      ++res.leaves;
      const double v = average_distortion(pick, units, &closure, model);
      if (v < res.value) {
        res.value = v;
        res.decisions = pick;
        res.feasible = true;
      }
      return;
    }
    for (const auto& c : cells[i]) {
      if (c.x < prev_y) continue;
      const double w = model.cost(units[i], c.x, c.y, c.a);
      if (cost + w > cost_cap) continue;
      pick[i] = c;
      self(self, i + 1, c.y, cost + w);
    }
  };
  recurse(recurse, 0, -kInf, 0.0);
  return res;
}

}  // namespace xlo
