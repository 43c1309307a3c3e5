#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace xlo {

// One schedulable application unit. Times are seconds; sizes and actions are
// in the configured size unit (kilobits by default).
struct DataUnit {
  std::size_t index = 1;  // 1-based FIFO position
  double q = 1.0;         // distortion impact
  double l = 1.0;         // size
  double t = 0.0;         // ready time
  double d = 0.0;         // deadline
  double theta = 0.5;     // distortion exponent per size unit
  double c = 1.0;         // average channel gain

  [[nodiscard]] double lifetime() const { return d - t; }
  friend bool operator==(const DataUnit&, const DataUnit&) = default;
};

// Schedule window [x, y] and payload a for one data unit.
struct CrossLayerDecision {
  double x = 0.0;
  double y = 0.0;
  double a = 0.0;

  [[nodiscard]] double duration() const { return y - x; }
  friend bool operator==(const CrossLayerDecision&, const CrossLayerDecision&) = default;
};

[[nodiscard]] inline bool respects_box(const DataUnit& du, const CrossLayerDecision& dec,
                                       double tol = 0.0) {
  return dec.x >= du.t - tol && dec.x <= dec.y + tol && dec.y <= du.d + tol &&
         dec.a >= -tol && dec.a <= du.l + tol;
}

/// Dependency DAG over FIFO positions (0-based). An edge {from, to} means the
/// unit at `from` depends on the unit at `to`; `to` is an ancestor of `from`.
class DependencyGraph {
 public:
  struct Edge {
    std::size_t from;
    std::size_t to;
    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
  };

  DependencyGraph() = default;
  explicit DependencyGraph(std::size_t nodes, std::vector<Edge> edges = {})
      : nodes_(nodes), edges_(std::move(edges)) {
    for (const auto& e : edges_) {
      if (e.from >= nodes_ || e.to >= nodes_) {
        throw std::out_of_range("dependency edge references a unit outside the graph");
      }
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  }

  [[nodiscard]] std::size_t size() const { return nodes_; }
  [[nodiscard]] const std::vector<Edge>& edges() const { return edges_; }
  [[nodiscard]] bool empty() const { return edges_.empty(); }

  [[nodiscard]] std::vector<std::size_t> parents(std::size_t i) const {
    std::vector<std::size_t> out;
    for (const auto& e : edges_) {
      if (e.from == i) out.push_back(e.to);
    }
    return out;
  }

  [[nodiscard]] bool acyclic() const {
    std::vector<std::size_t> indeg(nodes_, 0);
    std::vector<std::vector<std::size_t>> out(nodes_);
    for (const auto& e : edges_) {
      out[e.to].push_back(e.from);
      ++indeg[e.from];
    }
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < nodes_; ++i) {
      if (indeg[i] == 0) ready.push_back(i);
    }
    std::size_t seen = 0;
    while (!ready.empty()) {
      const auto n = ready.back();
      ready.pop_back();
      ++seen;
      for (auto m : out[n]) {
        if (--indeg[m] == 0) ready.push_back(m);
      }
    }
    return seen == nodes_;
  }

  friend bool operator==(const DependencyGraph&, const DependencyGraph&) = default;

 private:
  std::size_t nodes_ = 0;
  std::vector<Edge> edges_;
};

// Transitive ancestors {k : k precedes i}. Safe on cyclic input (each node is
// visited once), though the result is only meaningful for a DAG.
[[nodiscard]] inline std::set<std::size_t> topological_ancestors(const DependencyGraph& g,
                                                                 std::size_t i) {
  if (i >= g.size()) throw std::out_of_range("ancestor query outside the graph");
  std::set<std::size_t> seen;
  std::vector<std::size_t> stack{i};
  while (!stack.empty()) {
    const auto n = stack.back();
    stack.pop_back();
    for (const auto& e : g.edges()) {
      if (e.from == n && seen.insert(e.to).second) stack.push_back(e.to);
    }
  }
  seen.erase(i);
  return seen;
}

[[nodiscard]] inline std::set<std::size_t> topological_descendants(const DependencyGraph& g,
                                                                   std::size_t i) {
  if (i >= g.size()) throw std::out_of_range("descendant query outside the graph");
  std::set<std::size_t> seen;
  std::vector<std::size_t> stack{i};
  while (!stack.empty()) {
    const auto n = stack.back();
    stack.pop_back();
    for (const auto& e : g.edges()) {
      if (e.to == n && seen.insert(e.from).second) stack.push_back(e.from);
    }
  }
  seen.erase(i);
  return seen;
}

/// Precomputed ancestor/descendant closure, indexed by FIFO position.
struct Closure {
  std::vector<std::vector<std::size_t>> ancestors;
  std::vector<std::vector<std::size_t>> descendants;

  Closure() = default;
  explicit Closure(const DependencyGraph& g)
      : ancestors(g.size()), descendants(g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto anc = topological_ancestors(g, i);
      ancestors[i].assign(anc.begin(), anc.end());
      for (auto k : anc) descendants[k].push_back(i);
    }
  }

  [[nodiscard]] bool is_ancestor(std::size_t k, std::size_t i) const {
    const auto& a = ancestors[i];
    return std::binary_search(a.begin(), a.end(), k);
  }
};

struct Instance {
  std::vector<DataUnit> units;             // FIFO order
  std::optional<DependencyGraph> graph;    // absent for independent units
  double budget = 1.0;                     // average resource per unit (W)

  [[nodiscard]] std::size_t size() const { return units.size(); }
  [[nodiscard]] bool has_dependencies() const { return graph && !graph->empty(); }
  friend bool operator==(const Instance&, const Instance&) = default;
};

struct Violation {
  std::optional<std::size_t> index;  // 1-based unit index when unit-specific
  std::string what;
};

struct ValidationResult {
  std::vector<Violation> violations;
  [[nodiscard]] bool ok() const { return violations.empty(); }
  [[nodiscard]] bool mentions(const std::string& text) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.what == text; });
  }
};

[[nodiscard]] inline ValidationResult validate_instance(const Instance& inst) {
  ValidationResult out;
  auto flag = [&](std::optional<std::size_t> idx, const char* what) {
    out.violations.push_back({idx, what});
  };
  if (!(inst.budget > 0.0) || !std::isfinite(inst.budget)) flag(std::nullopt, "budget not positive");
  for (std::size_t i = 0; i < inst.units.size(); ++i) {
    const auto& du = inst.units[i];
    const auto idx = i + 1;
    if (du.index != idx) flag(idx, "index out of sequence");
    if (!(du.d >= du.t)) flag(idx, "deadline before ready time");
    if (!(du.q > 0.0)) flag(idx, "distortion impact not positive");
    if (!(du.l > 0.0)) flag(idx, "size not positive");
    if (!(du.theta > 0.0)) flag(idx, "distortion exponent not positive");
    if (!(du.c > 0.0)) flag(idx, "channel gain not positive");
    if (i > 0 && du.t < inst.units[i - 1].t) flag(idx, "ready times not non-decreasing");
  }
  if (inst.graph) {
    const auto& g = *inst.graph;
    if (g.size() != inst.units.size()) flag(std::nullopt, "graph size mismatch");
    if (!g.acyclic()) flag(std::nullopt, "graph not acyclic");
    for (const auto& e : g.edges()) {
      if (e.to >= e.from) flag(e.from + 1, "dependency on a later unit");
    }
  }
  return out;
}

/// Multipliers of the relaxed problem: the resource price and one neighboring
/// impact factor per consecutive pair.
struct DualState {
  double lambda = 0.0;
  std::vector<double> mu;
  std::size_t iteration = 1;

  // mu_{i-1} and mu_i for unit i (0-based), zero at both ends.
  [[nodiscard]] double mu_before(std::size_t i) const { return i == 0 ? 0.0 : mu[i - 1]; }
  [[nodiscard]] double mu_after(std::size_t i) const { return i < mu.size() ? mu[i] : 0.0; }
};

/// Diminishing step schedule base / k^power.
struct StepSchedule {
  double base = 0.5;
  double power = 1.0;
  [[nodiscard]] double at(std::size_t k) const {
    return base / std::pow(static_cast<double>(k), power);
  }
};

struct IterationRecord {
  std::size_t k = 0;
  double dual_value = 0.0;    // best dual so far
  double primal_value = 0.0;  // best feasible primal so far
  double gap = 0.0;
  double lambda = 0.0;
  double mu_norm = 0.0;
  std::size_t inner_iterations = 0;
};

struct SolveReport {
  std::vector<CrossLayerDecision> decisions;  // best feasible point
  std::vector<CrossLayerDecision> dual_decisions;  // minimizer at the final multipliers
  double dual_value = 0.0;
  double primal_value = 0.0;
  double gap = 0.0;
  std::size_t outer_iterations = 0;
  std::size_t inner_iterations = 0;
  bool converged = false;
  DualState final_state;
  std::vector<IterationRecord> history;
};

// (primal - dual) / |dual|, guarded near zero.
[[nodiscard]] inline double relative_gap(double primal, double dual) {
  const double scale = std::max(std::abs(dual), 1e-12);
  return (primal - dual) / scale;
}

}  // namespace xlo
