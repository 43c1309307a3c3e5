#pragma once

// Pre-wired experiment protocols. Each returns named CSV tables; callers
// decide where they go.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "xlo/config.hpp"
#include "xlo/csv.hpp"
#include "xlo/offline.hpp"
#include "xlo/online.hpp"
#include "xlo/tracegen.hpp"

namespace xlo {

using CsvBundle = std::map<std::string, CsvTable>;

[[nodiscard]] inline std::string seed_list(const std::vector<std::uint64_t>& seeds) {
  return detail::join(seeds, [](std::uint64_t s) { return std::to_string(s); });
}

/// Trace from the config with the given overrides.
[[nodiscard]] inline Instance make_trace(const ExperimentConfig& cfg, std::uint64_t seed,
                                         std::size_t num_dus, double budget, DagKind dag) {
  TraceParams p = cfg.trace;
  p.seed = seed;
  p.num_dus = num_dus;
  p.budget = budget;
  p.dag = dag;
  return generate_trace(p);
}

[[nodiscard]] inline CsvTable solve_table(const SolveReport& rep, const std::string& hash,
                                          const std::string& seed) {
  CsvTable t({"k", "dual_value", "primal_value", "gap", "lambda", "mu_norm", "inner_iters"}, hash, seed);
  for (const auto& r : rep.history) {
    t.add({r.k, r.dual_value, r.primal_value, r.gap, r.lambda, r.mu_norm, r.inner_iterations});
  }
  t.note("final gap=" + format_real(rep.gap) + " primal=" + format_real(rep.primal_value) +
         " dual=" + format_real(rep.dual_value) + " outer=" + std::to_string(rep.outer_iterations) +
         " inner=" + std::to_string(rep.inner_iterations) + " converged=" + (rep.converged ? "1" : "0"));
  return t;
}

template <TransmissionModel Model>
[[nodiscard]] CsvTable decisions_table(const Instance& inst, const SolveReport& rep, const Model& model,
                                       const std::string& hash, const std::string& seed) {
  CsvTable t({"unit", "x", "y", "a", "energy", "dual_x", "dual_y", "dual_a"}, hash, seed);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto& d = rep.decisions[i];
    const auto& g = rep.dual_decisions[i];
    t.add({i + 1, d.x, d.y, d.a, model.cost(inst.units[i], d.x, d.y, d.a), g.x, g.y, g.a});
  }
  return t;
}

[[nodiscard]] inline CsvTable online_table(const OnlineRun& run, const std::string& hash,
                                           const std::string& seed) {
  CsvTable t({"cycle", "policy", "distortion_reduction", "energy_avg", "lambda", "r_norm", "dropped_count"},
             hash, seed);
  for (const auto& c : run.cycles) {
    t.add({c.cycle, to_string(run.policy), c.distortion_reduction, c.energy_avg, c.lambda, c.r_norm,
           c.dropped});
  }
  return t;
}

/// Mean cycle distortion reduction over cycles past `warmup` (all cycles when
/// the run is shorter).
[[nodiscard]] inline double steady_state_reduction(const OnlineRun& run, std::size_t warmup) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : run.cycles) {
    if (c.cycle > warmup) {
      sum += c.distortion_reduction;
      ++n;
    }
  }
  if (n == 0) {
    for (const auto& c : run.cycles) sum += c.distortion_reduction;
    n = run.cycles.size();
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

struct SweepCell {
  Policy policy;
  double budget;
  std::uint64_t seed;
  OnlineRun run;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  CsvTable summary;
};

[[nodiscard]] inline std::string cell_name(const SweepCell& c) {
  return "online_" + to_string(c.policy) + "_W" + format_real(c.budget) + "_s" + std::to_string(c.seed) +
         ".csv";
}

/// Runs every (policy, W, seed) cell. With `fixed` set, that instance is used
/// for every seed with its budget replaced by W; otherwise a fresh trace is
/// generated per seed.
[[nodiscard]] inline SweepResult online_sweep(const ExperimentConfig& cfg, DagKind dag,
                                              const std::optional<Instance>& fixed = std::nullopt) {
  const auto hash = hash_hex(config_hash(cfg));
  SweepResult out{{}, CsvTable({"policy", "W", "mean_distortion_reduction", "energy_avg", "seeds"}, hash,
                               seed_list(cfg.seeds))};
  LearnerOptions lo = cfg.learner;
  lo.cycle_len = effective_cycle_len(fixed ? cfg.trace.dag : dag, cfg.trace.cycle_len);
  for (double w : cfg.budgets) {
    for (std::uint64_t seed : cfg.seeds) {
      Instance inst = fixed ? *fixed : make_trace(cfg, seed, cfg.online_units, w, dag);
      inst.budget = w;
      for (Policy p : cfg.policies) out.cells.push_back({p, w, seed, run_online(inst, cfg.model, p, lo)});
    }
  }
  for (Policy p : cfg.policies) {
    for (double w : cfg.budgets) {
      double red = 0.0;
      double energy = 0.0;
      std::size_t n = 0;
      for (const auto& c : out.cells) {
        if (c.policy != p || c.budget != w) continue;
        red += steady_state_reduction(c.run, cfg.warmup_cycles);
        energy += c.run.energy_avg;
        ++n;
      }
      out.summary.add({to_string(p), w, red / static_cast<double>(n), energy / static_cast<double>(n), n});
    }
  }
  return out;
}

template <class Solve>
CsvBundle offline_experiment(const ExperimentConfig& cfg, const std::string& name, DagKind dag,
                             Solve&& solve) {
  const auto hash = hash_hex(config_hash(cfg));
  const auto seed = cfg.seeds.front();
  const auto s = std::to_string(seed);
  const Instance inst = make_trace(cfg, seed, cfg.solve_units, cfg.trace.budget, dag);
  const SolveReport rep = solve(inst);
  const bool inner = dag != DagKind::none;
  std::vector<std::string> cols{"iteration", "dual", "primal", "gap"};
  if (inner) cols.emplace_back("inner_iterations");
  CsvTable curve(cols, hash, s);
  for (const auto& r : rep.history) {
    std::vector<CsvCell> row{r.k, r.dual_value, r.primal_value, r.gap};
    if (inner) row.emplace_back(r.inner_iterations);
    curve.add(std::move(row));
  }
  CsvTable sched({"unit", "dual_x", "dual_y", "dual_a", "primal_x", "primal_y", "primal_a"}, hash, s);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto& g = rep.dual_decisions[i];
    const auto& d = rep.decisions[i];
    sched.add({i + 1, g.x, g.y, g.a, d.x, d.y, d.a});
  }
  CsvBundle b;
  b.emplace(name + ".csv", std::move(curve));
  b.emplace(name + "_schedule.csv", std::move(sched));
  return b;
}

[[nodiscard]] inline std::vector<std::string> experiment_names() {
  return {"fig5", "fig6", "fig7", "fig8", "fig9"};
}

/// fig5: independent M-unit solve. fig6: the same with a random in-cycle DAG
/// (or the configured DAG kind). fig7 / fig8: steady-state reduction per W
/// and policy, independent and DAG traces. fig9: per-cycle series at W = 10 on
/// the DAG trace.
[[nodiscard]] inline CsvBundle run_experiment(const std::string& name, const ExperimentConfig& cfg) {
  const auto hash = hash_hex(config_hash(cfg));
  const DagKind dag_kind = cfg.trace.dag == DagKind::none ? DagKind::random : cfg.trace.dag;
  if (name == "fig5") {
    return offline_experiment(cfg, name, DagKind::none, [&](const Instance& inst) {
      return solve_independent(inst, cfg.model, cfg.solver);
    });
  }
  if (name == "fig6") {
    return offline_experiment(cfg, name, dag_kind, [&](const Instance& inst) {
      return solve_interdependent(inst, cfg.model, cfg.solver);
    });
  }
  if (name == "fig7" || name == "fig8") {
    const auto sweep = online_sweep(cfg, name == "fig7" ? DagKind::none : dag_kind);
    CsvTable t({"W", "policy", "mean_distortion_reduction", "energy_avg"}, hash, seed_list(cfg.seeds));
    for (const auto& row : sweep.summary.rows()) t.add({row[1], row[0], row[2], row[3]});
    CsvBundle b;
    b.emplace(name + ".csv", std::move(t));
    return b;
  }
  if (name == "fig9") {
    ExperimentConfig c = cfg;
    c.budgets = {10.0};
    const auto sweep = online_sweep(c, dag_kind);
    CsvTable t({"cycle", "policy", "distortion_reduction", "energy"}, hash, seed_list(cfg.seeds));
    for (Policy p : cfg.policies) {
      std::map<std::size_t, std::pair<double, double>> sums;
      std::map<std::size_t, std::size_t> counts;
      for (const auto& cell : sweep.cells) {
        if (cell.policy != p) continue;
        for (const auto& cy : cell.run.cycles) {
          sums[cy.cycle].first += cy.distortion_reduction;
          sums[cy.cycle].second += cy.energy_avg;
          ++counts[cy.cycle];
        }
      }
      for (const auto& [cycle, s] : sums) {
        const auto n = static_cast<double>(counts[cycle]);
        t.add({cycle, to_string(p), s.first / n, s.second / n});
      }
    }
    CsvBundle b;
    b.emplace(name + ".csv", std::move(t));
    return b;
  }
  throw std::invalid_argument("unknown experiment '" + name + "' (expected fig5, fig6, fig7, fig8 or fig9)");
}

}  // namespace xlo
