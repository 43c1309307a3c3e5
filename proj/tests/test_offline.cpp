#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "xlo/offline.hpp"
#include "xlo/rng.hpp"
#include "xlo/tracegen.hpp"

using namespace xlo;

namespace {

const ExponentialShannonModel model{{2e-3, 2e5}, 1000.0};

DataUnit default_du() { return {1, 100.0, 10.0, 0.0, 0.05, 0.5, 1.0}; }

Instance trace(std::size_t m, std::uint64_t seed, double budget = 10.0, DagKind dag = DagKind::none) {
  TraceParams p;
  p.seed = seed;
  p.num_dus = m;
  p.budget = budget;
  p.dag = dag;
  return generate_trace(p);
}

// Reference 1-D minimizer: dense scan then ternary refinement around the best cell.
template <class F>
std::pair<double, double> reference_min(F f, double lo, double hi, int cells = 20000) {
  int best = 0;
  double best_v = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= cells; ++k) {
    const double v = f(lo + (hi - lo) * k / cells);
    if (v <= best_v) {
      best_v = v;
      best = k;
    }
  }
  double a = lo + (hi - lo) * std::max(best - 1, 0) / cells;
  double b = lo + (hi - lo) * std::min(best + 1, cells) / cells;
  for (int it = 0; it < 200; ++it) {
    const double m1 = a + (b - a) / 3;
    const double m2 = b - (b - a) / 3;
    if (f(m1) < f(m2)) {
      b = m2;
    } else {
      a = m1;
    }
  }
  const double x = 0.5 * (a + b);
  return f(x) < best_v ? std::pair{x, f(x)} : std::pair{lo + (hi - lo) * best / cells, best_v};
}

double total_distortion(const std::vector<CrossLayerDecision>& dec, const std::vector<DataUnit>& units,
                        const Closure& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < units.size(); ++i) s += dag_distortion(i, dec, units, c, model);
  return s;
}

}  // namespace

TEST(LowerOptimization, FreeResourceTakesFullPayload) {
  const auto du = default_du();
  const auto r = lower_optimization(du, 0.0, 0.0, 0.05, 1, model);
  EXPECT_EQ(r.a, du.l);
}

TEST(LowerOptimization, DegenerateWindowSendsNothing) {
  const auto du = default_du();
  const auto r = lower_optimization(du, 1.0, 0.02, 0.02, 4, model);
  EXPECT_EQ(r.a, 0.0);
  EXPECT_DOUBLE_EQ(r.value, du.q / 4.0);
}

TEST(LowerOptimization, MatchesReferenceSearch) {
  for (double c : {0.5, 1.0, 1.5}) {
    auto du = default_du();
    du.c = c;
    const double lambda = 1.0;
    auto f = [&](double a) { return du.q * loss_fraction(du.theta, du.l, a) + lambda * model.cost(du, 0.0, 0.05, a); };
    const auto ref = reference_min(f, 0.0, du.l);
    const auto r = lower_optimization(du, lambda, 0.0, 0.05, 1, model);
    EXPECT_NEAR(r.a, ref.first, 1e-6) << "c = " << c;
    EXPECT_NEAR(r.value, ref.second, 1e-6);
  }
}

TEST(LowerOptimization, InvertedWindowThrows) {
  EXPECT_THROW((void)lower_optimization(default_du(), 1.0, 0.03, 0.02, 1, model), std::domain_error);
}

TEST(UpperOptimization, ResourceFreeTakesMaximalWindow) {
  const auto du = default_du();
  const auto r = upper_optimization(du, 0.0, 0.0, 0.0, 1, model);
  EXPECT_EQ(r.decision.x, du.t);
  EXPECT_EQ(r.decision.y, du.d);
  EXPECT_EQ(r.decision.a, du.l);
}

TEST(UpperOptimization, LargePreviousFactorPushesWindowLate) {
  const auto du = default_du();
  const auto r = upper_optimization(du, 1.0, 1e6, 0.0, 1, model);
  EXPECT_NEAR(r.decision.y, du.d, 1e-12);
  EXPECT_NEAR(r.decision.x, du.d - r.decision.duration(), 1e-12);
  EXPECT_GT(r.decision.x, du.t);
}

TEST(UpperOptimization, MatchesGridSearch) {
  Rng rng(17);
  for (int trial = 0; trial < 8; ++trial) {
    auto du = default_du();
    du.c = rng.uniform(0.5, 1.5);
    const double lambda = rng.uniform(0.1, 3.0);
    const double mp = rng.uniform(0.0, 2000.0);
    const double mn = rng.uniform(0.0, 2000.0);
    const auto r = upper_optimization(du, lambda, mp, mn, 1, model);
    EXPECT_TRUE(respects_box(du, r.decision, 1e-12));
    // 1 ms grid over (x, y), payload by dense scan.
    double grid_best = std::numeric_limits<double>::infinity();
    for (int xi = 0; xi <= 50; ++xi) {
      for (int yi = xi; yi <= 50; ++yi) {
        const double x = 1e-3 * xi;
        const double y = 1e-3 * yi;
        double f = std::numeric_limits<double>::infinity();
        for (int ai = 0; ai <= 400; ++ai) {
          const double a = du.l * ai / 400.0;
          const double w = model.cost(du, x, y, a);
          if (std::isinf(w)) continue;
          f = std::min(f, du.q * loss_fraction(du.theta, du.l, a) + lambda * w);
        }
        grid_best = std::min(grid_best, f - mp * x + mn * y);
      }
    }
    EXPECT_LE(r.objective, grid_best + 1e-9);
    EXPECT_LE(grid_best - r.objective, 0.01 * std::max(1.0, std::abs(grid_best))) << "trial " << trial;
  }
}

TEST(PriceUpdate, Values) {
  EXPECT_NEAR(price_update(0.5, 12.0, 10.0, 0.1), 0.7, 1e-15);
  EXPECT_EQ(price_update(0.0, 8.0, 10.0, 0.1), 0.0);
  EXPECT_EQ(price_update(1.0, 10.0, 10.0, 123.0), 1.0);
}

TEST(NifUpdate, Values) {
  EXPECT_EQ(nif_update(0.2, 3.0, 5.0, 0.1), 0.0);
  EXPECT_EQ(nif_update(0.2, 5.0, 5.0, 0.1), 0.2);
  EXPECT_NEAR(nif_update(0.1, 6.0, 5.0, 0.2), 0.3, 1e-15);
}

TEST(DagSensitivity, ReducesToOwnDistortionWithoutRelatives) {
  const Closure c(DependencyGraph(2));
  std::vector<DataUnit> units{default_du(), default_du()};
  std::vector<CrossLayerDecision> dec{{0.0, 0.05, 3.0}, {0.0, 0.05, 3.0}};
  const auto s = dag_sensitivity(0, dec, units, c, model);
  for (double a : {0.0, 1.0, 5.5, 10.0}) EXPECT_EQ(s(0.0, 0.05, a), 100.0 * loss_fraction(0.5, 10.0, a));
  const auto lonely = lower_optimization_with(s, units[0], 1.0, 0.0, 0.05, 2, model);
  const auto plain = lower_optimization(units[0], 1.0, 0.0, 0.05, 2, model);
  EXPECT_EQ(lonely.a, plain.a);
}

TEST(DagSensitivity, LostAncestorLeavesOnlyRelief) {
  const Closure c(DependencyGraph(3, {{1, 0}, {2, 1}}));
  std::vector<DataUnit> units(3, default_du());
  std::vector<CrossLayerDecision> dec{{0.0, 0.05, 0.0}, {0.0, 0.05, 4.0}, {0.0, 0.05, 4.0}};
  const auto s = dag_sensitivity(1, dec, units, c, model);
  EXPECT_EQ(s.upstream, 0.0);
  // Downstream relief is itself scaled by the lost ancestor.
  EXPECT_EQ(s(0.0, 0.05, 2.0), 0.0);
}

TEST(DagSensitivity, DifferencesMatchTotalDistortion) {
  const Closure c(DependencyGraph(3, {{1, 0}, {2, 1}}));
  std::vector<DataUnit> units(3, default_du());
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<CrossLayerDecision> dec(3);
    for (auto& d : dec) d = {0.0, 0.05, rng.uniform(0.0, 10.0)};
    const std::size_t i = static_cast<std::size_t>(trial % 3);
    const auto s = dag_sensitivity(i, dec, units, c, model);
    const double h = 1e-4;
    auto moved = dec;
    moved[i].a = std::min(10.0, dec[i].a + h);
    const double d_total = total_distortion(moved, units, c) - total_distortion(dec, units, c);
    const double d_sens = s(0.0, 0.05, moved[i].a) - s(0.0, 0.05, dec[i].a);
    EXPECT_NEAR(d_sens, d_total, 1e-6);
  }
}

TEST(RecoverPrimal, FeasibleInputUnchanged) {
  auto inst = trace(3, 1, 1e6);
  std::vector<CrossLayerDecision> dec;
  for (const auto& du : inst.units) dec.push_back({du.t, du.t + 0.5 * du.lifetime(), 5.0});
  std::sort(dec.begin(), dec.end(), [](auto& a, auto& b) { return a.x < b.x; });
  // Ensure FIFO holds for this input.
  for (std::size_t i = 1; i < dec.size(); ++i) {
    if (dec[i].x < dec[i - 1].y) GTEST_SKIP() << "trace overlaps";
  }
  const auto rec = recover_primal(inst, dec, model, 1.0);
  EXPECT_EQ(rec.decisions, dec);
  EXPECT_EQ(rec.payload_scale, 1.0);
  EXPECT_DOUBLE_EQ(rec.value, average_distortion(dec, inst.units, nullptr, model));
}

TEST(RecoverPrimal, ClipsOverlap) {
  Instance inst;
  inst.budget = 1e6;
  inst.units = {{1, 100.0, 10.0, 0.0, 0.05, 0.5, 1.0}, {2, 100.0, 10.0, 0.01, 0.06, 0.5, 1.0}};
  std::vector<CrossLayerDecision> dec{{0.0, 0.04, 10.0}, {0.01, 0.06, 10.0}};
  const auto rec = recover_primal(inst, dec, model, 0.5);
  EXPECT_EQ(rec.decisions[1].x, 0.04);
  EXPECT_GE(rec.decisions[1].x, rec.decisions[0].y);
  EXPECT_TRUE(respects_box(inst.units[1], rec.decisions[1]));
}

TEST(RecoverPrimal, BisectionHitsBudget) {
  auto inst = trace(4, 2, 1.0);
  std::vector<CrossLayerDecision> dec;
  double prev = 0.0;
  for (const auto& du : inst.units) {
    const double x = std::max(du.t, prev);
    dec.push_back({x, std::max(x, du.d - 0.01), 3.0});
    prev = dec.back().y;
  }
  const double usage = average_cost(dec, inst.units, model);
  inst.budget = usage / 2.0;
  const auto rec = recover_primal(inst, dec, model, 1.0);
  EXPECT_LE(rec.average_cost, inst.budget);
  EXPECT_LT(std::abs(rec.average_cost - inst.budget) / inst.budget, 1e-4);
  EXPECT_LT(rec.payload_scale, 1.0);
}

TEST(SolveIndependent, SingleUnitSlackBudget) {
  auto inst = trace(1, 4, 1e9);
  const auto rep = solve_independent(inst, model);
  const auto& du = inst.units[0];
  EXPECT_EQ(rep.decisions[0].x, du.t);
  EXPECT_EQ(rep.decisions[0].y, du.d);
  EXPECT_EQ(rep.decisions[0].a, du.l);
  EXPECT_EQ(rep.final_state.lambda, 0.0);
  EXPECT_NEAR(rep.gap, 0.0, 1e-9);
}

TEST(SolveIndependent, HugeBudgetSendsEverything) {
  auto inst = trace(10, 5, 1e9);
  const auto rep = solve_independent(inst, model);
  for (std::size_t i = 0; i < inst.size(); ++i) EXPECT_EQ(rep.decisions[i].a, inst.units[i].l);
}

TEST(SolveIndependent, EmptyInstance) {
  Instance inst;
  inst.budget = 1.0;
  const auto rep = solve_independent(inst, model);
  EXPECT_TRUE(rep.converged);
  EXPECT_TRUE(rep.decisions.empty());
}

TEST(SolveIndependent, FeasibleAndWeaklyDual) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto inst = trace(10, seed);
    const auto rep = solve_independent(inst, model);
    EXPECT_LE(rep.dual_value, rep.primal_value + 1e-6);
    EXPECT_LE(average_cost(rep.decisions, inst.units, model), inst.budget + 1e-6);
    for (std::size_t i = 0; i < inst.size(); ++i) {
      EXPECT_TRUE(respects_box(inst.units[i], rep.decisions[i], 1e-12));
      if (i > 0) {
        EXPECT_GE(rep.decisions[i].x, rep.decisions[i - 1].y);
      }
    }
    for (const auto& h : rep.history) {
      EXPECT_GE(h.lambda, 0.0);
      EXPECT_LE(h.dual_value, h.primal_value + 1e-6);
    }
  }
}

TEST(DualLoop, MultipliersNonnegativeAfterEveryUpdate) {
  auto inst = trace(10, 6);
  std::size_t calls = 0;
  SolverOptions opt;
  opt.max_outer = 300;
  const auto rep = run_dual_loop(inst, model, opt, nullptr,
                                 [&](const DualState& st, std::vector<CrossLayerDecision>& dec) {
                                   ++calls;
                                   EXPECT_GE(st.lambda, 0.0);
                                   for (double mu : st.mu) EXPECT_GE(mu, 0.0);
                                   return detail::solve_independent_block(inst, model, st, dec, opt);
                                 });
  EXPECT_EQ(calls, rep.outer_iterations);
  EXPECT_GE(rep.final_state.lambda, 0.0);
}

TEST(SolveInterdependent, EmptyDagMatchesIndependent) {
  auto inst = trace(6, 7);
  inst.graph = DependencyGraph(6);
  const auto a = solve_independent(inst, model);
  const auto b = solve_interdependent(inst, model);
  ASSERT_EQ(a.decisions.size(), b.decisions.size());
  for (std::size_t i = 0; i < a.decisions.size(); ++i) {
    EXPECT_NEAR(a.decisions[i].x, b.decisions[i].x, 1e-6);
    EXPECT_NEAR(a.decisions[i].y, b.decisions[i].y, 1e-6);
    EXPECT_NEAR(a.decisions[i].a, b.decisions[i].a, 1e-5);
  }
  EXPECT_NEAR(a.primal_value, b.primal_value, 1e-6 * a.primal_value);
}

TEST(SolveInterdependent, SweepsNeverIncreaseObjective) {
  auto inst = trace(10, 8, 10.0, DagKind::random);
  std::vector<std::vector<double>> traces;
  SolverOptions opt;
  opt.max_outer = 200;
  (void)solve_interdependent(inst, model, opt, &traces);
  ASSERT_FALSE(traces.empty());
  for (const auto& t : traces) {
    for (std::size_t s = 1; s < t.size(); ++s) EXPECT_LE(t[s], t[s - 1] + 1e-9);
  }
}

TEST(SolveInterdependent, WeakDualityAndFeasibility) {
  auto inst = trace(10, 9, 10.0, DagKind::random);
  const auto rep = solve_interdependent(inst, model);
  EXPECT_LE(rep.dual_value, rep.primal_value + 1e-6);
  EXPECT_LE(average_cost(rep.decisions, inst.units, model), inst.budget + 1e-6);
  for (std::size_t i = 0; i < inst.size(); ++i) EXPECT_TRUE(respects_box(inst.units[i], rep.decisions[i], 1e-12));
}

TEST(SolveInterdependent, CyclicGraphRejected) {
  auto inst = trace(3, 1);
  inst.graph = DependencyGraph(3, {{1, 0}, {0, 1}});
  EXPECT_THROW((void)solve_interdependent(inst, model), std::domain_error);
}
