#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "xlo/online.hpp"
#include "xlo/rng.hpp"
#include "xlo/tracegen.hpp"

using namespace xlo;

namespace {

const ExponentialShannonModel model{{2e-3, 2e5}, 1000.0};

DataUnit default_du() { return {1, 100.0, 10.0, 0.0, 0.05, 0.5, 1.0}; }

Instance trace(std::size_t n, std::uint64_t seed, double budget = 10.0, DagKind dag = DagKind::none) {
  TraceParams p;
  p.seed = seed;
  p.num_dus = n;
  p.budget = budget;
  p.dag = dag;
  return generate_trace(p);
}

// Relative value iteration on a discretized backlog grid at a frozen price.
// Arrival gaps, impacts and channels are drawn from the trace distributions;
// the per-unit cost is the payload-optimized D + lambda w for the window
// [t + s, t + u], and the next state is max(u - gap, 0).
struct Rvia {
  double lifetime = 0.05;
  std::size_t grid = 41;
  std::vector<double> v;  // relative values on the grid, v[0] = 0
  double rho = 0.0;       // average cost per unit

  double state(std::size_t j) const { return lifetime * static_cast<double>(j) / static_cast<double>(grid - 1); }
  double at(double s) const {
    const double u = std::clamp(s / lifetime, 0.0, 1.0) * static_cast<double>(grid - 1);
    const auto j = std::min(static_cast<std::size_t>(u), grid - 2);
    const double f = u - static_cast<double>(j);
    return v[j] * (1.0 - f) + v[j + 1] * f;
  }

  void solve(double lambda, std::size_t samples, std::size_t sweeps, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> gap(samples);
    std::vector<std::vector<double>> g(samples, std::vector<double>(grid));
    for (std::size_t n = 0; n < samples; ++n) {
      DataUnit du = default_du();
      du.q = rng.uniform(50.0, 150.0);
      du.c = rng.uniform(0.5, 1.5);
      gap[n] = rng.exponential(0.05);
      for (std::size_t k = 0; k < grid; ++k) g[n][k] = lower_optimization(du, lambda, 0.0, state(k), 1, model).value;
    }
    v.assign(grid, 0.0);
    for (std::size_t it = 0; it < sweeps; ++it) {
      std::vector<double> next(grid);
      for (std::size_t j = 0; j < grid; ++j) {
        double acc = 0.0;
        for (std::size_t n = 0; n < samples; ++n) {
          double best = kInf;
          for (std::size_t k = j; k < grid; ++k) {
            best = std::min(best, g[n][k - j] + at(std::max(state(k) - gap[n], 0.0)));
          }
          acc += best;
        }
        next[j] = acc / static_cast<double>(samples);
      }
      rho = next[0];
      for (std::size_t j = 0; j < grid; ++j) v[j] = next[j] - rho;
    }
  }

  // Least-squares fit onto the learner's feature basis.
  ValueModel fit(std::size_t order, double scale) const {
    ValueModel vm(order, scale);
    std::vector<std::vector<double>> a(order, std::vector<double>(order + 1, 0.0));
    for (std::size_t j = 0; j < grid; ++j) {
      const auto f = vm.features(state(j));
      for (std::size_t r = 0; r < order; ++r) {
        for (std::size_t c = 0; c < order; ++c) a[r][c] += f[r] * f[c];
        a[r][order] += f[r] * v[j];
      }
    }
    for (std::size_t i = 0; i < order; ++i) {
      for (std::size_t k = i + 1; k < order; ++k) {
        const double m = a[k][i] / a[i][i];
        for (std::size_t c = i; c <= order; ++c) a[k][c] -= m * a[i][c];
      }
    }
    for (std::size_t i = order; i-- > 0;) {
      double s = a[i][order];
      for (std::size_t c = i + 1; c < order; ++c) s -= a[i][c] * vm.r[c];
      vm.r[i] = s / a[i][i];
    }
    return vm;
  }
};

// Average D + lambda w of the greedy policy under a fixed value model.
double average_priced_cost(const Instance& inst, double lambda, const ValueModel& vm) {
  double s = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto& du = inst.units[i];
    const double t_next = i + 1 < inst.size() ? inst.units[i + 1].t : kInf;
    const auto od = solve_online_du(du, s, lambda, vm, t_next, model);
    const auto& d = od.decision;
    total += od.dropped ? du.q : du.q * model.loss(du, d.x, d.y, d.a) + lambda * model.cost(du, d.x, d.y, d.a);
    s = state_transition(d.y, t_next);
    if (!std::isfinite(s)) s = 0.0;
  }
  return total / static_cast<double>(inst.size());
}

}  // namespace

TEST(StateTransition, Values) {
  EXPECT_EQ(state_transition(5.0, 7.0), 0.0);
  EXPECT_EQ(state_transition(5.0, 5.0), 0.0);
  EXPECT_EQ(state_transition(7.0, 5.0), 2.0);
}

TEST(ValueEstimate, Values) {
  const ValueModel any(std::vector<double>{3.0, -2.0, 7.0}, 1.0);
  EXPECT_EQ(value_estimate(any, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(value_estimate(ValueModel(std::vector<double>{1.0, 1.0}, 1.0), 2.0), 4.0);
  EXPECT_DOUBLE_EQ(value_estimate(ValueModel(std::vector<double>{3.0}, 1.0), 0.5), 1.5);
  EXPECT_THROW((void)value_estimate(any, -0.1), std::domain_error);
}

TEST(ValueEstimate, ZeroAtOriginForRandomCoefficients) {
  Rng rng(1);
  for (int s = 0; s < 100; ++s) {
    std::vector<double> r(1 + s % 6);
    for (auto& c : r) c = rng.uniform(-1e3, 1e3);
    EXPECT_EQ(ValueModel(r, rng.uniform(0.01, 1.0))(0.0), 0.0);
  }
}

TEST(ValueUpdate, Values) {
  const ValueModel vm(std::vector<double>{2.0}, 1.0);
  EXPECT_DOUBLE_EQ(value_update(vm, 0.5, 1.0, 4.0, UpdateMode::verbatim).r[0], 3.0);
  EXPECT_DOUBLE_EQ(value_update(vm, 0.5, 0.0, 4.0, UpdateMode::verbatim).r[0], 1.0);
  EXPECT_EQ(value_update(vm, 0.0, 1.0, 4.0, UpdateMode::verbatim), vm);
  EXPECT_EQ(value_update(vm, 0.0, 1.0, 4.0, UpdateMode::semigradient), vm);
  // Semi-gradient: 2 + 0.5 (4 - 2) 1 = 3.
  EXPECT_DOUBLE_EQ(value_update(vm, 0.5, 1.0, 4.0, UpdateMode::semigradient).r[0], 3.0);
}

TEST(OnlinePriceUpdate, Values) {
  EXPECT_NEAR(online_price_update(0.5, 0.1, 12.0, 10.0), 0.7, 1e-15);
  EXPECT_EQ(online_price_update(0.0, 0.1, 8.0, 10.0), 0.0);
  EXPECT_EQ(online_price_update(1.0, 9.0, 10.0, 10.0), 1.0);
}

TEST(LearnerOptions, StepSchedulesSeparateTimescales) {
  const LearnerOptions o;
  EXPECT_NO_THROW(o.validate());
  EXPECT_LT(o.kappa(100000) / o.gamma(100000), o.kappa(100) / o.gamma(100));
  LearnerOptions bad = o;
  bad.order = 7;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(SolveOnlineDu, ZeroValueMatchesPinnedLowerSolve) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto du = default_du();
    du.c = rng.uniform(0.5, 1.5);
    const double s = rng.uniform(0.0, 0.04);
    const double lambda = rng.uniform(0.1, 4.0);
    const auto od = solve_online_du(du, s, lambda, ValueModel(3, 0.05), du.t + rng.uniform(0.0, 0.1), model);
    EXPECT_EQ(od.decision.x, s + du.t);
    EXPECT_EQ(od.decision.y, du.d);
    const auto low = lower_optimization(du, lambda, s + du.t, du.d, 1, model);
    EXPECT_NEAR(od.decision.a, low.a, 1e-7);
  }
}

TEST(SolveOnlineDu, IncreasingValueEndsNoLater) {
  Rng rng(4);
  const ValueModel inc(std::vector<double>{40.0, 20.0, 5.0}, 0.05);
  for (int trial = 0; trial < 100; ++trial) {
    auto du = default_du();
    du.q = rng.uniform(50.0, 150.0);
    du.c = rng.uniform(0.5, 1.5);
    const double s = rng.uniform(0.0, 0.03);
    const double t_next = rng.uniform(s, 0.0499);
    const double lambda = rng.uniform(0.5, 3.0);
    const auto with = solve_online_du(du, s, lambda, inc, t_next, model);
    const auto without = solve_online_du(du, s, lambda, ValueModel(3, 0.05), t_next, model);
    EXPECT_LE(with.decision.y, without.decision.y + 1e-12);
  }
}

TEST(SolveOnlineDu, LateStartDrops) {
  const auto du = default_du();
  const auto od = solve_online_du(du, 0.06, 1.0, ValueModel(3, 0.05), 0.1, model);
  EXPECT_TRUE(od.dropped);
  EXPECT_EQ(od.decision, (CrossLayerDecision{du.d, du.d, 0.0}));
  EXPECT_EQ(model.cost(du, od.decision.x, od.decision.y, od.decision.a), 0.0);
}

TEST(SolveOnlineDuDag, EmptyDagMatchesIndependent) {
  const Closure c(DependencyGraph(3));
  TransmissionHistory hist{{0.2, 0.1}, {0.2, 0.1}};
  auto du = default_du();
  const ValueModel vm(std::vector<double>{10.0, 3.0, 1.0}, 0.05);
  const auto a = solve_online_du_dag(2, du, 0.01, 1.5, vm, 0.03, c, hist, model, [](std::size_t) { return 100.0; });
  const auto b = solve_online_du(du, 0.01, 1.5, vm, 0.03, model);
  EXPECT_EQ(a.decision, b.decision);
}

TEST(SolveOnlineDuDag, AncestorSendsAtLeastAsMuchAsLeaf) {
  Rng rng(5);
  // Unit 0 has three later dependants; unit 0 of the empty graph has none.
  const Closure rich(DependencyGraph(4, {{1, 0}, {2, 0}, {3, 1}}));
  const Closure leaf(DependencyGraph(4));
  const TransmissionHistory none;
  for (int trial = 0; trial < 50; ++trial) {
    auto du = default_du();
    du.q = rng.uniform(50.0, 150.0);
    du.c = rng.uniform(0.5, 1.5);
    const double lambda = rng.uniform(0.5, 5.0);
    auto q = [](std::size_t) { return 100.0; };
    const auto a = solve_online_du_dag(0, du, 0.0, lambda, ValueModel(3, 0.05), 0.2, rich, none, model, q);
    const auto b = solve_online_du_dag(0, du, 0.0, lambda, ValueModel(3, 0.05), 0.2, leaf, none, model, q);
    EXPECT_GE(a.decision.a, b.decision.a - 1e-7);
  }
}

TEST(SolveOnlineDuDag, LostAncestorLowersPayload) {
  Rng rng(6);
  const Closure c(DependencyGraph(2, {{1, 0}}));
  for (int trial = 0; trial < 50; ++trial) {
    auto du = default_du();
    du.c = rng.uniform(0.5, 1.5);
    const double lambda = rng.uniform(0.5, 5.0);
    auto q = [](std::size_t) { return 100.0; };
    const TransmissionHistory lost{{1.0}, {1.0}};
    const TransmissionHistory fine{{0.0}, {0.0}};
    const auto a = solve_online_du_dag(1, du, 0.0, lambda, ValueModel(3, 0.05), 0.2, c, lost, model, q);
    const auto b = solve_online_du_dag(1, du, 0.0, lambda, ValueModel(3, 0.05), 0.2, c, fine, model, q);
    EXPECT_LT(a.decision.a, b.decision.a);
  }
}

TEST(RunOnline, WideSpacingKeepsStateAtZeroAndMatchesMyopic) {
  Instance inst;
  inst.budget = 10.0;
  Rng rng(7);
  for (std::size_t i = 0; i < 300; ++i) {
    const double t = 0.1 * static_cast<double>(i);
    inst.units.push_back({i + 1, rng.uniform(50.0, 150.0), 10.0, t, t + 0.05, 0.5, rng.uniform(0.5, 1.5)});
  }
  const LearnerOptions opt;
  const auto p = run_online(inst, model, Policy::proposed, opt);
  const auto m = run_online(inst, model, Policy::myopic, opt);
  for (double s : p.visited_states) EXPECT_EQ(s, 0.0);
  ASSERT_EQ(p.units.size(), m.units.size());
  for (std::size_t i = 0; i < p.units.size(); ++i) EXPECT_EQ(p.units[i].decision, m.units[i].decision);
}

TEST(RunOnline, StatesAndPricesStayNonnegative) {
  const auto inst = trace(2000, 8);
  for (Policy pol : {Policy::proposed, Policy::myopic}) {
    const auto run = run_online(inst, model, pol, LearnerOptions{});
    for (double s : run.visited_states) EXPECT_GE(s, 0.0);
    for (const auto& u : run.units) EXPECT_GE(u.lambda, 0.0);
    for (const auto& c : run.cycles) EXPECT_GE(c.lambda, 0.0);
  }
}

TEST(RunOnline, CausalPoliciesReadAtMostOneUnitAhead) {
  const auto inst = trace(500, 9, 10.0, DagKind::random);
  for (Policy pol : {Policy::proposed, Policy::myopic}) {
    const auto run = run_online(inst, model, pol, LearnerOptions{});
    EXPECT_LE(run.furthest_ahead, 1u);
    EXPECT_EQ(run.lookaheads, 0u);
  }
  LearnerOptions known;
  known.future = FutureImpact::known;
  EXPECT_GT(run_online(inst, model, Policy::proposed, known).lookaheads, 0u);
  EXPECT_GT(run_online(trace(50, 9), model, Policy::mdu, LearnerOptions{}).lookaheads, 0u);
}

TEST(CausalStream, RefusesReadsBeyondNextUnit) {
  const auto inst = trace(5, 1);
  CausalStream s(inst);
  s.seek(1);
  EXPECT_NO_THROW((void)s.current());
  EXPECT_NO_THROW((void)s.next_ready());
  s.seek(4);
  EXPECT_EQ(s.next_ready(), kInf);
}

TEST(RunOnline, CyclesAggregateUnits) {
  const auto inst = trace(95, 10);
  const auto run = run_online(inst, model, Policy::proposed, LearnerOptions{});
  ASSERT_EQ(run.cycles.size(), 10u);
  double total = 0.0;
  for (const auto& u : run.units) total += u.reduction;
  double cyc = 0.0;
  for (const auto& c : run.cycles) cyc += c.distortion_reduction;
  EXPECT_NEAR(total, cyc, 1e-9 * total);
  EXPECT_EQ(run.cycles.back().cycle, 10u);
}

TEST(RunOnline, ResumeFromSnapshotMatchesStraightRun) {
  const auto inst = trace(600, 11, 10.0, DagKind::random);
  const LearnerOptions opt;
  const auto full = run_online(inst, model, Policy::proposed, opt);
  const auto head = run_online(inst, model, Policy::proposed, opt, std::nullopt, 250);
  std::stringstream ss;
  write_state(ss, head.final_state);
  const auto restored = read_state(ss);
  EXPECT_EQ(restored, head.final_state);
  const auto tail = run_online(inst, model, Policy::proposed, opt, restored);
  EXPECT_EQ(tail.final_state, full.final_state);
  for (std::size_t i = 0; i < tail.units.size(); ++i) {
    EXPECT_EQ(tail.units[i].decision, full.units[250 + i].decision);
  }
}

TEST(LearnerState, RejectsMalformedSnapshot) {
  std::stringstream bad("xlo-learner 1\nunits 2\n");
  EXPECT_THROW((void)read_state(bad), ParseError);
  std::stringstream wrong("something\n");
  EXPECT_THROW((void)read_state(wrong), ParseError);
}

TEST(RunOnline, LearnedValueIsMonotoneOverVisitedStates) {
  const auto inst = trace(3000, 12);
  for (UpdateMode mode : {UpdateMode::verbatim, UpdateMode::semigradient}) {
    LearnerOptions opt;
    opt.mode = mode;
    const auto run = run_online(inst, model, Policy::proposed, opt);
    const auto& vm = run.final_state.vm;
    const double hi = *std::max_element(run.visited_states.begin(), run.visited_states.end());
    double vmax = 0.0;
    std::vector<double> vals;
    for (int k = 0; k <= 200; ++k) {
      vals.push_back(vm(hi * k / 200.0));
      vmax = std::max(vmax, std::abs(vals.back()));
    }
    for (std::size_t k = 1; k < vals.size(); ++k) {
      EXPECT_GE(vals[k], vals[k - 1] - 0.01 * vmax) << to_string(mode) << " at step " << k;
    }
  }
}

// At a frozen price the learned value function should steer decisions about
// as well as the relative value iteration solution on the same features.
TEST(RunOnline, FrozenPriceLearnerTracksRelativeValueIteration) {
  const double lambda = 2.0;
  Rvia rvia;
  rvia.solve(lambda, 200, 200, 99);
  EXPECT_EQ(rvia.v[0], 0.0);
  for (std::size_t j = 1; j < rvia.grid; ++j) EXPECT_GE(rvia.v[j], rvia.v[j - 1]);

  LearnerOptions opt;
  opt.lambda_init = lambda;
  opt.kappa0 = 1e-12;
  opt.price_floor = 0.0;
  const auto learned = run_online(trace(3000, 1), model, Policy::proposed, opt).final_state.vm;

  const auto eval = trace(3000, 2);
  const double with_rvia = average_priced_cost(eval, lambda, rvia.fit(3, 0.05));
  const double with_learned = average_priced_cost(eval, lambda, learned);
  const double myopic = average_priced_cost(eval, lambda, ValueModel(3, 0.05));
  EXPECT_LT(with_rvia, myopic);
  EXPECT_LT(with_learned, myopic);
  EXPECT_LE(with_learned, 1.03 * with_rvia) << "learned " << with_learned << " rvia " << with_rvia;
}
