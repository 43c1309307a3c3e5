#pragma once

// Online cross-layer decisions with incomplete knowledge. Each unit is
// decided when it arrives, from its own attributes, the backlog state s and
// the next ready time. A learned value model V(s) prices the backlog handed
// to the next unit; the resource price follows the running energy average on
// a slower timescale.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xlo/core_types.hpp"
#include "xlo/instance_io.hpp"
#include "xlo/models.hpp"
#include "xlo/offline.hpp"
#include "xlo/search.hpp"
#include "xlo/tracegen.hpp"

namespace xlo {

enum class UpdateMode { verbatim, semigradient };
enum class Policy { proposed, myopic, mdu };
enum class FutureImpact { known, mean };

[[nodiscard]] inline std::string to_string(UpdateMode m) {
  return m == UpdateMode::verbatim ? "verbatim" : "semigradient";
}
[[nodiscard]] inline UpdateMode parse_update_mode(std::string_view s) {
  if (s == "verbatim") return UpdateMode::verbatim;
  if (s == "semigradient") return UpdateMode::semigradient;
  throw std::invalid_argument("unknown update mode '" + std::string(s) + "'");
}
[[nodiscard]] inline std::string to_string(Policy p) {
  switch (p) {
    case Policy::proposed: return "proposed";
    case Policy::myopic: return "myopic";
    case Policy::mdu: return "mdu";
  }
  return "proposed";
}
[[nodiscard]] inline Policy parse_policy(std::string_view s) {
  if (s == "proposed") return Policy::proposed;
  if (s == "myopic") return Policy::myopic;
  if (s == "mdu") return Policy::mdu;
  throw std::invalid_argument("unknown policy '" + std::string(s) + "'");
}
[[nodiscard]] inline std::string to_string(FutureImpact f) {
  return f == FutureImpact::known ? "known" : "mean";
}
[[nodiscard]] inline FutureImpact parse_future_impact(std::string_view s) {
  if (s == "known") return FutureImpact::known;
  if (s == "mean") return FutureImpact::mean;
  throw std::invalid_argument("unknown future impact mode '" + std::string(s) + "'");
}

/// V(s) = sum_k r_k v_k(s), v_k(s) = u^k / k!, u = s / state_scale.
/// Every feature vanishes at s = 0, so V(0) = 0 for any r.
struct ValueModel {
  std::vector<double> r;
  double state_scale = 1.0;

  ValueModel() : r(3, 0.0) {}
  explicit ValueModel(std::size_t order, double scale = 1.0) : r(order, 0.0), state_scale(scale) {
    if (order == 0) throw std::invalid_argument("value model needs at least one feature");
    if (!(scale > 0.0)) throw std::invalid_argument("value model state scale must be positive");
  }
  ValueModel(std::vector<double> coeffs, double scale) : r(std::move(coeffs)), state_scale(scale) {
    if (r.empty()) throw std::invalid_argument("value model needs at least one feature");
    if (!(scale > 0.0)) throw std::invalid_argument("value model state scale must be positive");
  }

  [[nodiscard]] std::size_t order() const { return r.size(); }

  [[nodiscard]] std::vector<double> features(double s) const {
    if (!(s >= 0.0)) throw std::domain_error("value model: negative state");
    std::vector<double> v(r.size());
    const double u = s / state_scale;
    double term = 1.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      term *= u / static_cast<double>(k + 1);
      v[k] = term;
    }
    return v;
  }

  [[nodiscard]] double operator()(double s) const {
    if (s == 0.0) return 0.0;
    const auto v = features(s);
    double out = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) out += r[k] * v[k];
    return out;
  }

  [[nodiscard]] double norm() const {
    double n = 0.0;
    for (double c : r) n += c * c;
    return std::sqrt(n);
  }

  friend bool operator==(const ValueModel&, const ValueModel&) = default;
};

[[nodiscard]] inline double value_estimate(const ValueModel& vm, double s) { return vm(s); }

[[nodiscard]] inline double state_transition(double y, double t_next) {
  return std::max(y - t_next, 0.0);
}

/// Verbatim: r' = (1 - gamma) r + gamma * target * v(s).
/// Semi-gradient: r' = r + gamma * (target - V(s)) * v(s).
[[nodiscard]] inline ValueModel value_update(const ValueModel& vm, double gamma, double s,
                                             double target, UpdateMode mode) {
  const auto v = vm.features(s);
  ValueModel out = vm;
  if (mode == UpdateMode::verbatim) {
    for (std::size_t k = 0; k < v.size(); ++k) out.r[k] = (1.0 - gamma) * vm.r[k] + gamma * target * v[k];
  } else {
    const double err = target - vm(s);
    for (std::size_t k = 0; k < v.size(); ++k) out.r[k] = vm.r[k] + gamma * err * v[k];
  }
  return out;
}

[[nodiscard]] inline double online_price_update(double lambda, double kappa, double running_avg,
                                                double budget) {
  return std::max(lambda + kappa * (running_avg - budget), 0.0);
}

struct OnlineDecision {
  CrossLayerDecision decision;
  double objective = 0.0;  // D + lambda w + V(next state) at the decision
  bool dropped = false;
};

struct OnlineSearch {
  std::size_t y_points = 200;
  double tol = 1e-8;
};

/// Minimizes D(x, y, a) + lambda w + V(max(y - t_next, 0)) with x = s + t.
/// The ETX is scanned on an even grid over [x, d] that also holds t_next,
/// then refined by golden section between the best point's neighbors; the
/// payload is the inner convex search. A start past the deadline drops the
/// unit: x = y = d, a = 0.
template <TransmissionModel Model, class Distortion>
[[nodiscard]] OnlineDecision solve_online_du_with(const Distortion& dist, const DataUnit& du,
                                                  double s, double lambda, const ValueModel& vm,
                                                  double t_next, const Model& model,
                                                  const OnlineSearch& search = {}) {
  if (!(s >= 0.0)) throw std::domain_error("solve_online_du: negative state");
  if (lambda < 0.0) throw std::domain_error("solve_online_du: negative price");
  const double x = s + du.t;
  if (x > du.d) return {{du.d, du.d, 0.0}, du.q, true};

  auto at_y = [&](double y) {
    const auto low = lower_optimization_with(dist, du, lambda, x, y, 1, model, search.tol);
    return std::pair{low.a, low.value + vm(state_transition(y, t_next))};
  };

  std::vector<double> ys;
  const std::size_t n = std::max<std::size_t>(search.y_points, 2);
  ys.reserve(n + 1);
  for (std::size_t k = 0; k < n; ++k) {
    ys.push_back(x + (du.d - x) * static_cast<double>(k) / static_cast<double>(n - 1));
  }
  ys.back() = du.d;
  if (t_next > x && t_next < du.d) ys.push_back(t_next);
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

  std::size_t best = 0;
  double best_val = kInf;
  std::vector<double> vals(ys.size());
  for (std::size_t k = 0; k < ys.size(); ++k) {
    vals[k] = at_y(ys[k]).second;
    // Later ETX wins ties (longest window).
    if (vals[k] <= best_val + 1e-12 * std::max(1.0, std::abs(best_val))) {
      best = k;
      best_val = std::min(best_val, vals[k]);
    }
  }
  double y = ys[best];
  double value = vals[best];
  if (ys.size() > 2) {
    const double lo = ys[best == 0 ? 0 : best - 1];
    const double hi = ys[std::min(best + 1, ys.size() - 1)];
    const auto ref = golden_section_minimize([&](double v) { return at_y(v).second; }, lo, hi,
                                             search.tol, TiePreference::upper);
    if (ref.value < value) {
      y = ref.arg;
      value = ref.value;
    }
  }
  const auto [a, v] = at_y(y);
  return {{x, y, a}, v, false};
}

template <TransmissionModel Model>
[[nodiscard]] OnlineDecision solve_online_du(const DataUnit& du, double s, double lambda,
                                             const ValueModel& vm, double t_next,
                                             const Model& model, const OnlineSearch& search = {}) {
  return solve_online_du_with(detail::OwnDistortion<Model>{du, model}, du, s, lambda, vm, t_next,
                              model, search);
}

/// View of transmission results so far: propagation e_k of every unit
/// already sent (index < next()).
struct TransmissionHistory {
  std::vector<double> propagation;
  std::vector<double> loss;
  [[nodiscard]] std::size_t next() const { return propagation.size(); }
};

/// Sensitivity of unit i from current knowledge: realized e_k for earlier
/// units, and every unsent unit assumed received in full (e = p = 0).
/// `future_q(j)` supplies the impact estimate of unsent unit j. With
/// `descendant_relief` off only the first term is kept.
template <TransmissionModel Model, class FutureQ>
[[nodiscard]] Sensitivity<Model> online_sensitivity(std::size_t i, const DataUnit& du,
                                                    const Closure& closure,
                                                    const TransmissionHistory& hist,
                                                    const Model& model, FutureQ&& future_q,
                                                    bool descendant_relief = true) {
  if (i >= closure.ancestors.size()) throw std::out_of_range("online_sensitivity: index out of range");
  if (hist.next() != i) throw std::domain_error("online_sensitivity: history must end just before unit i");
  Sensitivity<Model> s{&du, &model, 1.0, 0.0};
  for (auto k : closure.ancestors[i]) s.upstream *= 1.0 - hist.propagation[k];
  if (descendant_relief) {
    for (auto j : closure.descendants[i]) {
      double term = future_q(j);
      for (auto k : closure.ancestors[j]) {
        if (k < i) term *= 1.0 - hist.propagation[k];
      }
      s.downstream += term;
    }
  }
  return s;
}

template <TransmissionModel Model, class FutureQ>
[[nodiscard]] OnlineDecision solve_online_du_dag(std::size_t i, const DataUnit& du, double s,
                                                 double lambda, const ValueModel& vm, double t_next,
                                                 const Closure& closure,
                                                 const TransmissionHistory& hist,
                                                 const Model& model, FutureQ&& future_q,
                                                 const OnlineSearch& search = {},
                                                 bool descendant_relief = true) {
  const auto sens = online_sensitivity(i, du, closure, hist, model, future_q, descendant_relief);
  return solve_online_du_with(sens, du, s, lambda, vm, t_next, model, search);
}

class CausalityViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Sequential access to a trace. At unit i's turn only unit i and the ready
/// time of unit i + 1 are readable; `lookahead` is the explicit, counted
/// exception used by clairvoyant baselines. The dependency graph is known a
/// priori.
class CausalStream {
 public:
  explicit CausalStream(const Instance& inst) : inst_(&inst) {}

  [[nodiscard]] std::size_t size() const { return inst_->size(); }
  [[nodiscard]] std::size_t turn() const { return turn_; }
  [[nodiscard]] const std::optional<DependencyGraph>& graph() const { return inst_->graph; }
  [[nodiscard]] double budget() const { return inst_->budget; }

  void seek(std::size_t i) { turn_ = i; }
  void advance() { ++turn_; }

  [[nodiscard]] const DataUnit& current() const {
    if (turn_ >= size()) throw std::out_of_range("stream exhausted");
    note(turn_);
    return inst_->units[turn_];
  }

  // +inf after the last unit.
  [[nodiscard]] double next_ready() const {
    if (turn_ + 1 >= size()) return kInf;
    note(turn_ + 1);
    return inst_->units[turn_ + 1].t;
  }

  [[nodiscard]] std::vector<DataUnit> lookahead(std::size_t count) const {
    const std::size_t end = std::min(size(), turn_ + count);
    ++lookaheads_;
    return {inst_->units.begin() + static_cast<std::ptrdiff_t>(turn_),
            inst_->units.begin() + static_cast<std::ptrdiff_t>(end)};
  }

  [[nodiscard]] double lookahead_q(std::size_t j) const {
    ++lookaheads_;
    return inst_->units.at(j).q;
  }

  [[nodiscard]] std::size_t lookahead_count() const { return lookaheads_; }
  [[nodiscard]] std::size_t furthest_read() const { return furthest_; }
  [[nodiscard]] std::size_t furthest_ahead() const { return max_ahead_; }

 private:
  void note(std::size_t j) const {
    if (j > turn_ + 1) throw CausalityViolation("read of unit " + std::to_string(j + 1) + " at turn " +
                                                std::to_string(turn_ + 1));
    furthest_ = std::max(furthest_, j);
    max_ahead_ = std::max(max_ahead_, j - turn_);
  }

  const Instance* inst_;
  std::size_t turn_ = 0;
  mutable std::size_t furthest_ = 0;
  mutable std::size_t max_ahead_ = 0;
  mutable std::size_t lookaheads_ = 0;
};

struct LearnerOptions {
  std::size_t order = 3;          // K
  double gamma0 = 0.5;
  double gamma_power = 0.6;
  double kappa0 = 0.3;
  double kappa_power = 1.0;
  UpdateMode mode = UpdateMode::verbatim;
  double lambda_init = 1.0;
  double price_clip = 1.0;        // running average enters the price step clipped to (1 +- clip) W
  double price_floor = 0.02;      // lowest price the learner will post
  double state_scale = 0.05;      // seconds per feature unit
  FutureImpact future = FutureImpact::mean;
  double mean_q = 100.0;          // impact estimate for unsent units in mean mode
  std::size_t cycle_len = 10;
  OnlineSearch search{};
  SolverOptions mdu_solver = [] {
    SolverOptions o;
    o.max_outer = 300;
    o.gap_tol = 1e-3;
    return o;
  }();

  [[nodiscard]] double gamma(std::size_t i) const {
    return gamma0 / std::pow(static_cast<double>(i), gamma_power);
  }
  [[nodiscard]] double kappa(std::size_t i) const {
    return kappa0 / std::pow(static_cast<double>(i), kappa_power);
  }

  void validate() const {
    if (order < 1 || order > 6) throw std::invalid_argument("learner: K must be in 1..6");
    if (!(gamma0 > 0.0 && gamma0 <= 1.0)) throw std::invalid_argument("learner: gamma0 must be in (0, 1]");
    if (!(kappa0 > 0.0)) throw std::invalid_argument("learner: kappa0 must be positive");
    if (!(gamma_power > 0.5 && gamma_power <= 1.0)) throw std::invalid_argument("learner: gamma power must be in (0.5, 1]");
    if (!(kappa_power > gamma_power && kappa_power <= 1.0)) {
      throw std::invalid_argument("learner: kappa power must exceed gamma power and be at most 1");
    }
    if (!(lambda_init >= 0.0)) throw std::invalid_argument("learner: initial price must be non-negative");
    if (!(state_scale > 0.0)) throw std::invalid_argument("learner: state scale must be positive");
    if (cycle_len == 0) throw std::invalid_argument("learner: cycle length must be at least 1");
  }
};

/// Everything needed to resume a run after unit `i` (0-based count of units
/// already decided).
struct LearnerState {
  double lambda = 1.0;
  ValueModel vm;
  std::size_t i = 0;
  double s = 0.0;
  double energy_sum = 0.0;
  TransmissionHistory history;

  friend bool operator==(const LearnerState& a, const LearnerState& b) {
    return a.lambda == b.lambda && a.vm == b.vm && a.i == b.i && a.s == b.s &&
           a.energy_sum == b.energy_sum && a.history.propagation == b.history.propagation &&
           a.history.loss == b.history.loss;
  }
};

[[nodiscard]] inline LearnerState initial_state(const LearnerOptions& opt) {
  LearnerState st;
  st.lambda = opt.lambda_init;
  st.vm = ValueModel(opt.order, opt.state_scale);
  return st;
}

inline void write_state(std::ostream& os, const LearnerState& st) {
  os << "xlo-learner 1\n";
  os << "lambda " << format_real(st.lambda) << '\n';
  os << "units " << st.i << '\n';
  os << "state " << format_real(st.s) << '\n';
  os << "energy " << format_real(st.energy_sum) << '\n';
  os << "scale " << format_real(st.vm.state_scale) << '\n';
  os << "r " << st.vm.r.size();
  for (double c : st.vm.r) os << ' ' << format_real(c);
  os << '\n';
  for (std::size_t k = 0; k < st.history.next(); ++k) {
    os << "sent " << format_real(st.history.loss[k]) << ' ' << format_real(st.history.propagation[k])
       << '\n';
  }
}

[[nodiscard]] inline LearnerState read_state(std::istream& is) {
  LearnerState st;
  std::string raw;
  std::size_t line = 0;
  bool header = false;
  while (std::getline(is, raw)) {
    ++line;
    const auto toks = detail::split_ws(raw);
    if (toks.empty() || toks[0].front() == '#') continue;
    const auto key = toks[0];
    auto one = [&] {
      if (toks.size() != 2) throw ParseError(line, std::string(key) + " takes one value");
      return toks[1];
    };
    if (!header) {
      if (key != "xlo-learner" || toks.size() != 2 || toks[1] != "1") {
        throw ParseError(line, "expected 'xlo-learner 1' header");
      }
      header = true;
    } else if (key == "lambda") {
      st.lambda = detail::parse_number<double>(one(), line);
    } else if (key == "units") {
      st.i = detail::parse_number<std::size_t>(one(), line);
    } else if (key == "state") {
      st.s = detail::parse_number<double>(one(), line);
    } else if (key == "energy") {
      st.energy_sum = detail::parse_number<double>(one(), line);
    } else if (key == "scale") {
      st.vm.state_scale = detail::parse_number<double>(one(), line);
    } else if (key == "r") {
      if (toks.size() < 2) throw ParseError(line, "r needs a count");
      const auto k = detail::parse_number<std::size_t>(toks[1], line);
      if (k == 0 || toks.size() != k + 2) throw ParseError(line, "r count does not match values");
      st.vm.r.clear();
      for (std::size_t j = 0; j < k; ++j) st.vm.r.push_back(detail::parse_number<double>(toks[j + 2], line));
    } else if (key == "sent") {
      if (toks.size() != 3) throw ParseError(line, "sent takes two values");
      st.history.loss.push_back(detail::parse_number<double>(toks[1], line));
      st.history.propagation.push_back(detail::parse_number<double>(toks[2], line));
    } else {
      throw ParseError(line, "unknown record '" + std::string(key) + "'");
    }
  }
  if (!header) throw ParseError(line, "empty input");
  if (st.history.next() != st.i) throw ParseError(line, "history length does not match unit count");
  return st;
}

struct CycleMetrics {
  std::size_t cycle = 0;  // 1-based
  double distortion_reduction = 0.0;
  double energy_avg = 0.0;
  double lambda = 0.0;
  double r_norm = 0.0;
  std::size_t dropped = 0;
};

struct UnitRecord {
  CrossLayerDecision decision;
  double energy = 0.0;
  double reduction = 0.0;  // q - Q
  double state = 0.0;      // s at decision time
  double lambda = 0.0;     // price used for the decision
  bool dropped = false;
};

struct OnlineRun {
  Policy policy = Policy::proposed;
  std::vector<CycleMetrics> cycles;
  std::vector<UnitRecord> units;
  LearnerState final_state;
  double energy_avg = 0.0;
  std::vector<double> visited_states;  // s at each decision, for diagnostics
  std::size_t lookaheads = 0;
  std::size_t furthest_ahead = 0;     // max j - i read at unit i's turn
};

namespace detail {

// Cycles are aligned to absolute unit positions; `offset` is the position of
// run.units[0].
inline void aggregate_cycles(OnlineRun& run, std::size_t offset, std::size_t cycle_len,
                             const std::vector<double>& lambda_after,
                             const std::vector<double>& rnorm_after) {
  const auto n = run.units.size();
  for (std::size_t base = 0; base < n;) {
    const std::size_t end = std::min(n, base + cycle_len - (offset + base) % cycle_len);
    CycleMetrics c;
    c.cycle = (offset + base) / cycle_len + 1;
    double e = 0.0;
    for (std::size_t i = base; i < end; ++i) {
      c.distortion_reduction += run.units[i].reduction;
      e += run.units[i].energy;
      if (run.units[i].dropped) ++c.dropped;
    }
    c.energy_avg = e / static_cast<double>(end - base);
    c.lambda = lambda_after[end - 1];
    c.r_norm = rnorm_after[end - 1];
    run.cycles.push_back(c);
    base = end;
  }
}

// Distortion of unit i given everything sent so far, e_k and p_i realized.
inline double realized_reduction(std::size_t i, const DataUnit& du, double p,
                                 const Closure* closure, const TransmissionHistory& hist) {
  double survive = 1.0 - p;
  if (closure) {
    for (auto k : closure->ancestors[i]) survive *= 1.0 - hist.propagation[k];
  }
  return du.q * survive;
}

}  // namespace detail

/// Runs a policy over a trace from `start` (a fresh state by default).
/// proposed: value model + price learning; myopic: the same loop with V = 0;
/// mdu: each cycle is solved offline with its units known at the running
/// price, which then takes one step per cycle.
template <TransmissionModel Model>
[[nodiscard]] OnlineRun run_online(const Instance& inst, const Model& model, Policy policy,
                                   const LearnerOptions& opt,
                                   std::optional<LearnerState> start = std::nullopt,
                                   std::size_t stop = std::numeric_limits<std::size_t>::max()) {
  opt.validate();
  CausalStream stream(inst);
  LearnerState st = start ? *start : initial_state(opt);
  if (st.history.next() != st.i) throw std::invalid_argument("run_online: inconsistent resume state");
  const std::size_t n = std::min(inst.size(), stop);
  const std::optional<Closure> closure =
      inst.has_dependencies() ? std::optional<Closure>(Closure(*inst.graph)) : std::nullopt;
  const Closure* cl = closure ? &*closure : nullptr;
  const double budget = inst.budget;

  OnlineRun run;
  run.policy = policy;
  std::vector<double> lambda_after;
  std::vector<double> rnorm_after;
  const std::size_t first = st.i;

  auto step_price = [&](std::size_t k) {
    const double avg = std::clamp(st.energy_sum / static_cast<double>(st.i),
                                  budget * (1.0 - opt.price_clip), budget * (1.0 + opt.price_clip));
    st.lambda = std::max(online_price_update(st.lambda, opt.kappa(k), avg, budget), opt.price_floor);
  };

  // `price_index` 0 leaves the price alone.
  auto finish_unit = [&](std::size_t i, const DataUnit& du, const OnlineDecision& od, double t_next,
                         double s_used, double lambda_used, std::size_t price_index) {
    const auto& d = od.decision;
    const double w = od.dropped ? 0.0 : model.cost(du, d.x, d.y, d.a);
    const double p = od.dropped ? 1.0 : model.loss(du, d.x, d.y, d.a);
    const double e = od.dropped ? 1.0 : model.propagation(du, d.x, d.y, d.a);
    UnitRecord rec{d, w, detail::realized_reduction(i, du, p, cl, st.history), s_used, lambda_used,
                   od.dropped};
    st.history.loss.push_back(p);
    st.history.propagation.push_back(e);
    run.units.push_back(rec);
    run.visited_states.push_back(s_used);
    const double s_next = state_transition(d.y, t_next);
    st.energy_sum += w;
    ++st.i;
    if (price_index > 0) step_price(price_index);
    if (policy == Policy::proposed) {
      st.vm = value_update(st.vm, opt.gamma(st.i), s_used, od.objective, opt.mode);
    }
    st.s = std::isfinite(s_next) ? s_next : 0.0;
    lambda_after.push_back(st.lambda);
    rnorm_after.push_back(st.vm.norm());
  };

  if (policy == Policy::mdu) {
    const std::size_t cycle = opt.cycle_len;
    stream.seek(st.i);
    double busy_until = st.i < n ? inst.units[st.i].t + st.s : -kInf;
    for (std::size_t base = st.i; base < n; base = st.i) {
      stream.seek(base);
      const std::size_t count = std::min(cycle - (base % cycle), n - base);
      auto block_units = stream.lookahead(count);
      Instance block;
      block.budget = budget;
      for (std::size_t j = 0; j < block_units.size(); ++j) {
        auto du = block_units[j];
        du.index = j + 1;
        du.t = std::min(std::max(du.t, busy_until), du.d);
        block.units.push_back(du);
      }
      if (inst.graph) block.graph = slice(inst, base, count).graph;
      SolverOptions so = opt.mdu_solver;
      so.fixed_price = true;
      so.lambda0 = st.lambda;
      const auto rep = block.has_dependencies() ? solve_interdependent(block, model, so)
                                                : solve_independent(block, model, so);
      for (std::size_t j = 0; j < count; ++j) {
        stream.seek(base + j);
        const auto& du = stream.current();
        const double t_next = stream.next_ready();
        const double s_used = busy_until > du.t ? busy_until - du.t : 0.0;
        OnlineDecision od{rep.decisions[j], 0.0, false};
        if (du.t + s_used > du.d) od = {{du.d, du.d, 0.0}, du.q, true};
        // One price per cycle: the step is indexed by cycles, not units.
        const bool last = j + 1 == count;
        finish_unit(base + j, du, od, t_next, s_used, st.lambda,
                    last ? (base + j) / cycle + 1 : 0);
        busy_until = std::max(busy_until, od.decision.y);
      }
    }
  } else {
    const ValueModel zero(st.vm.order(), st.vm.state_scale);
    for (std::size_t i = st.i; i < n; ++i) {
      stream.seek(i);
      const auto& du = stream.current();
      const double t_next = stream.next_ready();
      const ValueModel& vm = policy == Policy::proposed ? st.vm : zero;
      OnlineDecision od;
      if (cl) {
        auto future_q = [&](std::size_t j) {
          return opt.future == FutureImpact::known ? stream.lookahead_q(j) : opt.mean_q;
        };
        od = solve_online_du_dag(i, du, st.s, st.lambda, vm, t_next, *cl, st.history, model,
                                 future_q, opt.search, policy == Policy::proposed);
      } else {
        od = solve_online_du(du, st.s, st.lambda, vm, t_next, model, opt.search);
      }
      finish_unit(i, du, od, t_next, st.s, st.lambda, i + 1);
    }
  }

  run.final_state = st;
  double e = 0.0;
  for (const auto& u : run.units) e += u.energy;
  run.energy_avg = run.units.empty() ? 0.0 : e / static_cast<double>(run.units.size());
  run.lookaheads = stream.lookahead_count();
  run.furthest_ahead = stream.furthest_ahead();
  detail::aggregate_cycles(run, first, opt.cycle_len, lambda_after, rnorm_after);
  return run;
}

}  // namespace xlo
