#pragma once

// Experiment configuration: an INI-style text file with [section] headers
// and `key = value` lines. '#' and ';' start comments. Every key has a
// default; unknown sections and keys are errors. Keys ending in `_ms` are
// milliseconds in the file and seconds in memory.
//
//   [trace]      num_dus q_low q_high size mean_interarrival_ms lifetime_ms
//                channel channel_a channel_b dag cycle_len edge_prob budget
//   [model]      n0 bandwidth_hz theta_per_kbit bit_unit
//   [solver]     epsilon max_outer max_inner alpha0 alpha_power beta0
//                beta_power inner_tol search_tol price_clip lambda0
//   [learner]    K gamma0 gamma_power kappa0 kappa_power mode lambda_init
//                price_clip price_floor state_scale_ms future mean_q y_points
//                mdu_max_outer mdu_gap_tol
//   [oracle]     time_step_ms action_points max_units
//   [experiment] policies budgets seeds out_dir solve_units online_units
//                warmup_cycles
//
// Lists are comma separated.

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "xlo/instance_io.hpp"
#include "xlo/models.hpp"
#include "xlo/offline.hpp"
#include "xlo/online.hpp"
#include "xlo/oracle.hpp"
#include "xlo/tracegen.hpp"

namespace xlo {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  TraceParams trace{};
  ExponentialShannonModel model{{2e-3, 2e5}, 1000.0};
  SolverOptions solver{};
  LearnerOptions learner{};
  OracleOptions oracle{};
  std::vector<Policy> policies{Policy::proposed, Policy::myopic, Policy::mdu};
  std::vector<double> budgets{5.0, 10.0, 15.0, 20.0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string out_dir = "out";
  std::size_t solve_units = 10;     // M for the offline experiments
  std::size_t online_units = 1000;  // trace length for the online experiments
  std::size_t warmup_cycles = 30;   // cycles excluded from steady-state means

  void validate() const {
    trace.validate();
    learner.validate();
    if (!(model.energy.n0 > 0.0)) throw ConfigError("model: n0 must be positive");
    if (!(model.energy.bandwidth_hz > 0.0)) throw ConfigError("model: bandwidth_hz must be positive");
    if (!(model.bits_per_unit > 0.0)) throw ConfigError("model: bit_unit must be positive");
    if (!(solver.epsilon > 0.0)) throw ConfigError("solver: epsilon must be positive");
    if (solver.max_outer == 0) throw ConfigError("solver: max_outer must be at least 1");
    if (solver.max_inner == 0) throw ConfigError("solver: max_inner must be at least 1");
    if (!(solver.price_step.base > 0.0) || !(solver.nif_step.base > 0.0)) {
      throw ConfigError("solver: step constants must be positive");
    }
    if (!(oracle.time_step > 0.0)) throw ConfigError("oracle: time_step_ms must be positive");
    if (oracle.action_points < 2) throw ConfigError("oracle: action_points must be at least 2");
    if (policies.empty()) throw ConfigError("experiment: policy list is empty");
    if (budgets.empty()) throw ConfigError("experiment: budget list is empty");
    if (seeds.empty()) throw ConfigError("experiment: seed list is empty");
    for (double w : budgets) {
      if (!(w > 0.0)) throw ConfigError("experiment: budgets must be positive");
    }
    if (solve_units == 0) throw ConfigError("experiment: solve_units must be at least 1");
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto piece = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs, auto&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += fmt(xs[i]);
  }
  return out;
}

// One entry per key: a setter from text and a getter back to canonical text.
struct KeyBinding {
  std::function<void(ExperimentConfig&, std::string_view, std::size_t)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

using KeyTable = std::vector<std::pair<std::string, std::vector<std::pair<std::string, KeyBinding>>>>;

inline double num(std::string_view v, std::size_t line) { return parse_number<double>(v, line); }
inline std::size_t count(std::string_view v, std::size_t line) { return parse_number<std::size_t>(v, line); }

template <class F>
KeyBinding real(F field) {
  return {[field](ExperimentConfig& c, std::string_view v, std::size_t line) { field(c) = num(v, line); },
          [field](const ExperimentConfig& c) { return format_real(field(c)); }};
}

template <class F>
KeyBinding millis(F field) {
  return {[field](ExperimentConfig& c, std::string_view v, std::size_t line) {
            field(c) = num(v, line) / 1000.0;
          },
          [field](const ExperimentConfig& c) {
            return format_real(field(c) * 1000.0);
          }};
}

template <class F>
KeyBinding whole(F field) {
  return {[field](ExperimentConfig& c, std::string_view v, std::size_t line) { field(c) = count(v, line); },
          [field](const ExperimentConfig& c) {
            return std::to_string(field(c));
          }};
}

template <class F, class Parse, class Show>
KeyBinding word(F field, Parse parse, Show show) {
  return {[=](ExperimentConfig& c, std::string_view v, std::size_t line) {
            try {
              field(c) = parse(v);
            } catch (const std::invalid_argument& e) {
              throw ParseError(line, e.what());
            }
          },
          [=](const ExperimentConfig& c) { return show(field(c)); }};
}

inline const KeyTable& key_table() {
  using C = ExperimentConfig;
  static const KeyTable table = {
      {"trace",
       {
           {"num_dus", whole([](auto& c) -> auto& { return c.trace.num_dus; })},
           {"q_low", real([](auto& c) -> auto& { return c.trace.q_low; })},
           {"q_high", real([](auto& c) -> auto& { return c.trace.q_high; })},
           {"size", real([](auto& c) -> auto& { return c.trace.size; })},
           {"mean_interarrival_ms", millis([](auto& c) -> auto& { return c.trace.mean_interarrival; })},
           {"lifetime_ms", millis([](auto& c) -> auto& { return c.trace.lifetime; })},
           {"channel", word([](auto& c) -> auto& { return c.trace.channel.kind; },
                            parse_channel_kind, [](ChannelSpec::Kind k) { return to_string(k); })},
           {"channel_a", real([](auto& c) -> auto& { return c.trace.channel.a; })},
           {"channel_b", real([](auto& c) -> auto& { return c.trace.channel.b; })},
           {"dag", word([](auto& c) -> auto& { return c.trace.dag; }, parse_dag_kind,
                        [](DagKind k) { return to_string(k); })},
           {"cycle_len", whole([](auto& c) -> auto& { return c.trace.cycle_len; })},
           {"edge_prob", real([](auto& c) -> auto& { return c.trace.edge_prob; })},
           {"budget", real([](auto& c) -> auto& { return c.trace.budget; })},
       }},
      {"model",
       {
           {"n0", real([](auto& c) -> auto& { return c.model.energy.n0; })},
           {"bandwidth_hz", real([](auto& c) -> auto& { return c.model.energy.bandwidth_hz; })},
           {"theta_per_kbit", real([](auto& c) -> auto& { return c.trace.theta; })},
           {"bit_unit", real([](auto& c) -> auto& { return c.model.bits_per_unit; })},
       }},
      {"solver",
       {
           {"epsilon", real([](auto& c) -> auto& { return c.solver.epsilon; })},
           {"max_outer", whole([](auto& c) -> auto& { return c.solver.max_outer; })},
           {"max_inner", whole([](auto& c) -> auto& { return c.solver.max_inner; })},
           {"alpha0", real([](auto& c) -> auto& { return c.solver.price_step.base; })},
           {"alpha_power", real([](auto& c) -> auto& { return c.solver.price_step.power; })},
           {"beta0", real([](auto& c) -> auto& { return c.solver.nif_step.base; })},
           {"beta_power", real([](auto& c) -> auto& { return c.solver.nif_step.power; })},
           {"inner_tol", real([](auto& c) -> auto& { return c.solver.inner_tol; })},
           {"search_tol", real([](auto& c) -> auto& { return c.solver.search_tol; })},
           {"price_clip", real([](auto& c) -> auto& { return c.solver.price_clip; })},
           {"lambda0", real([](auto& c) -> auto& { return c.solver.lambda0; })},
       }},
      {"learner",
       {
           {"K", whole([](auto& c) -> auto& { return c.learner.order; })},
           {"gamma0", real([](auto& c) -> auto& { return c.learner.gamma0; })},
           {"gamma_power", real([](auto& c) -> auto& { return c.learner.gamma_power; })},
           {"kappa0", real([](auto& c) -> auto& { return c.learner.kappa0; })},
           {"kappa_power", real([](auto& c) -> auto& { return c.learner.kappa_power; })},
           {"mode", word([](auto& c) -> auto& { return c.learner.mode; }, parse_update_mode,
                         [](UpdateMode m) { return to_string(m); })},
           {"lambda_init", real([](auto& c) -> auto& { return c.learner.lambda_init; })},
           {"price_clip", real([](auto& c) -> auto& { return c.learner.price_clip; })},
           {"price_floor", real([](auto& c) -> auto& { return c.learner.price_floor; })},
           {"state_scale_ms", millis([](auto& c) -> auto& { return c.learner.state_scale; })},
           {"future", word([](auto& c) -> auto& { return c.learner.future; }, parse_future_impact,
                           [](FutureImpact f) { return to_string(f); })},
           {"mean_q", real([](auto& c) -> auto& { return c.learner.mean_q; })},
           {"y_points", whole([](auto& c) -> auto& { return c.learner.search.y_points; })},
           {"mdu_max_outer", whole([](auto& c) -> auto& { return c.learner.mdu_solver.max_outer; })},
           {"mdu_gap_tol", real([](auto& c) -> auto& { return c.learner.mdu_solver.gap_tol; })},
       }},
      {"oracle",
       {
           {"time_step_ms", millis([](auto& c) -> auto& { return c.oracle.time_step; })},
           {"action_points", whole([](auto& c) -> auto& { return c.oracle.action_points; })},
           {"max_units", whole([](auto& c) -> auto& { return c.oracle.max_units; })},
       }},
      {"experiment",
       {
           {"policies",
            {[](C& c, std::string_view v, std::size_t line) {
               c.policies.clear();
               for (auto p : split_list(v)) {
                 try {
                   c.policies.push_back(parse_policy(p));
                 } catch (const std::invalid_argument& e) {
                   throw ParseError(line, e.what());
                 }
               }
             },
             [](const C& c) { return join(c.policies, [](Policy p) { return to_string(p); }); }}},
           {"budgets",
            {[](C& c, std::string_view v, std::size_t line) {
               c.budgets.clear();
               for (auto w : split_list(v)) c.budgets.push_back(num(w, line));
             },
             [](const C& c) { return join(c.budgets, [](double w) { return format_real(w); }); }}},
           {"seeds",
            {[](C& c, std::string_view v, std::size_t line) {
               c.seeds.clear();
               for (auto s : split_list(v)) c.seeds.push_back(parse_number<std::uint64_t>(s, line));
             },
             [](const C& c) { return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); }); }}},
           {"out_dir",
            {[](C& c, std::string_view v, std::size_t) { c.out_dir = std::string(v); },
             [](const C& c) { return c.out_dir; }}},
           {"solve_units", whole([](auto& c) -> auto& { return c.solve_units; })},
           {"online_units", whole([](auto& c) -> auto& { return c.online_units; })},
           {"warmup_cycles", whole([](auto& c) -> auto& { return c.warmup_cycles; })},
       }},
  };
  return table;
}

}  // namespace detail

/// Parses a config, starting from the defaults. Throws ParseError on syntax
/// errors and unknown keys, ConfigError when the result fails validation.
[[nodiscard]] inline ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig cfg;
  const auto& table = detail::key_table();
  const std::vector<std::pair<std::string, detail::KeyBinding>>* section = nullptr;
  std::string section_name;
  std::map<std::string, std::size_t> seen;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(is, raw)) {
    ++line;
    std::string_view s = raw;
    if (const auto c = s.find_first_of("#;"); c != std::string_view::npos) s = s.substr(0, c);
    s = detail::trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ParseError(line, "unterminated section header");
      section_name = std::string(detail::trim(s.substr(1, s.size() - 2)));
      section = nullptr;
      for (const auto& [name, keys] : table) {
        if (name == section_name) section = &keys;
      }
      if (!section) throw ParseError(line, "unknown section [" + section_name + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ParseError(line, "expected key = value");
    if (!section) throw ParseError(line, "key outside any section");
    const auto key = std::string(detail::trim(s.substr(0, eq)));
    const auto value = detail::trim(s.substr(eq + 1));
    const detail::KeyBinding* binding = nullptr;
    for (const auto& [name, b] : *section) {
      if (name == key) binding = &b;
    }
    if (!binding) throw ParseError(line, "unknown key '" + key + "' in [" + section_name + "]");
    const auto full = section_name + "." + key;
    if (seen.contains(full)) {
      throw ParseError(line, "duplicate key '" + key + "' (first set on line " +
                                 std::to_string(seen[full]) + ")");
    }
    seen[full] = line;
    if (value.empty()) throw ParseError(line, "empty value for '" + key + "'");
    binding->set(cfg, value, line);
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

[[nodiscard]] inline ExperimentConfig config_from_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

[[nodiscard]] inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  return parse_config(in);
}

/// Every key with its resolved value; parse_config(write_config(c)) == c.
inline void write_config(std::ostream& os, const ExperimentConfig& cfg) {
  bool first = true;
  for (const auto& [section, keys] : detail::key_table()) {
    if (!first) os << '\n';
    first = false;
    os << '[' << section << "]\n";
    for (const auto& [key, b] : keys) os << key << " = " << b.get(cfg) << '\n';
  }
}

[[nodiscard]] inline std::string config_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  write_config(os, cfg);
  return os.str();
}

/// FNV-1a 64 over the canonical text, so configs that resolve to the same
/// values hash the same regardless of layout or omitted defaults. out_dir is
/// left out: where results land does not change them.
[[nodiscard]] inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.out_dir = ExperimentConfig{}.out_dir;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_text(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

[[nodiscard]] inline std::string hash_hex(std::uint64_t h) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace xlo
