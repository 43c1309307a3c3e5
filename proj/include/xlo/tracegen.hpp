#pragma once

// Seeded synthetic workloads. Arrivals, impacts, channel gains and DAG edges
// draw from separate streams derived from the one seed, so changing e.g. the
// channel law leaves the arrival sequence untouched.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "xlo/core_types.hpp"
#include "xlo/rng.hpp"

namespace xlo {

struct ChannelSpec {
  enum class Kind { uniform, exponential, constant };
  Kind kind = Kind::uniform;
  double a = 0.5;  // uniform: low; exponential: mean; constant: value
  double b = 1.5;  // uniform: high

  [[nodiscard]] double draw(Rng& rng) const {
    switch (kind) {
      case Kind::uniform: return rng.uniform(a, b);
      case Kind::exponential: return rng.exponential(a);
      case Kind::constant: return a;
    }
    return a;
  }
};

[[nodiscard]] inline std::string to_string(ChannelSpec::Kind k) {
  switch (k) {
    case ChannelSpec::Kind::uniform: return "uniform";
    case ChannelSpec::Kind::exponential: return "exponential";
    case ChannelSpec::Kind::constant: return "constant";
  }
  return "uniform";
}

[[nodiscard]] inline ChannelSpec::Kind parse_channel_kind(std::string_view s) {
  if (s == "uniform") return ChannelSpec::Kind::uniform;
  if (s == "exponential") return ChannelSpec::Kind::exponential;
  if (s == "constant") return ChannelSpec::Kind::constant;
  throw std::invalid_argument("unknown channel kind '" + std::string(s) + "'");
}

enum class DagKind { none, random, ibpbp, gop8 };

[[nodiscard]] inline DagKind parse_dag_kind(std::string_view s) {
  if (s == "none") return DagKind::none;
  if (s == "random") return DagKind::random;
  if (s == "ibpbp") return DagKind::ibpbp;
  if (s == "gop8") return DagKind::gop8;
  throw std::invalid_argument("unknown dag kind '" + std::string(s) + "'");
}

[[nodiscard]] inline std::string to_string(DagKind k) {
  switch (k) {
    case DagKind::none: return "none";
    case DagKind::random: return "random";
    case DagKind::ibpbp: return "ibpbp";
    case DagKind::gop8: return "gop8";
  }
  return "none";
}

struct TraceParams {
  std::uint64_t seed = 1;
  std::size_t num_dus = 10000;
  double q_low = 50.0;
  double q_high = 150.0;
  double size = 10.0;                // l, in size units (kilobits)
  double mean_interarrival = 0.05;   // seconds
  double lifetime = 0.05;            // seconds
  double theta = 0.5;                // per size unit
  ChannelSpec channel{};
  double budget = 10.0;              // W
  DagKind dag = DagKind::none;
  std::size_t cycle_len = 10;
  double edge_prob = 0.3;

  void validate() const {
    if (!(q_low > 0.0) || !(q_high > q_low)) throw std::invalid_argument("trace: need 0 < q_low < q_high");
    if (!(size > 0.0)) throw std::invalid_argument("trace: size must be positive");
    if (!(mean_interarrival > 0.0)) throw std::invalid_argument("trace: mean interarrival must be positive");
    if (!(lifetime > 0.0)) throw std::invalid_argument("trace: lifetime must be positive");
    if (!(theta > 0.0)) throw std::invalid_argument("trace: theta must be positive");
    if (!(budget > 0.0)) throw std::invalid_argument("trace: budget must be positive");
    if (cycle_len == 0) throw std::invalid_argument("trace: cycle length must be at least 1");
    if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw std::invalid_argument("trace: edge_prob outside [0, 1]");
    switch (channel.kind) {
      case ChannelSpec::Kind::uniform:
        if (!(channel.a > 0.0) || !(channel.b >= channel.a)) {
          throw std::invalid_argument("trace: uniform channel needs 0 < low <= high");
        }
        break;
      case ChannelSpec::Kind::exponential:
      case ChannelSpec::Kind::constant:
        if (!(channel.a > 0.0)) throw std::invalid_argument("trace: channel parameter must be positive");
        break;
    }
  }
};

namespace streams {
inline constexpr std::uint64_t arrivals = 0;
inline constexpr std::uint64_t impacts = 1;
inline constexpr std::uint64_t channel = 2;
inline constexpr std::uint64_t dag = 3;
}  // namespace streams

// Edges within one cycle, as (dependent, reference) offsets from the cycle
// start. Decode order of the IBPBP pattern is I P2 B1 P4 B3.
[[nodiscard]] inline std::vector<DependencyGraph::Edge> ibpbp_pattern() {
  return {{1, 0}, {2, 0}, {2, 1}, {3, 1}, {4, 1}, {4, 3}};
}

// Eight-frame temporal-level tree: the lowpass frame, then highpass frames
// level by level; each frame references its parent one level up.
[[nodiscard]] inline std::vector<DependencyGraph::Edge> gop8_pattern() {
  return {{1, 0}, {2, 1}, {3, 1}, {4, 2}, {5, 2}, {6, 3}, {7, 3}};
}

/// DAG over `nodes` units with dependencies confined to consecutive cycles.
/// The fixed kinds use their own cycle length (5 for ibpbp, 8 for gop8); a
/// trailing partial cycle keeps only the edges that fit.
[[nodiscard]] inline DependencyGraph generate_dag(DagKind kind, std::size_t nodes,
                                                  std::size_t cycle_len, std::uint64_t seed,
                                                  double edge_prob = 0.3) {
  if (cycle_len == 0) throw std::invalid_argument("generate_dag: cycle length must be at least 1");
  std::vector<DependencyGraph::Edge> edges;
  auto tile = [&](const std::vector<DependencyGraph::Edge>& pattern, std::size_t len) {
    for (std::size_t base = 0; base < nodes; base += len) {
      for (const auto& e : pattern) {
        if (base + e.from < nodes) edges.push_back({base + e.from, base + e.to});
      }
    }
  };
  switch (kind) {
    case DagKind::none: break;
    case DagKind::random: {
      Rng rng(derive_seed(seed, streams::dag));
      for (std::size_t base = 0; base < nodes; base += cycle_len) {
        const std::size_t end = std::min(nodes, base + cycle_len);
        for (std::size_t j = base + 1; j < end; ++j) {
          for (std::size_t k = base; k < j; ++k) {
            if (rng.bernoulli(edge_prob)) edges.push_back({j, k});
          }
        }
      }
      break;
    }
    case DagKind::ibpbp: tile(ibpbp_pattern(), 5); break;
    case DagKind::gop8: tile(gop8_pattern(), 8); break;
  }
  return DependencyGraph(nodes, std::move(edges));
}

[[nodiscard]] inline std::size_t effective_cycle_len(DagKind kind, std::size_t configured) {
  switch (kind) {
    case DagKind::ibpbp: return 5;
    case DagKind::gop8: return 8;
    default: return configured;
  }
}

/// t_1 = 0, t_{i+1} = t_i + Exp(mean), d_i = t_i + lifetime, q_i uniform,
/// c_i i.i.d. from the channel spec.
[[nodiscard]] inline Instance generate_trace(const TraceParams& p) {
  p.validate();
  Rng arrivals(derive_seed(p.seed, streams::arrivals));
  Rng impacts(derive_seed(p.seed, streams::impacts));
  Rng channel(derive_seed(p.seed, streams::channel));
  Instance inst;
  inst.budget = p.budget;
  inst.units.reserve(p.num_dus);
  double t = 0.0;
  for (std::size_t i = 0; i < p.num_dus; ++i) {
    if (i > 0) t += arrivals.exponential(p.mean_interarrival);
    DataUnit du;
    du.index = i + 1;
    du.q = impacts.uniform(p.q_low, p.q_high);
    du.l = p.size;
    du.t = t;
    du.d = t + p.lifetime;
    du.theta = p.theta;
    du.c = p.channel.draw(channel);
    inst.units.push_back(du);
  }
  if (p.dag != DagKind::none) {
    inst.graph = generate_dag(p.dag, p.num_dus, p.cycle_len, p.seed, p.edge_prob);
  }
  return inst;
}

/// Units [first, first + count) as a standalone instance, with the DAG edges
/// that stay inside the range.
[[nodiscard]] inline Instance slice(const Instance& inst, std::size_t first, std::size_t count) {
  if (first > inst.size()) throw std::out_of_range("slice: start beyond the instance");
  const std::size_t end = std::min(inst.size(), first + count);
  Instance out;
  out.budget = inst.budget;
  for (std::size_t i = first; i < end; ++i) {
    auto du = inst.units[i];
    du.index = i - first + 1;
    out.units.push_back(du);
  }
  if (inst.graph) {
    std::vector<DependencyGraph::Edge> edges;
    for (const auto& e : inst.graph->edges()) {
      if (e.from >= first && e.from < end && e.to >= first && e.to < end) {
        edges.push_back({e.from - first, e.to - first});
      }
    }
    out.graph = DependencyGraph(end - first, std::move(edges));
  }
  return out;
}

}  // namespace xlo
