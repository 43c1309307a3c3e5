#pragma once

// Plain-text instance records.
//
//   xlo-instance 1
//   budget <W>
//   units <M>
//   du <index> <q> <l> <t_s> <d_s> <theta> <c>     (M lines, FIFO order)
//   dag <E>                                        (optional section)
//   edge <i> <j>                                   (E lines, DU i depends on DU j)
//
// Indices are 1-based. Reals are written in shortest round-trip form, so
// write -> read reproduces every double bit for bit. Blank lines and lines
// starting with '#' are ignored.

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "xlo/core_types.hpp"

namespace xlo {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

[[nodiscard]] inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const auto start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

template <class T>
T parse_number(std::string_view tok, std::size_t line) {
  T v{};
  const auto* end = tok.data() + tok.size();
  const auto res = std::from_chars(tok.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw ParseError(line, "bad number '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace detail

inline void write_instance(std::ostream& os, const Instance& inst) {
  os << "xlo-instance 1\n";
  os << "budget " << format_real(inst.budget) << '\n';
  os << "units " << inst.units.size() << '\n';
  os << "# index q l t_s d_s theta c\n";
  for (const auto& du : inst.units) {
    os << "du " << du.index << ' ' << format_real(du.q) << ' ' << format_real(du.l) << ' '
       << format_real(du.t) << ' ' << format_real(du.d) << ' ' << format_real(du.theta) << ' '
       << format_real(du.c) << '\n';
  }
  if (inst.graph) {
    os << "dag " << inst.graph->edges().size() << '\n';
    for (const auto& e : inst.graph->edges()) {
      os << "edge " << (e.from + 1) << ' ' << (e.to + 1) << '\n';
    }
  }
}

[[nodiscard]] inline std::string to_text(const Instance& inst) {
  std::ostringstream os;
  write_instance(os, inst);
  return os.str();
}

[[nodiscard]] inline Instance read_instance(std::istream& is) {
  Instance inst;
  std::string raw;
  std::size_t line = 0;
  bool header = false;
  std::optional<std::size_t> declared_units;
  std::optional<std::size_t> declared_edges;
  std::vector<DependencyGraph::Edge> edges;
  bool have_budget = false;

  while (std::getline(is, raw)) {
    ++line;
    const auto toks = detail::split_ws(raw);
    if (toks.empty() || toks[0].front() == '#') continue;
    const auto key = toks[0];
    if (!header) {
      if (key != "xlo-instance" || toks.size() != 2 || toks[1] != "1") {
        throw ParseError(line, "expected 'xlo-instance 1' header");
      }
      header = true;
      continue;
    }
    if (key == "budget") {
      if (toks.size() != 2) throw ParseError(line, "budget takes one value");
      inst.budget = detail::parse_number<double>(toks[1], line);
      have_budget = true;
    } else if (key == "units") {
      if (toks.size() != 2) throw ParseError(line, "units takes one value");
      declared_units = detail::parse_number<std::size_t>(toks[1], line);
    } else if (key == "du") {
      if (toks.size() != 8) throw ParseError(line, "du record needs 7 fields");
      DataUnit du;
      du.index = detail::parse_number<std::size_t>(toks[1], line);
      du.q = detail::parse_number<double>(toks[2], line);
      du.l = detail::parse_number<double>(toks[3], line);
      du.t = detail::parse_number<double>(toks[4], line);
      du.d = detail::parse_number<double>(toks[5], line);
      du.theta = detail::parse_number<double>(toks[6], line);
      du.c = detail::parse_number<double>(toks[7], line);
      if (du.index != inst.units.size() + 1) throw ParseError(line, "du records out of order");
      inst.units.push_back(du);
    } else if (key == "dag") {
      if (toks.size() != 2) throw ParseError(line, "dag takes one value");
      if (declared_edges) throw ParseError(line, "duplicate dag section");
      declared_edges = detail::parse_number<std::size_t>(toks[1], line);
    } else if (key == "edge") {
      if (!declared_edges) throw ParseError(line, "edge before dag section");
      if (toks.size() != 3) throw ParseError(line, "edge needs two indices");
      const auto from = detail::parse_number<std::size_t>(toks[1], line);
      const auto to = detail::parse_number<std::size_t>(toks[2], line);
      if (from == 0 || to == 0) throw ParseError(line, "edge indices are 1-based");
      edges.push_back({from - 1, to - 1});
    } else {
      throw ParseError(line, "unknown record '" + std::string(key) + "'");
    }
  }
  if (!header) throw ParseError(line, "empty input");
  if (!have_budget) throw ParseError(line, "missing budget");
  if (declared_units && *declared_units != inst.units.size()) {
    throw ParseError(line, "unit count does not match 'units' header");
  }
  if (declared_edges) {
    if (*declared_edges != edges.size()) throw ParseError(line, "edge count does not match 'dag' header");
    try {
      inst.graph = DependencyGraph(inst.units.size(), std::move(edges));
    } catch (const std::out_of_range& e) {
      throw ParseError(line, e.what());
    }
  }
  return inst;
}

[[nodiscard]] inline Instance from_text(const std::string& text) {
  std::istringstream is(text);
  return read_instance(is);
}

inline void save_instance(const std::string& path, const Instance& inst) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_instance(os, inst);
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

[[nodiscard]] inline Instance load_instance(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_instance(is);
}

}  // namespace xlo
