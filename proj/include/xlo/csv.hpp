#pragma once

// Plot-ready CSV output. Every file opens with a comment line carrying the
// config hash and seed, then the header row. Numbers use the shortest
// round-trip form, so identical inputs give byte-identical files.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "xlo/instance_io.hpp"

namespace xlo {

using CsvCell = std::variant<std::string, double, std::size_t>;

class CsvTable {
 public:
  CsvTable(std::vector<std::string> columns, std::string config_hash, std::string seed)
      : columns_(std::move(columns)), hash_(std::move(config_hash)), seed_(std::move(seed)) {}

  void add(std::vector<CsvCell> row) {
    if (row.size() != columns_.size()) {
      throw std::logic_error("csv: row has " + std::to_string(row.size()) + " cells, expected " +
                             std::to_string(columns_.size()));
    }
    rows_.push_back(std::move(row));
  }

  /// Extra comment lines placed after the table.
  void note(std::string text) { notes_.push_back(std::move(text)); }

  [[nodiscard]] const std::vector<std::string>& columns() const { return columns_; }
  [[nodiscard]] const std::vector<std::vector<CsvCell>>& rows() const { return rows_; }

  void write(std::ostream& os) const {
    os << "# config=" << hash_ << " seed=" << seed_ << '\n';
    for (std::size_t i = 0; i < columns_.size(); ++i) os << (i ? "," : "") << columns_[i];
    os << '\n';
    for (const auto& row : rows_) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) os << ',';
        std::visit([&](const auto& v) { os << cell_text(v); }, row[i]);
      }
      os << '\n';
    }
    for (const auto& n : notes_) os << "# " << n << '\n';
  }

  [[nodiscard]] std::string str() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

 private:
  static std::string cell_text(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + '"';
  }
  static std::string cell_text(double v) { return format_real(v); }
  static std::string cell_text(std::size_t v) { return std::to_string(v); }

  std::vector<std::string> columns_;
  std::string hash_;
  std::string seed_;
  std::vector<std::vector<CsvCell>> rows_;
  std::vector<std::string> notes_;
};

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
inline void write_file_atomically(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline void save_csv(const std::filesystem::path& path, const CsvTable& table) {
  write_file_atomically(path, table.str());
}

}  // namespace xlo
