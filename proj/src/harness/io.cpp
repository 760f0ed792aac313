#include "attnflow/harness/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace attnflow::harness {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::filesystem::path write_csv(const std::filesystem::path& dir, const Table& table) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path path = dir / (table.name + ".csv");
  std::ofstream out(path, std::ios::binary);  // binary: identical bytes on every platform
  if (!out) throw std::runtime_error("write_csv: cannot open " + path.string());

  bool with_notes = false;
  for (const std::string& n : table.notes)
    if (!n.empty()) with_notes = true;

  for (size_t c = 0; c < table.columns.size(); ++c) {
    if (c > 0) out << ',';
    out << table.columns[c].name;
  }
  if (with_notes) out << ',' << table.note_column;
  out << '\n';

  for (size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.columns.size())
      throw std::runtime_error("write_csv: row width mismatch in " + table.name);
    for (size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out << ',';
      out << format_double(row[c]);
    }
    if (with_notes) {
      std::string note = r < table.notes.size() ? table.notes[r] : "";
      for (char& ch : note)
        if (ch == ',' || ch == '\n') ch = ';';
      out << ',' << note;
    }
    out << '\n';
  }
  return path;
}

}  // namespace attnflow::harness
