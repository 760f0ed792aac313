#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace attnflow::harness {

struct Column {
  std::string name;
  std::string unit;  ///< "", "time", "energy", "nat", ... (manifest metadata)
};

/// One CSV: a header row and numeric cells. When any note is non-empty an
/// extra text column is appended (used by sweeps to record per-point
/// failures without aborting the sweep).
struct Table {
  std::string name;  ///< file stem, without extension
  std::vector<Column> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> notes;
  std::string note_column = "error";
};

/// Shortest round-trippable decimal representation; pinned so that rerunning
/// a scenario reproduces files byte for byte.
std::string format_double(double v);

std::filesystem::path write_csv(const std::filesystem::path& dir, const Table& table);

}  // namespace attnflow::harness
