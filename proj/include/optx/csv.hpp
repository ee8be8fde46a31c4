#pragma once

#include <string>
#include <vector>

namespace optx {

// Shortest round-trip decimal form (std::to_chars), so repeated exports of
// the same data are byte-identical.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(const CsvTable& table, const std::string& path);
CsvTable read_csv(const std::string& path);

}  // namespace optx
