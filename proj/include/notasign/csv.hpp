#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "notasign/error.hpp"

namespace notasign {

// Round-trip-exact decimal formatting for CSV output.
std::string fmt_double(double value);

// Minimal CSV writer for the project's table formats. Fields must not
// contain commas or newlines; every emitted table obeys that.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
  size_t columns_;
  std::string path_;
};

}  // namespace notasign
