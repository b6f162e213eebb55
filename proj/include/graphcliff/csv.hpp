#pragma once

// Minimal RFC-4180-ish CSV reading/writing (quoted fields, embedded commas).

#include <map>
#include <string>
#include <vector>

#include "graphcliff/tensor.hpp"  // Error

namespace graphcliff {

class DataError : public Error {
 public:
  using Error::Error;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // -1 if absent
  int column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);
void write_csv(const std::string& path, const CsvTable& table);
std::string csv_escape(const std::string& field);

}  // namespace graphcliff
