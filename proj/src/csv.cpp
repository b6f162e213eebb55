#include "graphcliff/csv.hpp"

#include <fstream>
#include <sstream>

#include "graphcliff/tensor.hpp"  // Error

namespace graphcliff {

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool row_started = false;

  auto end_field = [&]() {
    record.push_back(field);
    field.clear();
  };
  auto end_record = [&]() {
    end_field();
    if (t.header.empty())
      t.header = record;
    else
      t.rows.push_back(record);
    record.clear();
    row_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"': in_quotes = true; row_started = true; break;
      case ',': end_field(); row_started = true; break;
      case '\r': break;
      case '\n':
        if (row_started || !field.empty() || !record.empty()) end_record();
        break;
      default: field.push_back(c); row_started = true; break;
    }
  }
  if (row_started || !field.empty() || !record.empty()) end_record();
  return t;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CSV file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write CSV file: " + path);
  auto write_row = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << csv_escape(row[i]);
    }
    out << '\n';
  };
  write_row(table.header);
  for (const auto& r : table.rows) write_row(r);
}

}  // namespace graphcliff
