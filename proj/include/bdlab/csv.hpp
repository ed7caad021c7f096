#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace bdlab {

/// Shortest round-trip decimal form; "inf"/"-inf"/"nan" for non-finite values.
std::string format_double(double v);

/// Comma-separated, dot decimal, header row, LF line endings. Fields never
/// contain commas, so no quoting is performed.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& row(std::vector<std::string> fields);
  std::size_t rows() const noexcept { return rows_.size(); }
  const std::vector<std::string>& header() const noexcept { return header_; }
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Field helpers so rows read naturally: {cell(t), cell(j), cell("NN")}.
std::string cell(double v);
std::string cell(std::string_view s);
std::string cell(const char* s);
template <class I>
  requires std::is_integral_v<I>
std::string cell(I v) {
  return std::to_string(v);
}

/// Parses a CSV produced by CsvTable (no quoting).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace bdlab
