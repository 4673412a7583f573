#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace tofspec::tables {

/// Numeric table read from text: rows of at least `min_columns` numbers.
struct NumericTable {
  std::vector<std::string> header;  // empty when the file had none
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

/// Parses whitespace/comma/semicolon separated decimals with std::from_chars,
/// independent of the global locale. A single non-numeric line before the
/// first data row is taken as the header; '#' starts a comment.
NumericTable parse_numeric_table(std::istream& in, std::size_t min_columns,
                                 const std::string& source_name);
NumericTable read_numeric_table(const std::filesystem::path& path, std::size_t min_columns);

enum class Format { kCsv, kJson };

Format parse_format(std::string_view name);

/// Row-oriented table for export. Values use the shortest round-trip
/// decimal form, so integral values print without a fraction.
struct Table {
  std::vector<std::string> comments;  // emitted as '# ' lines (csv) or "meta" (json)
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

void write_table(std::ostream& out, const Table& table, Format format);
void write_table(const std::filesystem::path& path, const Table& table, Format format);

/// Shortest round-trip decimal representation of `v`.
std::string format_double(double v);

/// 64-bit FNV-1a digest of a byte string, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace tofspec::tables
