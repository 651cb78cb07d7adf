#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace typodist::csv {

// Literal used for Missing cells in every CSV the engine reads or writes.
inline constexpr std::string_view kMissing = "--";

struct Row {
  std::size_t line = 0;  // 1-based line number of the row's first line
  std::vector<std::string> fields;
};

// RFC 4180 reader: quoted fields may contain commas, doubled quotes and
// newlines. Malformed quoting throws FormatError naming `origin` and line.
class Reader {
 public:
  Reader(std::istream& in, std::string origin);

  bool next(Row& row);
  const std::string& origin() const { return origin_; }

 private:
  std::istream& in_;
  std::string origin_;
  std::size_t line_ = 0;
};

// Reads the header, checks it equals `expected` and returns the body rows,
// each verified to carry expected.size() fields.
std::vector<Row> read_table(std::istream& in, const std::string& origin,
                            const std::vector<std::string>& expected);

std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest round-trip decimal representation.
std::string format_number(double v);

// `--` or empty -> nullopt. Other text must be a number in [0,1].
std::optional<double> parse_unit_value(std::string_view text, const std::string& origin,
                                       std::size_t line);

[[noreturn]] void fail(const std::string& origin, std::size_t line, const std::string& what);

}  // namespace typodist::csv
