#include "typodist/csv.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

#include "typodist/error.hpp"

namespace typodist::csv {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

void fail(const std::string& origin, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::FormatError, origin + ":" + std::to_string(line) + ": " + what);
}

Reader::Reader(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}

bool Reader::next(Row& row) {
  std::string line;
  // Skip blank lines.
  do {
    if (!std::getline(in_, line)) return false;
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  } while (line.empty());

  row.line = line_;
  row.fields.clear();
  std::string field;
  bool in_quotes = false;
  bool was_quoted = false;
  std::size_t i = 0;
  for (;;) {
    if (i == line.size()) {
      if (!in_quotes) break;
      std::string more;
      if (!std::getline(in_, more)) fail(origin_, row.line, "unterminated quoted field");
      ++line_;
      if (!more.empty() && more.back() == '\r') more.pop_back();
      field += '\n';
      line = std::move(more);
      i = 0;
      continue;
    }
    const char c = line[i++];
    if (in_quotes) {
      if (c == '"') {
        if (i < line.size() && line[i] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      if (!std::string(trim(field)).empty()) fail(origin_, row.line, "stray quote inside field");
      field.clear();
      in_quotes = true;
      was_quoted = true;
    } else if (c == ',') {
      row.fields.push_back(was_quoted ? field : std::string(trim(field)));
      field.clear();
      was_quoted = false;
    } else {
      if (was_quoted && c != ' ' && c != '\t') fail(origin_, row.line, "text after closing quote");
      if (!was_quoted) field += c;
    }
  }
  row.fields.push_back(was_quoted ? field : std::string(trim(field)));
  return true;
}

std::vector<Row> read_table(std::istream& in, const std::string& origin,
                            const std::vector<std::string>& expected) {
  Reader reader(in, origin);
  Row row;
  if (!reader.next(row)) fail(origin, 1, "missing header");
  if (row.fields != expected) {
    std::string want;
    for (const auto& f : expected) want += (want.empty() ? "" : ",") + f;
    fail(origin, row.line, "expected header '" + want + "'");
  }
  std::vector<Row> rows;
  while (reader.next(row)) {
    if (row.fields.size() != expected.size()) {
      fail(origin, row.line, "expected " + std::to_string(expected.size()) + " fields, got " +
                                 std::to_string(row.fields.size()));
    }
    rows.push_back(row);
  }
  return rows;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::optional<double> parse_unit_value(std::string_view text, const std::string& origin,
                                       std::size_t line) {
  text = trim(text);
  if (text.empty() || text == kMissing) return std::nullopt;
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || !std::isfinite(v)) {
    fail(origin, line, "invalid value '" + std::string(text) + "'");
  }
  if (v < 0.0 || v > 1.0) fail(origin, line, "value " + std::string(text) + " outside [0,1]");
  return v;
}

}  // namespace typodist::csv
