#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sfseg/errors.hpp"
#include "sfseg/labels.hpp"

namespace sfseg::detail {

struct Record {
  int line = 0;
  std::vector<std::string> fields;
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Comma-separated records; '#' lines and blank lines are skipped.
inline std::vector<Record> parse_records(std::string_view text) {
  std::vector<Record> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    Record rec{line_no, {}};
    std::size_t start = 0;
    while (true) {
      const auto comma = t.find(',', start);
      rec.fields.push_back(trim(std::string_view(t).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::uint8_t parse_channel(const std::string& s, int line) {
  std::size_t used = 0;
  int v = -1;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || v < 0 || v > 255) {
    throw DataError("line " + std::to_string(line) + ": bad color channel '" + s + "'");
  }
  return static_cast<std::uint8_t>(v);
}

inline Rgb parse_rgb(const Record& rec, std::size_t first) {
  return {parse_channel(rec.fields[first], rec.line), parse_channel(rec.fields[first + 1], rec.line),
          parse_channel(rec.fields[first + 2], rec.line)};
}

std::string read_text_file(const std::string& path);

}  // namespace sfseg::detail
