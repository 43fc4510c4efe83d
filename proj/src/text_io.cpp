#include "hrd/text_io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hrd {

std::string format_double(double x) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf.data(), end);
}

double parse_double(std::string_view text, const std::string& source, std::size_t line) {
  text = trim(text);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError(source, line, "expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

std::vector<Directive> read_directives(std::istream& in, const std::string& source) {
  std::vector<Directive> out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    Directive d;
    d.line = line_no;
    const auto eq = line.find('=');
    const auto space = line.find_first_of(" \t");
    if (eq != std::string_view::npos && (space == std::string_view::npos || eq < space ||
                                         trim(line.substr(space, eq - space)).empty())) {
      // key = value
      const auto key = trim(line.substr(0, eq));
      const auto value = trim(line.substr(eq + 1));
      if (key.empty() || value.empty()) throw ParseError(source, line_no, "malformed 'key = value' line");
      d.fields.emplace(std::string(key), std::string(value));
      out.push_back(std::move(d));
      continue;
    }

    std::istringstream words{std::string(line)};
    words >> d.head;
    std::string token;
    while (words >> token) {
      const auto pos = token.find('=');
      if (pos == std::string::npos || pos == 0 || pos + 1 == token.size()) {
        throw ParseError(source, line_no, "expected key=value, got '" + token + "'");
      }
      if (!d.fields.emplace(token.substr(0, pos), token.substr(pos + 1)).second) {
        throw ParseError(source, line_no, "duplicate key '" + token.substr(0, pos) + "'");
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

double require_field(const Directive& d, const std::string& key, const std::string& source) {
  const auto it = d.fields.find(key);
  if (it == d.fields.end()) throw ParseError(source, d.line, "missing field '" + key + "'");
  return parse_double(it->second, source, d.line);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace hrd
