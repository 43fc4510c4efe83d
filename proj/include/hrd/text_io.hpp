// Small text-format helpers shared by the file readers and writers.

#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hrd {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal that round-trips to the same double.
std::string format_double(double x);

double parse_double(std::string_view text, const std::string& source, std::size_t line);

std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

// One logical line of a key/value text file: the leading word plus
// key=value pairs. "key = value" lines are reported with head empty.
struct Directive {
  std::size_t line = 0;
  std::string head;
  std::map<std::string, std::string> fields;
};

// Parses "# comment", "key = value" and "head k1=v1 k2=v2" lines.
std::vector<Directive> read_directives(std::istream& in, const std::string& source);

double require_field(const Directive& d, const std::string& key, const std::string& source);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace hrd
