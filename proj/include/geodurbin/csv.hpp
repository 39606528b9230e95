#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace geodurbin::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // each row has header.size() fields

  // Index of `name` in the header, if present.
  std::optional<std::size_t> column(std::string_view name) const;
};

// RFC 4180 reader: comma separated, optional double quotes, CRLF or LF.
// A leading UTF-8 byte-order mark is skipped. Blank lines are ignored.
// Throws ParseError on ragged rows, IoError if the file cannot be opened.
Table read(const std::filesystem::path& path);
Table parse(std::string_view text);

std::string quote(std::string_view field);

// Shortest decimal that parses back to exactly the same double.
std::string format_double(double value);
// Fixed-point with `digits` decimals, used for SVG geometry.
std::string format_fixed(double value, int digits);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

// Accumulates rows and writes them in one go; the file is created only by
// `save`, which throws IoError on failure.
class Writer {
 public:
  explicit Writer(std::vector<std::string> header);

  Writer& row(const std::vector<std::string>& fields);
  std::string str() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::string buffer_;
  std::size_t width_;
};

void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace geodurbin::csv
