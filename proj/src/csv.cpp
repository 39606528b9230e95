#include "geodurbin/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "geodurbin/error.hpp"

namespace geodurbin {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DuplicateRegion: return "DuplicateRegion";
    case ErrorCode::BadCoordinate: return "BadCoordinate";
    case ErrorCode::UnknownRegion: return "UnknownRegion";
    case ErrorCode::MissingValue: return "MissingValue";
    case ErrorCode::InvalidCount: return "InvalidCount";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::TooFewObservations: return "TooFewObservations";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooFewSimulations: return "TooFewSimulations";
    case ErrorCode::NameClash: return "NameClash";
    case ErrorCode::SingularFilter: return "SingularFilter";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::BoundaryRho: return "BoundaryRho";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::BadShape: return "BadShape";
    case ErrorCode::NoGeometry: return "NoGeometry";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string compose(ErrorCode code, const std::string& detail,
                    const std::string& message) {
  std::string out{to_string(code)};
  if (!detail.empty()) out += "(" + detail + ")";
  if (!message.empty()) out += ": " + message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, std::string detail, std::string message)
    : std::runtime_error(compose(code, detail, message)),
      code_(code),
      detail_(std::move(detail)),
      message_(std::move(message)) {}

namespace csv {

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

Table parse(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_record = [&] {
    if (field_started || !record.empty()) {
      record.push_back(std::move(field));
      records.push_back(std::move(record));
    }
    record.clear();
    field.clear();
    field_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line),
                "unterminated quoted field");
  }
  end_record();

  Table table;
  if (records.empty()) return table;
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw Error(ErrorCode::ParseError, "row " + std::to_string(r),
                  "expected " + std::to_string(table.header.size()) +
                      " fields, found " + std::to_string(records[r].size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  (void)ec;
  return std::string(buf, end);
}

std::string format_fixed(double value, int digits) {
  char buf[64];
  auto [end, ec] =
      std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, digits);
  (void)ec;
  std::string out(buf, end);
  if (out.starts_with('-') &&
      out.find_first_not_of("-0.") == std::string::npos) {
    out.erase(0, 1);  // no "-0.00"
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.starts_with('+')) text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::optional<long long> parse_int(std::string_view text) {
  text = trim(text);
  if (text.starts_with('+')) text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

Writer::Writer(std::vector<std::string> header) : width_(header.size()) {
  row(header);
}

Writer& Writer::row(const std::vector<std::string>& fields) {
  if (fields.size() != width_) {
    throw Error(ErrorCode::DimensionMismatch, "csv row",
                "expected " + std::to_string(width_) + " fields");
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += quote(fields[i]);
  }
  buffer_ += '\n';
  return *this;
}

std::string Writer::str() const { return buffer_; }

void Writer::save(const std::filesystem::path& path) const {
  write_text(path, buffer_);
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, path.string(), "cannot open for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::IoError, path.string(), "write failed");
}

}  // namespace csv
}  // namespace geodurbin
