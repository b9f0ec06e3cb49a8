// SPDX-License-Identifier: Apache-2.0
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "mpolstm/error.hpp"
#include "mpolstm/io.hpp"

namespace mpolstm {

namespace {

constexpr std::size_t kColumnCount = 7;

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw IoError("bad number '" + s + "' in report");
  return v;
}

std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw IoError("bad integer '" + s + "' in report");
  return v;
}

std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

// Splits RFC-4180 records; quoted fields may hold commas, quotes and newlines.
std::vector<std::vector<std::string>> split_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> rec;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      rec.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        rec.push_back(std::move(field));
        records.push_back(std::move(rec));
      }
      rec.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw IoError("unterminated quote in CSV report");
  if (any || !field.empty()) {
    rec.push_back(std::move(field));
    records.push_back(std::move(rec));
  }
  return records;
}

std::string format_csv(const SweepReport& report) {
  std::ostringstream out;
  out << kReportColumns << '\n';
  for (const SweepRow& r : report.rows) {
    out << format_double(r.rate) << ',' << quote_csv(r.method) << ',' << format_double(r.metric) << ',' << r.params
        << ',' << format_double(r.ratio_actual) << ',' << r.seed << ',' << format_double(r.wall_time) << '\n';
  }
  return out.str();
}

SweepReport parse_csv(const std::string& text) {
  auto records = split_csv(text);
  if (records.empty()) throw IoError("empty CSV report");
  std::string header;
  for (std::size_t k = 0; k < records[0].size(); ++k) header += (k ? "," : "") + records[0][k];
  if (header != kReportColumns) throw IoError("unexpected CSV header '" + header + "'");
  SweepReport report;
  for (std::size_t n = 1; n < records.size(); ++n) {
    const auto& f = records[n];
    if (f.size() != kColumnCount) throw IoError("CSV row " + std::to_string(n) + " has wrong column count");
    report.rows.push_back(SweepRow{parse_double(f[0]), f[1], parse_double(f[2]), static_cast<std::size_t>(parse_uint(f[3])),
                                   parse_double(f[4]), parse_uint(f[5]), parse_double(f[6])});
  }
  return report;
}

// NaN and infinities have no JSON literal; they become null.
nlohmann::json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

double json_double(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) throw IoError("expected a number in JSON report");
  return j.get<double>();
}

std::string format_json(const SweepReport& report) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const SweepRow& r : report.rows) {
    nlohmann::ordered_json row;
    row["rate"] = json_number(r.rate);
    row["method"] = r.method;
    row["metric"] = json_number(r.metric);
    row["params"] = r.params;
    row["ratio_actual"] = json_number(r.ratio_actual);
    row["seed"] = r.seed;
    row["wall_time"] = json_number(r.wall_time);
    rows.push_back(row);
  }
  nlohmann::ordered_json doc;
  doc["columns"] = nlohmann::json::array({"rate", "method", "metric", "params", "ratio_actual", "seed", "wall_time"});
  doc["rows"] = rows;
  return doc.dump(2) + "\n";
}

SweepReport parse_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed JSON report: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("rows") || !doc["rows"].is_array()) throw IoError("JSON report lacks 'rows'");
  SweepReport report;
  try {
    for (const auto& r : doc["rows"]) {
      report.rows.push_back(SweepRow{json_double(r.at("rate")), r.at("method").get<std::string>(),
                                     json_double(r.at("metric")), r.at("params").get<std::size_t>(),
                                     json_double(r.at("ratio_actual")), r.at("seed").get<std::uint64_t>(),
                                     json_double(r.at("wall_time"))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad JSON report row: ") + e.what());
  }
  return report;
}

}  // namespace

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "json") return ReportFormat::kJson;
  throw ConfigError("unknown report format '" + s + "' (expected csv or json)");
}

ReportFormat report_format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".json" ? ReportFormat::kJson : ReportFormat::kCsv;
}

std::string format_report(const SweepReport& report, ReportFormat fmt) {
  return fmt == ReportFormat::kCsv ? format_csv(report) : format_json(report);
}

SweepReport parse_report(const std::string& text, ReportFormat fmt) {
  return fmt == ReportFormat::kCsv ? parse_csv(text) : parse_json(text);
}

void emit_report(const SweepReport& report, ReportFormat fmt, const std::filesystem::path& path) {
  SweepReport ordered = report;
  canonical_order(ordered);
  const std::string text = format_report(ordered, fmt);
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

SweepReport load_report(const std::filesystem::path& path, ReportFormat fmt) {
  const auto bytes = read_file(path);
  return parse_report(std::string(bytes.begin(), bytes.end()), fmt);
}

}  // namespace mpolstm
