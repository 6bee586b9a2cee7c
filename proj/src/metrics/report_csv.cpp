#include <charconv>
#include <cmath>

#include "layerlens/error.h"
#include "layerlens/lltn.h"
#include "layerlens/metrics.h"

namespace layerlens {

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(std::string_view s, std::size_t line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw IoError("report line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_row(std::string_view row, std::size_t line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const char c = row[i];
    if (quoted) {
      if (c == '"' && i + 1 < row.size() && row[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw IoError("report line " + std::to_string(line) + ": unterminated quote");
  return fields;
}

}  // namespace

std::string to_csv(const LayerwiseReport& report) {
  std::string out(kReportHeader);
  out += '\n';
  for (const auto& r : report.records) {
    out += quote(r.model) + ',' + quote(r.layer) + ',' + quote(r.input_set) + ',' + format_double(r.H_total) + ',' +
           format_double(r.H_hat_total) + ',' + format_double(r.concentration) + ',' + format_double(r.epsilon) +
           ',' + format_double(r.delta_f_sq) + ',' + (r.conformant ? "true" : "false") + '\n';
  }
  return out;
}

void export_csv(const LayerwiseReport& report, const std::filesystem::path& path) {
  write_file_atomic(path, to_csv(report));
}

LayerwiseReport parse_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    lines.push_back(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
  }
  if (lines.empty() || lines[0] != kReportHeader) throw IoError("report does not start with the expected header");
  LayerwiseReport report;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    if (lines[n].empty()) continue;
    const auto f = split_row(lines[n], n + 1);
    if (f.size() != 9) throw IoError("report line " + std::to_string(n + 1) + ": expected 9 fields");
    ReportRecord r;
    r.model = f[0];
    r.layer = f[1];
    r.input_set = f[2];
    r.H_total = parse_double(f[3], n + 1);
    r.H_hat_total = parse_double(f[4], n + 1);
    r.concentration = parse_double(f[5], n + 1);
    r.epsilon = parse_double(f[6], n + 1);
    r.delta_f_sq = parse_double(f[7], n + 1);
    if (f[8] != "true" && f[8] != "false") throw IoError("report line " + std::to_string(n + 1) + ": bad flag");
    r.conformant = f[8] == "true";
    report.records.push_back(std::move(r));
  }
  return report;
}

LayerwiseReport read_csv(const std::filesystem::path& path) {
  const std::vector<char> bytes = read_file_bytes(path);
  return parse_csv(std::string_view(bytes.data(), bytes.size()));
}

}  // namespace layerlens
