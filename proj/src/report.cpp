#include "dtnt/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace dtnt {

namespace {

const char* kConditions[] = {"normal", "fog0.08", "fog0.16", "fog0.24"};

std::string fmt4(double v) {
  if (std::isnan(v)) return "nan";
  return format_fixed(v, 4);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  return fields;
}

}  // namespace

bool valid_condition(const std::string& condition) {
  for (const char* c : kConditions)
    if (condition == c) return true;
  return false;
}

void emit_report(const std::vector<ReportRow>& rows, const std::string& out_dir) {
  if (rows.empty()) fail_value("report: no results");
  std::set<std::pair<std::string, std::string>> seen;
  for (const ReportRow& r : rows) {
    if (!valid_condition(r.condition))
      fail_value("report: unknown condition '" + r.condition +
                 "' (expected normal, fog0.08, fog0.16 or fog0.24)");
    if (!seen.insert({r.tag, r.condition}).second)
      fail_value("report: duplicate entry for (" + r.tag + ", " + r.condition + ")");
  }

  std::filesystem::create_directories(out_dir);
  const std::string csv_path = out_dir + "/report.csv";
  {
    std::ofstream os(csv_path);
    if (!os) fail_io("cannot write '" + csv_path + "'");
    os << "# dtnt-report-v1\n";
    os << "tag,condition,accuracy,precision,recall,f1\n";
    for (const ReportRow& r : rows) {
      const MetricsResult m = metrics(r.cm);
      os << r.tag << ',' << r.condition << ',' << fmt4(m.accuracy) << ','
         << fmt4(m.precision) << ',' << fmt4(m.recall) << ',' << fmt4(m.f1) << '\n';
    }
  }

  // the markdown grid is rendered from the re-parsed csv so the two files can
  // never drift apart
  const std::vector<ParsedReportRow> parsed = parse_report_csv(csv_path);
  std::ofstream md(out_dir + "/report.md");
  if (!md) fail_io("cannot write '" + out_dir + "/report.md'");
  md << render_markdown(parsed);
}

std::vector<ParsedReportRow> parse_report_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail_io("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line.rfind("# dtnt-report-v", 0) != 0)
    fail_io("'" + path + "' is not a report csv");
  if (!std::getline(is, line)) fail_io("'" + path + "' is missing its header");
  std::vector<ParsedReportRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 6) fail_io("malformed report row '" + line + "'");
    rows.push_back({f[0], f[1], f[2], f[3], f[4], f[5]});
  }
  return rows;
}

std::string render_markdown(const std::vector<ParsedReportRow>& rows) {
  // column groups in the paper's orientation: models down, conditions across
  std::vector<std::string> tags;
  std::vector<std::string> conditions;
  for (const ParsedReportRow& r : rows) {
    if (std::find(tags.begin(), tags.end(), r.tag) == tags.end()) tags.push_back(r.tag);
    if (std::find(conditions.begin(), conditions.end(), r.condition) == conditions.end())
      conditions.push_back(r.condition);
  }
  std::ostringstream os;
  os << "| Model |";
  for (const std::string& c : conditions)
    os << ' ' << c << " acc | " << c << " prec | " << c << " rec | " << c << " f1 |";
  os << '\n';
  os << "| --- |";
  for (size_t i = 0; i < conditions.size(); ++i) os << " --- | --- | --- | --- |";
  os << '\n';
  std::vector<std::string> warnings;
  for (const std::string& tag : tags) {
    os << "| " << tag << " |";
    for (const std::string& cond : conditions) {
      const ParsedReportRow* found = nullptr;
      for (const ParsedReportRow& r : rows)
        if (r.tag == tag && r.condition == cond) found = &r;
      if (!found) {
        os << " - | - | - | - |";
        continue;
      }
      os << ' ' << found->accuracy << " | " << found->precision << " | " << found->recall
         << " | " << found->f1 << " |";
      if (found->precision == "nan" || found->recall == "nan" || found->f1 == "nan")
        warnings.push_back("warning: undefined metric for (" + tag + ", " + cond +
                           "), empty denominator");
    }
    os << '\n';
  }
  for (const std::string& w : warnings) os << '\n' << w << '\n';
  return os.str();
}

void append_result_row(const std::string& path, const ReportRow& row) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream os(path, std::ios::app);
  if (!os) fail_io("cannot write '" + path + "'");
  if (fresh) {
    os << "# dtnt-results-v1\n";
    os << "tag,condition,tp,tn,fp,fn\n";
  }
  os << row.tag << ',' << row.condition << ',' << row.cm.tp << ',' << row.cm.tn << ','
     << row.cm.fp << ',' << row.cm.fn << '\n';
}

std::vector<ReportRow> read_result_rows(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail_io("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line.rfind("# dtnt-results-v", 0) != 0)
    fail_io("'" + path + "' is not a results csv");
  std::getline(is, line);  // header
  std::vector<ReportRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 6) fail_io("malformed results row '" + line + "'");
    ReportRow r;
    r.tag = f[0];
    r.condition = f[1];
    r.cm.tp = std::stoull(f[2]);
    r.cm.tn = std::stoull(f[3]);
    r.cm.fp = std::stoull(f[4]);
    r.cm.fn = std::stoull(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace dtnt
