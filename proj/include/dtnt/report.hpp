#pragma once

#include <string>
#include <vector>

#include "dtnt/train.hpp"

namespace dtnt {

// one evaluated configuration: model tag x weather condition
struct ReportRow {
  std::string tag;
  std::string condition;  // normal | fog0.08 | fog0.16 | fog0.24
  ConfusionMatrix cm;
};

bool valid_condition(const std::string& condition);

// writes report.csv (one row per tag x condition, metrics at 4 decimals,
// round-half-even) and report.md (models x conditions grid built from the
// re-parsed csv). Undefined metrics print as nan plus a warning row.
void emit_report(const std::vector<ReportRow>& rows, const std::string& out_dir);

struct ParsedReportRow {
  std::string tag;
  std::string condition;
  std::string accuracy, precision, recall, f1;  // as formatted in the csv
};

std::vector<ParsedReportRow> parse_report_csv(const std::string& path);
std::string render_markdown(const std::vector<ParsedReportRow>& rows);

// raw results file: one confusion matrix per evaluated (tag, condition)
void append_result_row(const std::string& path, const ReportRow& row);
std::vector<ReportRow> read_result_rows(const std::string& path);

}  // namespace dtnt
