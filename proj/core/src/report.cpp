#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "refrec/errors.hpp"
#include "refrec/eval.hpp"

namespace refrec {

namespace {

constexpr std::string_view kThresholdNote =
    "Grounded tasks count a hit when IoU >= tau for tau in {0.50, 0.55, ..., 0.90}; "
    "the training reward uses the strict IoU > tau.";

struct Column {
  std::string_view header;
  std::string_view key;
  std::optional<double> MetricsReport::*aggregate = nullptr;
  std::optional<TaskCategory> task;
};

// Leaderboard column order.
const std::vector<Column>& columns() {
  static const std::vector<Column> cols{
      {"Acc_p", "acc_p", &MetricsReport::acc_p, std::nullopt},
      {"Acc_o", "acc_o", &MetricsReport::acc_o, std::nullopt},
      {"Attribute", "attribute", nullptr, TaskCategory::kAttribute},
      {"Position", "position", nullptr, TaskCategory::kPosition},
      {"Interaction", "interaction", nullptr, TaskCategory::kInteraction},
      {"Acc_API", "acc_api", &MetricsReport::acc_api, std::nullopt},
      {"Relation", "relation", nullptr, TaskCategory::kRelation},
      {"Commonsense", "commonsense", nullptr, TaskCategory::kCommonsense},
      {"Reject", "reject", nullptr, TaskCategory::kReject},
      {"Acc_RC", "acc_rc", &MetricsReport::acc_rc, std::nullopt},
  };
  return cols;
}

std::optional<double> value_of(const MetricsReport& r, const Column& c) {
  if (c.task) return r.score(*c.task);
  return r.*(c.aggregate);
}

std::string one_decimal(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", *v);
  return buf;
}

std::string full(const std::optional<double>& v) { return v ? nlohmann::json(*v).dump() : std::string(); }

std::string edge(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string range_label(const BucketRow& row) { return "[" + edge(row.lower) + ", " + edge(row.upper) + ")"; }

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string render_markdown(const MetricsReport& r) {
  std::ostringstream os;
  os << "# Evaluation report\n\n";
  os << kThresholdNote << "\n\n";
  os << "Rejection mode: " << to_string(r.rejection_mode) << "\n\n";
  os << '|';
  for (const auto& c : columns()) os << ' ' << c.header << " |";
  os << "\n|";
  for (std::size_t i = 0; i < columns().size(); ++i) os << "---|";
  os << "\n|";
  for (const auto& c : columns()) os << ' ' << one_decimal(value_of(r, c)) << " |";
  os << "\n\n## Samples per task\n\n| Task | Samples |\n|---|---|\n";
  for (TaskCategory t : kAllTasks) os << "| " << to_string(t) << " | " << r.counts[index_of(t)] << " |\n";
  for (const auto& table : r.buckets) {
    os << "\n## Difficulty: " << to_string(table.factor) << "\n\n| Range | Samples | mAcc |\n|---|---|---|\n";
    for (const auto& row : table.rows) {
      os << "| " << range_label(row) << " | " << row.count << " | "
         << (row.macc ? one_decimal(row.macc) : std::string("empty")) << " |\n";
    }
    os << "\nUnbucketed samples: " << table.unbucketed << '\n';
  }
  return os.str();
}

std::string render_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "section,key,samples,value\n";
  for (const auto& c : columns()) {
    if (c.task) {
      os << "task," << c.key << ',' << r.counts[index_of(*c.task)] << ',' << full(value_of(r, c)) << '\n';
    } else {
      os << "aggregate," << c.key << ",," << full(value_of(r, c)) << '\n';
    }
  }
  for (const auto& table : r.buckets) {
    for (const auto& row : table.rows) {
      os << "bucket:" << to_string(table.factor) << ",\"" << range_label(row) << "\"," << row.count << ','
         << full(row.macc) << '\n';
    }
    os << "bucket:" << to_string(table.factor) << ",unbucketed," << table.unbucketed << ",\n";
  }
  return os.str();
}

std::string render_json(const MetricsReport& r) {
  nlohmann::json j;
  j["threshold_convention"] = kThresholdNote;
  j["rejection_mode"] = std::string(to_string(r.rejection_mode));
  nlohmann::json tasks = nlohmann::json::object();
  nlohmann::json aggregates = nlohmann::json::object();
  for (const auto& c : columns()) {
    if (c.task) {
      tasks[std::string(c.key)] = {{"samples", r.counts[index_of(*c.task)]}, {"score", opt_json(value_of(r, c))}};
    } else {
      aggregates[std::string(c.key)] = opt_json(value_of(r, c));
    }
  }
  j["tasks"] = std::move(tasks);
  j["aggregates"] = std::move(aggregates);
  nlohmann::json buckets = nlohmann::json::array();
  for (const auto& table : r.buckets) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : table.rows) {
      rows.push_back({{"lower", row.lower},
                      {"upper", std::isinf(row.upper) ? nlohmann::json(nullptr) : nlohmann::json(row.upper)},
                      {"samples", row.count},
                      {"macc", opt_json(row.macc)}});
    }
    buckets.push_back({{"factor", std::string(to_string(table.factor))},
                       {"rows", std::move(rows)},
                       {"unbucketed", table.unbucketed}});
  }
  j["buckets"] = std::move(buckets);
  return j.dump(2) + "\n";
}

}  // namespace

ReportFormat parse_report_format(std::string_view name) {
  if (name == "markdown" || name == "md") return ReportFormat::kMarkdown;
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "json") return ReportFormat::kJson;
  throw InvalidInput("unknown report format '" + std::string(name) + "'");
}

std::string_view extension(ReportFormat format) noexcept {
  switch (format) {
    case ReportFormat::kMarkdown: return ".md";
    case ReportFormat::kCsv: return ".csv";
    case ReportFormat::kJson: return ".json";
  }
  return "";
}

std::string render_report(const MetricsReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::kMarkdown: return render_markdown(report);
    case ReportFormat::kCsv: return render_csv(report);
    case ReportFormat::kJson: return render_json(report);
  }
  return {};
}

}  // namespace refrec
