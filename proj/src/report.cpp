#include "ceiling/report.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

namespace ceiling::report {
namespace {

std::string num(double v) { return nlohmann::json(v).dump(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

nlohmann::json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}}; }

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string pm(const Stat& s, int decimals) { return fixed(s.mean, decimals) + " +- " + fixed(s.std, decimals); }

}  // namespace

Stat summarize(const std::vector<double>& values) {
  Stat s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

ExperimentReport aggregate(std::vector<RunRow> rows) {
  ExperimentReport r;
  r.rows = std::move(rows);
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const RunRow*>> groups;
  for (const auto& row : r.rows) {
    const auto key = std::make_pair(row.task, row.method);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&row);
  }
  for (const auto& key : order) {
    AggregateRow a;
    a.task = key.first;
    a.method = key.second;
    std::vector<double> sr, us, dm, cr, nr;
    for (const auto* row : groups[key]) {
      ++a.runs;
      if (row->error) {
        ++a.failed;
        continue;
      }
      sr.push_back(row->success_rate);
      us.push_back(row->update_steps);
      dm.push_back(row->duration_minutes);
      cr.push_back(row->correction_rate);
      nr.push_back(row->negative_rate);
    }
    a.success_rate = summarize(sr);
    a.update_steps = summarize(us);
    a.duration_minutes = summarize(dm);
    a.correction_rate = summarize(cr);
    a.negative_rate = summarize(nr);
    r.aggregates.push_back(a);
  }
  return r;
}

void write_csv(std::ostream& out, const ExperimentReport& report) {
  out << "kind,task,method,seed,runs,failed,success_rate,success_rate_std,update_steps,update_steps_std,"
         "duration_min,duration_min_std,correction_rate,correction_rate_std,negative_rate,negative_rate_std,error\n";
  for (const auto& r : report.rows) {
    out << "run," << csv_field(r.task) << ',' << csv_field(r.method) << ',' << r.seed << ",1,"
        << (r.error ? 1 : 0) << ',';
    if (r.error) {
      out << ",,,,,,,,,," << csv_field(*r.error) << '\n';
      continue;
    }
    out << num(r.success_rate) << ",," << num(r.update_steps) << ",," << num(r.duration_minutes) << ",,"
        << num(r.correction_rate) << ",," << num(r.negative_rate) << ",,\n";
  }
  for (const auto& a : report.aggregates) {
    out << "aggregate," << csv_field(a.task) << ',' << csv_field(a.method) << ",," << a.runs << ',' << a.failed;
    for (const auto* s : {&a.success_rate, &a.update_steps, &a.duration_minutes, &a.correction_rate,
                          &a.negative_rate})
      out << ',' << num(s->mean) << ',' << num(s->std);
    out << ",\n";
  }
}

nlohmann::json to_json(const ExperimentReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json j = {{"task", r.task}, {"method", r.method}, {"seed", r.seed}};
    if (r.error) {
      j["error"] = *r.error;
    } else {
      j["success_rate"] = r.success_rate;
      j["update_steps"] = r.update_steps;
      j["duration_minutes"] = r.duration_minutes;
      j["correction_rate"] = r.correction_rate;
      j["negative_rate"] = r.negative_rate;
    }
    rows.push_back(j);
  }
  nlohmann::json aggs = nlohmann::json::array();
  for (const auto& a : report.aggregates)
    aggs.push_back({{"task", a.task},
                    {"method", a.method},
                    {"runs", a.runs},
                    {"failed", a.failed},
                    {"success_rate", stat_json(a.success_rate)},
                    {"update_steps", stat_json(a.update_steps)},
                    {"duration_minutes", stat_json(a.duration_minutes)},
                    {"correction_rate", stat_json(a.correction_rate)},
                    {"negative_rate", stat_json(a.negative_rate)}});
  return {{"rows", rows}, {"aggregates", aggs}};
}

void print_table(std::ostream& out, const ExperimentReport& report) {
  char line[256];
  std::snprintf(line, sizeof line, "%-11s %-11s %5s  %-16s %-20s %-14s %-14s %-14s\n", "task", "method", "runs",
                "success rate %", "update steps", "duration min", "correction %", "negative %");
  out << line;
  for (const auto& a : report.aggregates) {
    std::snprintf(line, sizeof line, "%-11s %-11s %5zu  %-16s %-20s %-14s %-14s %-14s\n", a.task.c_str(),
                  a.method.c_str(), a.runs - a.failed, pm(a.success_rate, 1).c_str(), pm(a.update_steps, 0).c_str(),
                  pm(a.duration_minutes, 1).c_str(), pm(a.correction_rate, 1).c_str(),
                  pm(a.negative_rate, 1).c_str());
    out << line;
  }
}

}  // namespace ceiling::report
