#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace ceiling::report {

// One (task, method, seed) cell. A failed run carries its error and no numbers.
struct RunRow {
  std::string task;
  std::string method;
  std::uint64_t seed = 0;
  double success_rate = 0.0;  // percent, evaluation episodes
  double update_steps = 0.0;
  double duration_minutes = 0.0;
  double correction_rate = 0.0;  // percent of interactive steps
  double negative_rate = 0.0;
  std::optional<std::string> error;

  bool operator==(const RunRow&) const = default;
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run

  bool operator==(const Stat&) const = default;
};

Stat summarize(const std::vector<double>& values);

struct AggregateRow {
  std::string task;
  std::string method;
  std::size_t runs = 0;
  std::size_t failed = 0;
  Stat success_rate;
  Stat update_steps;
  Stat duration_minutes;
  Stat correction_rate;
  Stat negative_rate;
};

struct ExperimentReport {
  std::vector<RunRow> rows;
  std::vector<AggregateRow> aggregates;  // per (task, method) in first-seen order
};

// Failed rows are kept but excluded from the statistics.
ExperimentReport aggregate(std::vector<RunRow> rows);

void write_csv(std::ostream& out, const ExperimentReport& report);
nlohmann::json to_json(const ExperimentReport& report);
// Fixed-width table for the terminal.
void print_table(std::ostream& out, const ExperimentReport& report);

}  // namespace ceiling::report
