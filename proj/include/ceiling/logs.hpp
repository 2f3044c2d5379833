#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ceiling/methods.hpp"
#include "ceiling/types.hpp"
#include "json.hpp"

namespace ceiling::logs {

struct LoggedStep {
  int step = 0;
  Observation obs;
  Action action;  // executed
  FeedbackLabel label = FeedbackLabel::Good;
  Toggle toggle_state = Toggle::Positive;  // after this step's events
  std::optional<std::array<double, 2>> correction_delta;
  std::optional<double> gripper_override;
  methods::Disposition disposition = methods::Disposition::StoreAsIs;

  bool operator==(const LoggedStep&) const = default;
};

struct LoggedEpisode {
  int episode_id = 0;
  EpisodeSource source = EpisodeSource::Interactive;
  TaskId task = TaskId::Reach;
  std::uint64_t seed = 0;
  std::vector<LoggedStep> steps;
  bool success = false;

  bool operator==(const LoggedEpisode&) const = default;

  // The labeled episode as seen by the labeler (before method filtering).
  Episode labeled() const;
};

class LogFormatError : public std::runtime_error {
 public:
  LogFormatError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// One JSON object per transition; "success" appears on the last line of each episode.
void write_episode_log(std::ostream& out, const std::vector<LoggedEpisode>& episodes);
void write_episode_log(const std::filesystem::path& path, const std::vector<LoggedEpisode>& episodes);
std::vector<LoggedEpisode> read_episode_log(std::istream& in);
std::vector<LoggedEpisode> read_episode_log(const std::filesystem::path& path);

nlohmann::json step_to_json(const LoggedEpisode& episode, const LoggedStep& step, bool last);

// Audit trail of every teacher input: applied, filtered by the method, superseded
// within a tick, or expired at shutdown.
struct EventRecord {
  int episode = 0;
  int step = 0;
  std::string source;  // "scripted" | "human"
  std::string kind;    // "toggle" | "correction" | "pause" | "resume"
  double dx = 0.0;
  double dy = 0.0;
  std::optional<double> grip;
  std::string disposition;
  std::optional<std::uint64_t> sequence;
  std::optional<double> received_ms;  // since run start, human inputs only

  bool operator==(const EventRecord&) const = default;
};

nlohmann::json to_json(const EventRecord& r);
EventRecord event_from_json(const nlohmann::json& j);
void write_event_log(const std::filesystem::path& path, const std::vector<EventRecord>& records);
std::vector<EventRecord> read_event_log(const std::filesystem::path& path);

}  // namespace ceiling::logs
