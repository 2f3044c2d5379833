#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ceiling {

enum class TaskId : std::uint8_t { Reach, PushBox, PickupCube };

// Observation layout shared by every task:
// [ee_x, ee_y, gripper, object_x, object_y, grasped, goal_x, goal_y]
inline constexpr std::size_t kObservationDim = 8;
inline constexpr std::size_t kActionDim = 3;
inline constexpr double kDefaultDeltaMax = 0.01;

struct Observation {
  TaskId task = TaskId::Reach;
  std::vector<double> features;

  bool operator==(const Observation&) const = default;
};

struct Action {
  std::array<double, 2> delta{0.0, 0.0};
  double gripper = -1.0;  // >= 0 close, < 0 open

  bool operator==(const Action&) const = default;

  std::array<double, kActionDim> as_array() const { return {delta[0], delta[1], gripper}; }
  static Action from_array(const std::array<double, kActionDim>& v) { return {{v[0], v[1]}, v[2]}; }
};

// Componentwise clamp of delta to [-delta_max, delta_max] and gripper to [-1, 1].
Action clip_action(const Action& action, double delta_max);
bool within_bounds(const Action& action, double delta_max);

// Symbolic label; resolved to a numeric weight only when a batch is sampled.
enum class FeedbackLabel : std::uint8_t { Good, Discarded, Corrected };

struct Transition {
  Observation obs;
  Action action;  // executed action (policy output plus any correction)
  FeedbackLabel label = FeedbackLabel::Good;

  bool operator==(const Transition&) const = default;
};

// Evaluative toggle; Positive at the start of every episode.
enum class Toggle : std::uint8_t { Positive, Negative };

enum class RunStatus : std::uint8_t { WarmStart, Interactive, Evaluating, Paused, Done };

enum class EpisodeSource : std::uint8_t { Demonstration, Interactive, Evaluation };

struct Episode {
  TaskId task = TaskId::Reach;
  std::uint64_t seed = 0;
  std::vector<Transition> transitions;
  bool success = false;
  EpisodeSource source = EpisodeSource::Interactive;

  bool operator==(const Episode&) const = default;
};

struct LabelCounts {
  std::size_t good = 0;
  std::size_t discarded = 0;
  std::size_t corrected = 0;

  std::size_t total() const { return good + discarded + corrected; }
  LabelCounts& operator+=(const LabelCounts& o) {
    good += o.good;
    discarded += o.discarded;
    corrected += o.corrected;
    return *this;
  }
  bool operator==(const LabelCounts&) const = default;
};

LabelCounts tally(const Episode& episode);

std::string_view to_string(TaskId task);
std::string_view to_string(FeedbackLabel label);
std::string_view to_string(EpisodeSource source);
std::string_view to_string(Toggle toggle);
std::string_view to_string(RunStatus status);
TaskId parse_task(std::string_view name);
FeedbackLabel parse_label(std::string_view name);
EpisodeSource parse_source(std::string_view name);
Toggle parse_toggle(std::string_view name);
RunStatus parse_status(std::string_view name);

}  // namespace ceiling
