#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <deque>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ceiling/env.hpp"
#include "ceiling/types.hpp"

namespace ceiling::feedback {

enum class EventKind : std::uint8_t { ToggleEvaluative, Correction };

struct FeedbackEvent {
  int step_index = 0;
  EventKind kind = EventKind::ToggleEvaluative;
  // Correction payload, ignored for toggles.
  std::array<double, 2> delta{0.0, 0.0};
  std::optional<double> gripper_override;

  static FeedbackEvent toggle(int step) { return {step, EventKind::ToggleEvaluative, {0.0, 0.0}, std::nullopt}; }
  static FeedbackEvent correction(int step, std::array<double, 2> delta, std::optional<double> grip = std::nullopt) {
    return {step, EventKind::Correction, delta, grip};
  }
  bool operator==(const FeedbackEvent&) const = default;
};

std::string_view to_string(EventKind kind);

struct LabelerState {
  Toggle toggle = Toggle::Positive;
  bool operator==(const LabelerState&) const = default;
};

struct AppliedCorrection {
  std::array<double, 2> delta{0.0, 0.0};  // after clipping to correction_max
  std::optional<double> gripper_override;
  bool operator==(const AppliedCorrection&) const = default;
};

struct FeedbackResult {
  Action executed;
  FeedbackLabel label = FeedbackLabel::Good;
  LabelerState next;
  std::optional<AppliedCorrection> correction;
};

// One labeler step. A toggle flips the state before the current step is labeled;
// a correction wins over the toggle state. Out-of-range or non-finite payloads are
// clipped, never rejected. Throws std::invalid_argument for more than one toggle or
// more than one correction in the same step.
FeedbackResult apply_feedback(const LabelerState& state, const Action& policy_action,
                              std::span<const FeedbackEvent> events, double delta_max = kDefaultDeltaMax,
                              std::optional<double> correction_max = std::nullopt);

struct TeacherConfig {
  // Divergence ‖expert.delta − policy.delta‖ above which the teacher acts.
  double correction_threshold = 0.003;
  double correction_gain = 1.0;
  double miss_probability = 0.2;
  // Divergent steps the teacher lets pass before the first correction of a streak.
  int latency_steps = 2;
  // Beyond this divergence the teacher marks the behaviour bad instead of correcting.
  double uncorrectable_bound = 0.016;
  double correction_max = kDefaultDeltaMax;

  void validate() const;
};

// Emulated teacher driven by the scripted expert. Keeps its own view of the toggle
// so its raw event stream does not depend on which method consumes it.
class ScriptedTeacher {
 public:
  ScriptedTeacher(TeacherConfig config, std::uint64_t seed);

  void begin_episode();
  std::vector<FeedbackEvent> teach(const Action& policy_action, const Action& expert_action, int step);

  const TeacherConfig& config() const { return config_; }

 private:
  TeacherConfig config_;
  std::mt19937_64 rng_;
  int streak_ = 0;
  Toggle toggle_ = Toggle::Positive;
};

struct FeedbackRates {
  double correction_rate = 0.0;  // percent of steps
  double negative_rate = 0.0;
  bool operator==(const FeedbackRates&) const = default;
};

// Throws std::invalid_argument when there are no steps.
FeedbackRates feedback_rates(std::span<const Episode> episodes);
FeedbackRates feedback_rates(const LabelCounts& counts);

// Client input as received by the gateway.
struct HumanInput {
  enum class Kind : std::uint8_t { Toggle, Correct, Pause, Resume };
  Kind kind = Kind::Toggle;
  double dx = 0.0;
  double dy = 0.0;
  double grip = 0.0;  // 0 means "leave the gripper alone"
  std::uint64_t sequence = 0;
  std::chrono::steady_clock::time_point received;
};

// Expired: still queued when the run ended.
enum class InputDisposition : std::uint8_t { Applied, Superseded, Expired };
std::string_view to_string(InputDisposition d);
std::string_view to_string(HumanInput::Kind k);

struct InputAudit {
  HumanInput input;
  int episode = 0;
  int step = 0;
  InputDisposition disposition = InputDisposition::Applied;
};

// Queue between the gateway (producer) and the environment loop (consumer).
// Inputs received before the tick are applied to that step: the latest correction
// wins (earlier ones are superseded) and at most one toggle is applied; further
// toggles stay queued for the following steps.
class HumanEventQueue {
 public:
  // Stamps a sequence number; keeps the caller's receive time. Only toggles and
  // corrections are accepted.
  void push(HumanInput input);
  // Pause and resume take effect immediately elsewhere; they are recorded here as
  // applied so the audit trail holds every client message in order.
  void record_control(HumanInput input, int episode, int step);
  std::vector<InputAudit> expire(int episode, int step);

  struct Drained {
    std::vector<FeedbackEvent> events;
    std::vector<InputAudit> audit;
  };
  Drained drain(int episode, int step, std::chrono::steady_clock::time_point tick);
  std::size_t pending() const;

 private:
  mutable std::mutex mutex_;
  std::deque<HumanInput> queue_;
  std::vector<InputAudit> controls_;
  std::uint64_t next_sequence_ = 0;
};

}  // namespace ceiling::feedback
