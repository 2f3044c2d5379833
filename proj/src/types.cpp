#include "ceiling/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ceiling {

Action clip_action(const Action& action, double delta_max) {
  Action out;
  out.delta[0] = std::clamp(action.delta[0], -delta_max, delta_max);
  out.delta[1] = std::clamp(action.delta[1], -delta_max, delta_max);
  out.gripper = std::clamp(action.gripper, -1.0, 1.0);
  return out;
}

bool within_bounds(const Action& action, double delta_max) {
  return std::abs(action.delta[0]) <= delta_max && std::abs(action.delta[1]) <= delta_max &&
         std::abs(action.gripper) <= 1.0;
}

LabelCounts tally(const Episode& episode) {
  LabelCounts c;
  for (const auto& t : episode.transitions) {
    switch (t.label) {
      case FeedbackLabel::Good: ++c.good; break;
      case FeedbackLabel::Discarded: ++c.discarded; break;
      case FeedbackLabel::Corrected: ++c.corrected; break;
    }
  }
  return c;
}

std::string_view to_string(TaskId task) {
  switch (task) {
    case TaskId::Reach: return "reach";
    case TaskId::PushBox: return "pushbox";
    case TaskId::PickupCube: return "pickupcube";
  }
  return "unknown";
}

std::string_view to_string(FeedbackLabel label) {
  switch (label) {
    case FeedbackLabel::Good: return "good";
    case FeedbackLabel::Discarded: return "discarded";
    case FeedbackLabel::Corrected: return "corrected";
  }
  return "unknown";
}

std::string_view to_string(EpisodeSource source) {
  switch (source) {
    case EpisodeSource::Demonstration: return "demonstration";
    case EpisodeSource::Interactive: return "interactive";
    case EpisodeSource::Evaluation: return "evaluation";
  }
  return "unknown";
}

std::string_view to_string(Toggle toggle) { return toggle == Toggle::Positive ? "pos" : "neg"; }

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::WarmStart: return "warmstart";
    case RunStatus::Interactive: return "interactive";
    case RunStatus::Evaluating: return "evaluating";
    case RunStatus::Paused: return "paused";
    case RunStatus::Done: return "done";
  }
  return "unknown";
}

TaskId parse_task(std::string_view name) {
  if (name == "reach") return TaskId::Reach;
  if (name == "pushbox") return TaskId::PushBox;
  if (name == "pickupcube") return TaskId::PickupCube;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

FeedbackLabel parse_label(std::string_view name) {
  if (name == "good") return FeedbackLabel::Good;
  if (name == "discarded") return FeedbackLabel::Discarded;
  if (name == "corrected") return FeedbackLabel::Corrected;
  throw std::invalid_argument("unknown label '" + std::string(name) + "'");
}

EpisodeSource parse_source(std::string_view name) {
  if (name == "demonstration") return EpisodeSource::Demonstration;
  if (name == "interactive") return EpisodeSource::Interactive;
  if (name == "evaluation") return EpisodeSource::Evaluation;
  throw std::invalid_argument("unknown episode source '" + std::string(name) + "'");
}

Toggle parse_toggle(std::string_view name) {
  if (name == "pos") return Toggle::Positive;
  if (name == "neg") return Toggle::Negative;
  throw std::invalid_argument("unknown toggle state '" + std::string(name) + "'");
}

RunStatus parse_status(std::string_view name) {
  for (auto s : {RunStatus::WarmStart, RunStatus::Interactive, RunStatus::Evaluating, RunStatus::Paused,
                 RunStatus::Done})
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown run status '" + std::string(name) + "'");
}

}  // namespace ceiling
