#include "ceiling/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ceiling::feedback {
namespace {

double nan_to_zero(double v) { return std::isnan(v) ? 0.0 : v; }

double norm2(const std::array<double, 2>& v) { return std::hypot(v[0], v[1]); }

}  // namespace

std::string_view to_string(EventKind kind) {
  return kind == EventKind::ToggleEvaluative ? "toggle" : "correction";
}

std::string_view to_string(InputDisposition d) {
  switch (d) {
    case InputDisposition::Applied: return "applied";
    case InputDisposition::Superseded: return "superseded";
    case InputDisposition::Expired: return "expired";
  }
  return "unknown";
}

FeedbackResult apply_feedback(const LabelerState& state, const Action& policy_action,
                              std::span<const FeedbackEvent> events, double delta_max,
                              std::optional<double> correction_max) {
  const double cmax = correction_max.value_or(delta_max);
  const FeedbackEvent* toggle = nullptr;
  const FeedbackEvent* correction = nullptr;
  for (const auto& e : events) {
    auto& slot = e.kind == EventKind::ToggleEvaluative ? toggle : correction;
    if (slot) throw std::invalid_argument("apply_feedback: more than one event of a kind in one step");
    slot = &e;
  }

  FeedbackResult r;
  r.next = state;
  if (toggle) r.next.toggle = state.toggle == Toggle::Positive ? Toggle::Negative : Toggle::Positive;

  if (correction) {
    AppliedCorrection c;
    for (int i = 0; i < 2; ++i) c.delta[i] = std::clamp(nan_to_zero(correction->delta[i]), -cmax, cmax);
    if (correction->gripper_override)
      c.gripper_override = std::clamp(nan_to_zero(*correction->gripper_override), -1.0, 1.0);
    Action a = policy_action;
    a.delta[0] += c.delta[0];
    a.delta[1] += c.delta[1];
    if (c.gripper_override) a.gripper = *c.gripper_override;
    r.executed = clip_action(a, delta_max);
    r.label = FeedbackLabel::Corrected;
    r.correction = c;
  } else {
    r.executed = clip_action(policy_action, delta_max);
    r.label = r.next.toggle == Toggle::Positive ? FeedbackLabel::Good : FeedbackLabel::Discarded;
  }
  return r;
}

void TeacherConfig::validate() const {
  if (!(miss_probability >= 0.0 && miss_probability <= 1.0))
    throw std::invalid_argument("teacher: miss_probability must lie in [0,1]");
  if (latency_steps < 0) throw std::invalid_argument("teacher: latency_steps must be >= 0");
  if (!(correction_gain > 0.0)) throw std::invalid_argument("teacher: correction_gain must be > 0");
  if (!(correction_max > 0.0)) throw std::invalid_argument("teacher: correction_max must be > 0");
  if (std::isnan(correction_threshold) || std::isnan(uncorrectable_bound))
    throw std::invalid_argument("teacher: thresholds must be numbers");
}

ScriptedTeacher::ScriptedTeacher(TeacherConfig config, std::uint64_t seed) : config_(config), rng_(seed) {
  config_.validate();
}

void ScriptedTeacher::begin_episode() {
  streak_ = 0;
  toggle_ = Toggle::Positive;
}

std::vector<FeedbackEvent> ScriptedTeacher::teach(const Action& policy_action, const Action& expert_action,
                                                  int step) {
  std::vector<FeedbackEvent> events;
  const std::array<double, 2> d{expert_action.delta[0] - policy_action.delta[0],
                                expert_action.delta[1] - policy_action.delta[1]};
  const double dist = norm2(d);
  const bool gripper_wrong = (policy_action.gripper >= 0.0) != (expert_action.gripper >= 0.0);

  if (dist > config_.uncorrectable_bound) {
    streak_ = 0;
    if (toggle_ == Toggle::Positive) {
      events.push_back(FeedbackEvent::toggle(step));
      toggle_ = Toggle::Negative;
    }
    return events;
  }

  if (toggle_ == Toggle::Negative) {
    events.push_back(FeedbackEvent::toggle(step));
    toggle_ = Toggle::Positive;
  }

  if (dist <= config_.correction_threshold && !gripper_wrong) {
    streak_ = 0;
    return events;
  }

  ++streak_;
  if (streak_ <= config_.latency_steps) return events;
  std::bernoulli_distribution miss(config_.miss_probability);
  if (miss(rng_)) return events;

  std::array<double, 2> delta{};
  for (int i = 0; i < 2; ++i)
    delta[i] = std::clamp(config_.correction_gain * d[i], -config_.correction_max, config_.correction_max);
  std::optional<double> grip;
  if (gripper_wrong) grip = expert_action.gripper;
  events.push_back(FeedbackEvent::correction(step, delta, grip));
  return events;
}

FeedbackRates feedback_rates(const LabelCounts& counts) {
  if (counts.total() == 0) throw std::invalid_argument("feedback_rates: no steps");
  const double n = static_cast<double>(counts.total());
  return {100.0 * static_cast<double>(counts.corrected) / n, 100.0 * static_cast<double>(counts.discarded) / n};
}

FeedbackRates feedback_rates(std::span<const Episode> episodes) {
  LabelCounts c;
  for (const auto& e : episodes) c += tally(e);
  return feedback_rates(c);
}

std::string_view to_string(HumanInput::Kind k) {
  switch (k) {
    case HumanInput::Kind::Toggle: return "toggle";
    case HumanInput::Kind::Correct: return "correction";
    case HumanInput::Kind::Pause: return "pause";
    case HumanInput::Kind::Resume: return "resume";
  }
  return "?";
}

void HumanEventQueue::push(HumanInput input) {
  if (input.kind != HumanInput::Kind::Toggle && input.kind != HumanInput::Kind::Correct)
    throw std::invalid_argument("HumanEventQueue::push: only toggles and corrections are queued");
  std::lock_guard lock(mutex_);
  input.sequence = next_sequence_++;
  queue_.push_back(input);
}

void HumanEventQueue::record_control(HumanInput input, int episode, int step) {
  if (input.kind != HumanInput::Kind::Pause && input.kind != HumanInput::Kind::Resume)
    throw std::invalid_argument("HumanEventQueue::record_control: expected pause or resume");
  std::lock_guard lock(mutex_);
  input.sequence = next_sequence_++;
  controls_.push_back({input, episode, step, InputDisposition::Applied});
}

HumanEventQueue::Drained HumanEventQueue::drain(int episode, int step, std::chrono::steady_clock::time_point tick) {
  Drained out;
  std::lock_guard lock(mutex_);
  bool toggled = false;
  std::deque<HumanInput> keep;
  std::vector<InputAudit> corrections;
  for (auto& in : queue_) {
    if (in.received > tick) {
      keep.push_back(in);
      continue;
    }
    if (in.kind == HumanInput::Kind::Toggle) {
      if (toggled) {
        keep.push_back(in);
        continue;
      }
      toggled = true;
      out.events.push_back(FeedbackEvent::toggle(step));
      out.audit.push_back({in, episode, step, InputDisposition::Applied});
    } else {
      corrections.push_back({in, episode, step, InputDisposition::Superseded});
    }
  }
  if (!corrections.empty()) {
    auto& last = corrections.back();
    last.disposition = InputDisposition::Applied;
    std::optional<double> grip;
    if (last.input.grip != 0.0) grip = last.input.grip;
    out.events.push_back(FeedbackEvent::correction(step, {last.input.dx, last.input.dy}, grip));
    out.audit.insert(out.audit.end(), corrections.begin(), corrections.end());
  }
  out.audit.insert(out.audit.end(), controls_.begin(), controls_.end());
  controls_.clear();
  std::sort(out.audit.begin(), out.audit.end(),
            [](const InputAudit& a, const InputAudit& b) { return a.input.sequence < b.input.sequence; });
  queue_ = std::move(keep);
  return out;
}

std::vector<InputAudit> HumanEventQueue::expire(int episode, int step) {
  std::lock_guard lock(mutex_);
  std::vector<InputAudit> out;
  out = std::move(controls_);
  controls_.clear();
  for (auto& in : queue_) out.push_back({in, episode, step, InputDisposition::Expired});
  queue_.clear();
  std::sort(out.begin(), out.end(),
            [](const InputAudit& a, const InputAudit& b) { return a.input.sequence < b.input.sequence; });
  return out;
}

std::size_t HumanEventQueue::pending() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

}  // namespace ceiling::feedback
