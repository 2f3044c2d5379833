#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ceiling/types.hpp"
#include "json.hpp"

namespace ceiling::sim {

using Vec2 = std::array<double, 2>;

inline constexpr Vec2 kHomePosition{0.5, 0.1};
inline constexpr double kEndEffectorRadius = 0.02;
inline constexpr double kObjectRadius = 0.03;
inline constexpr double kExpertGain = 0.5;

struct Box2 {
  Vec2 lo;
  Vec2 hi;
};

struct TaskSpec {
  TaskId task = TaskId::Reach;
  double goal_radius = 0.03;
  int step_timeout = 300;
  double delta_max = kDefaultDeltaMax;
  Box2 object_range;
  Box2 goal_range;

  // Reset ranges tuned per task; throws std::invalid_argument on invalid values.
  static TaskSpec defaults(TaskId task);
  void validate() const;
};

struct WorldState {
  TaskId task = TaskId::Reach;
  Vec2 ee_pos = kHomePosition;
  double gripper = -1.0;
  Vec2 object_pos{0.5, 0.5};
  bool grasped = false;
  Vec2 goal_pos{0.5, 0.5};
  int step_count = 0;
  bool done = false;

  bool operator==(const WorldState&) const = default;
};

Observation observe(const WorldState& state);

struct ResetResult {
  WorldState state;
  Observation obs;
};

struct StepResult {
  WorldState state;
  Observation obs;
  bool success = false;
  bool done = false;
};

ResetResult reset(const TaskSpec& spec, std::uint64_t seed);

// Throws std::logic_error when the state is already terminal and
// std::invalid_argument when the action violates the bounds.
StepResult step(const TaskSpec& spec, const WorldState& state, const Action& action);

bool is_success(const TaskSpec& spec, const WorldState& state);

// Waypoint proportional controller. Deterministic; delta is scaled to respect delta_max.
Action scripted_expert(const TaskSpec& spec, const WorldState& state);

// Thin stateful wrapper used by the trainer loops.
class Environment {
 public:
  explicit Environment(TaskSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  Observation reset(std::uint64_t seed);
  StepResult step(const Action& action);

  const WorldState& state() const { return state_; }
  const TaskSpec& spec() const { return spec_; }

 private:
  TaskSpec spec_;
  WorldState state_;
};

struct Entity {
  std::string id;
  std::string kind;
  double x = 0.0;
  double y = 0.0;
  std::string state;

  bool operator==(const Entity&) const = default;
};

struct SessionMeta {
  int episode = 0;
  Toggle toggle = Toggle::Positive;
  RunStatus status = RunStatus::Interactive;
  double success_rate_so_far = 0.0;
};

// Serializable snapshot streamed to the teaching UI.
struct SceneFrame {
  int step = 0;
  int episode = 0;
  std::vector<Entity> entities;
  Toggle toggle = Toggle::Positive;
  RunStatus status = RunStatus::Interactive;
  bool success = false;
  double success_rate_so_far = 0.0;

  bool operator==(const SceneFrame&) const = default;
};

SceneFrame render_frame(const TaskSpec& spec, const WorldState& state, const SessionMeta& meta);

// Wire message {"type":"frame", ...}.
nlohmann::json to_json(const SceneFrame& frame);
SceneFrame frame_from_json(const nlohmann::json& j);

}  // namespace ceiling::sim
