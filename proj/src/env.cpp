#include "ceiling/env.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ceiling::sim {
namespace {

Vec2 add(const Vec2& a, const Vec2& b) { return {a[0] + b[0], a[1] + b[1]}; }
Vec2 sub(const Vec2& a, const Vec2& b) { return {a[0] - b[0], a[1] - b[1]}; }
Vec2 scale(const Vec2& a, double s) { return {a[0] * s, a[1] * s}; }
double dot(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
double norm(const Vec2& a) { return std::sqrt(dot(a, a)); }
Vec2 perp(const Vec2& a) { return {-a[1], a[0]}; }

Vec2 clamp_unit(const Vec2& p) { return {std::clamp(p[0], 0.0, 1.0), std::clamp(p[1], 0.0, 1.0)}; }

// Scales v so that no component exceeds limit; keeps the direction.
Vec2 limit(const Vec2& v, double limit) {
  const double m = std::max(std::abs(v[0]), std::abs(v[1]));
  if (m <= limit) return v;
  const Vec2 r = scale(v, limit / m);
  return {std::clamp(r[0], -limit, limit), std::clamp(r[1], -limit, limit)};
}

Vec2 toward(const Vec2& from, const Vec2& target, double delta_max) {
  return limit(scale(sub(target, from), kExpertGain), delta_max);
}

bool valid_box(const Box2& b) {
  return b.lo[0] >= 0.0 && b.lo[1] >= 0.0 && b.hi[0] <= 1.0 && b.hi[1] <= 1.0 && b.lo[0] <= b.hi[0] &&
         b.lo[1] <= b.hi[1];
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Pushing controller geometry, in workspace units.
constexpr double kContact = kEndEffectorRadius + kObjectRadius;
constexpr double kPushDepth = 0.02;   // aim this far inside contact when aligned
constexpr double kStandoff = 0.02;    // hold this far outside contact when not
constexpr double kAlignWidth = 0.01;  // lateral error over which pushing fades out
constexpr double kSideOffset = kContact + 0.02;
constexpr double kBehind = 0.6 * kContact;

// Smooth blend of three targets: a standoff point behind the box on the box-goal
// line, a point inside the box once aligned (which pushes), and a point beside the
// box for getting around it from the front.
Vec2 push_expert(const WorldState& s, double delta_max) {
  const Vec2 to_goal = sub(s.goal_pos, s.object_pos);
  const double dist = norm(to_goal);
  if (dist < 1e-9) return {0.0, 0.0};
  const Vec2 u = scale(to_goal, 1.0 / dist);
  const Vec2 n = perp(u);
  const Vec2 rel = sub(s.ee_pos, s.object_pos);
  const double along = dot(rel, u);
  const double lateral = dot(rel, n);

  const double aligned = std::exp(-(lateral / kAlignWidth) * (lateral / kAlignWidth));
  const double behind = logistic((-along - kBehind) / 0.005);
  const double depth = kContact + kStandoff - (kStandoff + kPushDepth) * aligned;
  const Vec2 back = sub(s.object_pos, scale(u, depth));
  const double side = lateral >= 0.0 ? 1.0 : -1.0;
  const Vec2 around = add(s.object_pos, sub(scale(n, side * kSideOffset), scale(u, kBehind)));
  const Vec2 target = add(scale(back, behind), scale(around, 1.0 - behind));
  return toward(s.ee_pos, target, delta_max);
}

}  // namespace

TaskSpec TaskSpec::defaults(TaskId task) {
  TaskSpec spec;
  spec.task = task;
  switch (task) {
    case TaskId::Reach:
      spec.object_range = {{0.1, 0.3}, {0.9, 0.9}};
      spec.goal_range = {{0.15, 0.45}, {0.85, 0.9}};
      break;
    case TaskId::PushBox:
      spec.object_range = {{0.35, 0.3}, {0.65, 0.4}};
      spec.goal_range = {{0.3, 0.55}, {0.7, 0.7}};
      break;
    case TaskId::PickupCube:
      spec.object_range = {{0.2, 0.3}, {0.8, 0.6}};
      spec.goal_range = {{0.2, 0.65}, {0.8, 0.9}};
      break;
  }
  return spec;
}

void TaskSpec::validate() const {
  if (!(goal_radius > 0.0)) throw std::invalid_argument("TaskSpec: goal_radius must be > 0");
  if (step_timeout < 1) throw std::invalid_argument("TaskSpec: step_timeout must be >= 1");
  if (!(delta_max > 0.0)) throw std::invalid_argument("TaskSpec: delta_max must be > 0");
  if (!valid_box(object_range) || !valid_box(goal_range))
    throw std::invalid_argument("TaskSpec: reset ranges must lie inside the unit square");
}

Observation observe(const WorldState& s) {
  return {s.task,
          {s.ee_pos[0], s.ee_pos[1], s.gripper, s.object_pos[0], s.object_pos[1], s.grasped ? 1.0 : 0.0,
           s.goal_pos[0], s.goal_pos[1]}};
}

ResetResult reset(const TaskSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  auto draw = [&rng](const Box2& box) {
    std::uniform_real_distribution<double> ux(box.lo[0], box.hi[0]);
    std::uniform_real_distribution<double> uy(box.lo[1], box.hi[1]);
    const double x = ux(rng);
    return Vec2{x, uy(rng)};
  };
  WorldState s;
  s.task = spec.task;
  s.object_pos = draw(spec.object_range);
  s.goal_pos = draw(spec.goal_range);
  return {s, observe(s)};
}

bool is_success(const TaskSpec& spec, const WorldState& s) {
  switch (s.task) {
    case TaskId::Reach: return norm(sub(s.ee_pos, s.goal_pos)) <= spec.goal_radius;
    case TaskId::PushBox: return norm(sub(s.object_pos, s.goal_pos)) <= spec.goal_radius;
    case TaskId::PickupCube: return s.grasped && norm(sub(s.object_pos, s.goal_pos)) <= spec.goal_radius;
  }
  return false;
}

StepResult step(const TaskSpec& spec, const WorldState& state, const Action& action) {
  if (state.done) throw std::logic_error("step: episode already finished");
  if (!within_bounds(action, spec.delta_max)) throw std::invalid_argument("step: action outside bounds");

  WorldState s = state;
  const Vec2 prev = s.ee_pos;
  s.ee_pos = clamp_unit(add(s.ee_pos, action.delta));
  s.gripper = action.gripper;

  switch (s.task) {
    case TaskId::Reach: break;
    case TaskId::PushBox: {
      const Vec2 gap = sub(s.object_pos, s.ee_pos);
      const double d = norm(gap);
      const bool moving_toward = dot(action.delta, sub(s.object_pos, prev)) > 0.0;
      if (d < kContact && moving_toward) {
        const Vec2 dir = d > 1e-12 ? scale(gap, 1.0 / d) : scale(action.delta, 1.0 / norm(action.delta));
        s.object_pos = clamp_unit(add(s.ee_pos, scale(dir, kContact)));
      }
      break;
    }
    case TaskId::PickupCube: {
      if (s.grasped) {
        if (action.gripper < 0.0) s.grasped = false;
      } else if (action.gripper >= 0.0 && norm(sub(s.object_pos, s.ee_pos)) <= kContact) {
        s.grasped = true;
      }
      if (s.grasped) s.object_pos = s.ee_pos;
      break;
    }
  }

  ++s.step_count;
  const bool success = is_success(spec, s);
  s.done = success || s.step_count >= spec.step_timeout;
  return {s, observe(s), success, s.done};
}

Action scripted_expert(const TaskSpec& spec, const WorldState& s) {
  Action a;
  switch (s.task) {
    case TaskId::Reach:
      a.delta = toward(s.ee_pos, s.goal_pos, spec.delta_max);
      a.gripper = -1.0;
      break;
    case TaskId::PushBox:
      a.delta = push_expert(s, spec.delta_max);
      a.gripper = -1.0;
      break;
    case TaskId::PickupCube:
      if (s.grasped) {
        a.delta = toward(s.ee_pos, s.goal_pos, spec.delta_max);
        a.gripper = 1.0;
      } else if (norm(sub(s.object_pos, s.ee_pos)) <= 0.01) {
        a.delta = {0.0, 0.0};
        a.gripper = 1.0;
      } else {
        a.delta = toward(s.ee_pos, s.object_pos, spec.delta_max);
        a.gripper = -1.0;
      }
      break;
  }
  return a;
}

Observation Environment::reset(std::uint64_t seed) {
  auto r = sim::reset(spec_, seed);
  state_ = r.state;
  return r.obs;
}

StepResult Environment::step(const Action& action) {
  auto r = sim::step(spec_, state_, action);
  state_ = r.state;
  return r;
}

SceneFrame render_frame(const TaskSpec& spec, const WorldState& s, const SessionMeta& meta) {
  SceneFrame f;
  f.step = s.step_count;
  f.episode = meta.episode;
  f.toggle = meta.toggle;
  f.status = meta.status;
  f.success_rate_so_far = meta.success_rate_so_far;
  f.success = is_success(spec, s);

  const char* object_kind = s.task == TaskId::PushBox ? "box" : s.task == TaskId::PickupCube ? "cube" : "marker";
  f.entities.push_back({"ee", "end_effector", s.ee_pos[0], s.ee_pos[1], s.gripper >= 0.0 ? "closed" : "open"});
  f.entities.push_back({"object", object_kind, s.object_pos[0], s.object_pos[1], s.grasped ? "grasped" : "free"});
  f.entities.push_back({"goal", "goal", s.goal_pos[0], s.goal_pos[1], f.success ? "reached" : "pending"});
  return f;
}

nlohmann::json to_json(const SceneFrame& f) {
  nlohmann::json entities = nlohmann::json::array();
  for (const auto& e : f.entities)
    entities.push_back({{"id", e.id}, {"kind", e.kind}, {"x", e.x}, {"y", e.y}, {"state", e.state}});
  return {{"type", "frame"},
          {"step", f.step},
          {"episode", f.episode},
          {"entities", std::move(entities)},
          {"toggle", std::string(to_string(f.toggle))},
          {"status", std::string(to_string(f.status))},
          {"success", f.success},
          {"success_rate_so_far", f.success_rate_so_far}};
}

SceneFrame frame_from_json(const nlohmann::json& j) {
  if (j.at("type").get<std::string>() != "frame") throw std::invalid_argument("frame_from_json: not a frame");
  SceneFrame f;
  f.step = j.at("step").get<int>();
  f.episode = j.at("episode").get<int>();
  for (const auto& e : j.at("entities"))
    f.entities.push_back({e.at("id").get<std::string>(), e.at("kind").get<std::string>(), e.at("x").get<double>(),
                          e.at("y").get<double>(), e.at("state").get<std::string>()});
  f.toggle = parse_toggle(j.at("toggle").get<std::string>());
  f.status = parse_status(j.at("status").get<std::string>());
  f.success = j.value("success", false);
  f.success_rate_so_far = j.at("success_rate_so_far").get<double>();
  return f;
}

}  // namespace ceiling::sim
