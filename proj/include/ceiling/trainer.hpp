#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <vector>

#include "ceiling/env.hpp"
#include "ceiling/feedback.hpp"
#include "ceiling/logs.hpp"
#include "ceiling/methods.hpp"
#include "ceiling/policy.hpp"
#include "ceiling/replay_buffer.hpp"

namespace ceiling::trainer {

enum class Mode : std::uint8_t { Async, Lockstep };
std::string_view to_string(Mode m);
Mode parse_mode(std::string_view name);

// SplitMix64-based derivation of independent seed streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

struct Seeds {
  std::uint64_t env = 0;
  std::uint64_t policy = 0;
  std::uint64_t teacher = 0;

  static Seeds from_master(std::uint64_t seed);
  bool operator==(const Seeds&) const = default;
};

// Where update batches come from. FullBuffer (every stored episode, each once) is an
// ablation used to compare methods gradient-for-gradient.
enum class BatchSource : std::uint8_t { Sampled, FullBuffer };

struct TrainConfig {
  sim::TaskSpec task_spec = sim::TaskSpec::defaults(TaskId::Reach);
  methods::MethodSpec method = methods::MethodSpec::of(methods::Method::CEILing);
  policy::PolicyConfig policy;
  feedback::TeacherConfig teacher;
  int n_demos = 10;
  int n_interactive_episodes = 100;
  double warm_start_seconds = 120.0;  // async
  int warm_start_updates = 1000;      // lockstep; also the BC budget
  double control_rate_hz = 20.0;
  int updates_per_env_step = 1;  // lockstep
  Seeds seeds;
  Mode mode = Mode::Lockstep;
  BatchSource batch_source = BatchSource::Sampled;
  policy::Reduction reduction = policy::Reduction::Mean;

  // Async test hooks: a sleep injected before every update and a cap on the
  // interactive phase.
  std::chrono::milliseconds update_delay{0};
  std::optional<double> interactive_seconds_budget;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
// Missing keys keep the defaults of `base`.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

// Runs the scripted expert on fresh seeds until n episodes succeed. Throws
// std::runtime_error after 10n attempts.
std::vector<Episode> collect_demonstrations(const sim::TaskSpec& spec, int n, std::uint64_t seed);

struct UpdateRecord {
  std::uint64_t version = 0;  // after the step
  double loss = 0.0;
  policy::GradientSet gradients;
};

// One sample -> loss -> backward -> Adam cycle.
UpdateRecord update_loop_step(const ReplayBuffer& buffer, policy::PolicyParams& params, const TrainConfig& config,
                              std::mt19937_64& rng);

// Source of raw teacher events for one step.
class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual void begin_episode(int episode) = 0;
  virtual std::vector<feedback::FeedbackEvent> events(int episode, int step, const sim::TaskSpec& spec,
                                                      const sim::WorldState& state, const Action& policy_action,
                                                      std::chrono::steady_clock::time_point tick,
                                                      std::vector<logs::EventRecord>& audit) = 0;
  // Inputs still pending when the run ends.
  virtual void finish(int, int, std::vector<logs::EventRecord>&) {}
};

class ScriptedTeacherSource : public Teacher {
 public:
  ScriptedTeacherSource(feedback::TeacherConfig config, std::uint64_t seed) : teacher_(config, seed) {}
  void begin_episode(int) override { teacher_.begin_episode(); }
  std::vector<feedback::FeedbackEvent> events(int episode, int step, const sim::TaskSpec& spec,
                                              const sim::WorldState& state, const Action& policy_action,
                                              std::chrono::steady_clock::time_point tick,
                                              std::vector<logs::EventRecord>& audit) override;

 private:
  feedback::ScriptedTeacher teacher_;
};

class HumanTeacherSource : public Teacher {
 public:
  HumanTeacherSource(feedback::HumanEventQueue& queue, std::chrono::steady_clock::time_point origin)
      : queue_(queue), origin_(origin) {}
  void begin_episode(int) override {}
  std::vector<feedback::FeedbackEvent> events(int episode, int step, const sim::TaskSpec& spec,
                                              const sim::WorldState& state, const Action& policy_action,
                                              std::chrono::steady_clock::time_point tick,
                                              std::vector<logs::EventRecord>& audit) override;
  void finish(int episode, int step, std::vector<logs::EventRecord>& audit) override;

 private:
  logs::EventRecord record(const feedback::InputAudit& a) const;

  feedback::HumanEventQueue& queue_;
  std::chrono::steady_clock::time_point origin_;
};

// Shared between the environment loop and the gateway.
class RunControl {
 public:
  RunStatus status() const;
  void set_status(RunStatus s);

  void pause();               // stop before the next step
  void pause_at_episode_end();  // e.g. teacher disconnected
  void resume();
  void stop();
  bool stop_requested() const { return stop_.load(); }

  // Environment loop side: blocks while paused. Returns false when stopped; sets
  // `waited` when the call blocked.
  bool checkpoint(bool episode_boundary, bool* waited = nullptr);
  // Interruptible sleep; returns false when stopped.
  bool sleep_for(std::chrono::duration<double> d);

  void set_frame_sink(std::function<void(const sim::SceneFrame&)> sink);
  void publish(const sim::SceneFrame& frame) const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  RunStatus status_ = RunStatus::WarmStart;
  RunStatus resume_status_ = RunStatus::Interactive;
  bool pause_now_ = false;
  bool pause_at_boundary_ = false;
  std::atomic<bool> stop_{false};
  std::function<void(const sim::SceneFrame&)> sink_;
  mutable std::optional<sim::SceneFrame> last_frame_;
};

struct TickStats {
  std::size_t ticks = 0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
};

struct RunMetrics {
  std::uint64_t update_steps = 0;
  std::uint64_t warm_start_updates = 0;
  double duration_seconds = 0.0;
  double correction_rate = 0.0;
  double negative_rate = 0.0;
  std::vector<bool> episode_success;
  std::uint64_t env_steps = 0;
  std::size_t stored_episodes = 0;
  int aborted_episodes = 0;
  TickStats ticks;  // async only
};

struct RunHooks {
  RunControl* control = nullptr;
  // Defaults to the scripted teacher built from TrainConfig::teacher.
  Teacher* teacher = nullptr;
  std::function<void(const UpdateRecord&)> on_update;
};

struct RunResult {
  policy::PolicyParams params;
  RunMetrics metrics;
  std::unique_ptr<ReplayBuffer> buffer;
  std::vector<logs::LoggedEpisode> episodes;  // demonstrations then interactive
  std::vector<logs::EventRecord> events;
};

// One interactive episode in the environment loop. `before_step` paces the loop and
// returns the tick time (or nullopt to stop); `after_step` runs after the environment
// stepped. The episode's stored segments are appended to the buffer at the end.
struct EpisodeHooks {
  std::function<std::shared_ptr<const policy::PolicyParams>()> snapshot;
  std::function<std::optional<std::chrono::steady_clock::time_point>(int step)> before_step;
  std::function<void(const sim::WorldState&, Toggle)> after_step;
};

struct EpisodeOutcome {
  logs::LoggedEpisode log;
  std::vector<Episode> stored;
  bool aborted = false;
};

EpisodeOutcome environment_episode(sim::Environment& env, const TrainConfig& config, Teacher& teacher,
                                   ReplayBuffer& buffer, int episode_id, std::uint64_t seed,
                                   const EpisodeHooks& hooks, std::vector<logs::EventRecord>& audit);

// Throws std::invalid_argument on configuration errors before doing any work.
RunResult run(const TrainConfig& config, const RunHooks& hooks = {});

// Factory for per-episode controllers (state may carry across steps of one episode).
using Controller = std::function<Action(const sim::WorldState&, const Observation&)>;
using ControllerFactory = std::function<Controller()>;

struct EvalResult {
  double success_rate = 0.0;  // percent
  std::vector<bool> successes;
};

std::uint64_t eval_seed(std::uint64_t seed, int index);

EvalResult evaluate(const ControllerFactory& factory, const sim::TaskSpec& spec, int n_episodes,
                    std::uint64_t seed);
EvalResult evaluate(const policy::PolicyParams& params, const policy::PolicyConfig& config,
                    const sim::TaskSpec& spec, int n_episodes, std::uint64_t seed);

}  // namespace ceiling::trainer
