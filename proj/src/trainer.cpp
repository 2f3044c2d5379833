#include "ceiling/trainer.hpp"

#include <sys/resource.h>
#include <sys/syscall.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace ceiling::trainer {
namespace {

using clock = std::chrono::steady_clock;

constexpr std::uint64_t kEnvStream = 1;
constexpr std::uint64_t kDemoStream = 2;
constexpr std::uint64_t kEvalStream = 3;
constexpr std::uint64_t kUpdateStream = 4;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double ms_since(clock::time_point origin, clock::time_point t) {
  return std::chrono::duration<double, std::milli>(t - origin).count();
}

// Keeps the environment loop responsive on small machines.
void lower_thread_priority() {
  const auto tid = static_cast<id_t>(::syscall(SYS_gettid));
  (void)::setpriority(PRIO_PROCESS, tid, 19);
}

// Latest complete parameter snapshot; readers never see a partial update.
class ParamStore {
 public:
  explicit ParamStore(std::shared_ptr<const policy::PolicyParams> p) : current_(std::move(p)) {}
  std::shared_ptr<const policy::PolicyParams> get() const {
    std::lock_guard lock(mutex_);
    return current_;
  }
  void set(std::shared_ptr<const policy::PolicyParams> p) {
    std::lock_guard lock(mutex_);
    current_ = std::move(p);
  }

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const policy::PolicyParams> current_;
};

std::shared_ptr<const policy::PolicyParams> snapshot_of(const policy::PolicyParams& p) {
  auto s = std::make_shared<policy::PolicyParams>();
  s->tensors = p.tensors;
  s->version = p.version;
  s->adam_step = p.adam_step;
  return s;
}

logs::LoggedEpisode demo_log(const Episode& e, int id) {
  logs::LoggedEpisode log;
  log.episode_id = id;
  log.source = e.source;
  log.task = e.task;
  log.seed = e.seed;
  log.success = e.success;
  for (std::size_t i = 0; i < e.transitions.size(); ++i) {
    logs::LoggedStep s;
    s.step = static_cast<int>(i);
    s.obs = e.transitions[i].obs;
    s.action = e.transitions[i].action;
    s.label = e.transitions[i].label;
    log.steps.push_back(std::move(s));
  }
  return log;
}

TickStats tick_stats(std::vector<double> lateness_ms) {
  TickStats t;
  t.ticks = lateness_ms.size();
  if (lateness_ms.empty()) return t;
  std::sort(lateness_ms.begin(), lateness_ms.end());
  auto pct = [&](double p) {
    const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(lateness_ms.size()))) - 1;
    return lateness_ms[std::min(idx, lateness_ms.size() - 1)];
  };
  t.p50_ms = pct(0.50);
  t.p99_ms = pct(0.99);
  t.max_ms = lateness_ms.back();
  return t;
}

void finalize_rates(RunMetrics& m, const std::vector<logs::LoggedEpisode>& episodes) {
  LabelCounts c;
  for (const auto& e : episodes)
    if (e.source == EpisodeSource::Interactive) c += tally(e.labeled());
  if (c.total() == 0) return;
  const auto r = feedback::feedback_rates(c);
  m.correction_rate = r.correction_rate;
  m.negative_rate = r.negative_rate;
}

double success_fraction(const std::vector<bool>& flags) {
  if (flags.empty()) return 0.0;
  return static_cast<double>(std::count(flags.begin(), flags.end(), true)) / static_cast<double>(flags.size());
}

nlohmann::json double_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double read_double_or_inf(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (j.at(key).is_null()) return std::numeric_limits<double>::infinity();
  return j.at(key).get<double>();
}

}  // namespace

std::string_view to_string(Mode m) { return m == Mode::Async ? "async" : "lockstep"; }

Mode parse_mode(std::string_view name) {
  if (name == "async") return Mode::Async;
  if (name == "lockstep") return Mode::Lockstep;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "'");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(base ^ splitmix64(stream)) + index);
}

Seeds Seeds::from_master(std::uint64_t seed) {
  return {derive_seed(seed, 10), derive_seed(seed, 11), derive_seed(seed, 12)};
}

void TrainConfig::validate() const {
  task_spec.validate();
  policy.validate();
  teacher.validate();
  if (n_demos < 1) throw std::invalid_argument("config: n_demos must be >= 1");
  if (n_interactive_episodes < 0) throw std::invalid_argument("config: n_interactive_episodes must be >= 0");
  if (!(warm_start_seconds >= 0.0)) throw std::invalid_argument("config: warm_start_seconds must be >= 0");
  if (warm_start_updates < 0) throw std::invalid_argument("config: warm_start_updates must be >= 0");
  if (!(control_rate_hz > 0.0)) throw std::invalid_argument("config: control_rate_hz must be > 0");
  if (updates_per_env_step < 0) throw std::invalid_argument("config: updates_per_env_step must be >= 0");
  if (policy.input_dim != kObservationDim || policy.output_dim != kActionDim)
    throw std::invalid_argument("config: policy dimensions do not match the environment");
  if (policy.delta_max != task_spec.delta_max)
    throw std::invalid_argument("config: policy and task delta_max differ");
  if (update_delay.count() < 0) throw std::invalid_argument("config: update_delay must be >= 0");
  if (interactive_seconds_budget && !(*interactive_seconds_budget > 0.0))
    throw std::invalid_argument("config: interactive time budget must be > 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"task", std::string(to_string(c.task_spec.task))},
          {"task_spec",
           {{"goal_radius", c.task_spec.goal_radius},
            {"step_timeout", c.task_spec.step_timeout},
            {"delta_max", c.task_spec.delta_max}}},
          {"method", std::string(methods::to_string(c.method.method))},
          {"policy", policy::to_json(c.policy)},
          {"teacher",
           {{"correction_threshold", c.teacher.correction_threshold},
            {"correction_gain", c.teacher.correction_gain},
            {"miss_probability", c.teacher.miss_probability},
            {"latency_steps", c.teacher.latency_steps},
            {"uncorrectable_bound", double_or_null(c.teacher.uncorrectable_bound)},
            {"correction_max", c.teacher.correction_max}}},
          {"n_demos", c.n_demos},
          {"n_interactive_episodes", c.n_interactive_episodes},
          {"warm_start_seconds", c.warm_start_seconds},
          {"warm_start_updates", c.warm_start_updates},
          {"control_rate_hz", c.control_rate_hz},
          {"updates_per_env_step", c.updates_per_env_step},
          {"seeds", {{"env", c.seeds.env}, {"policy", c.seeds.policy}, {"teacher", c.seeds.teacher}}},
          {"mode", std::string(to_string(c.mode))},
          {"batch_source", c.batch_source == BatchSource::Sampled ? "sampled" : "full_buffer"},
          {"reduction", c.reduction == policy::Reduction::Mean ? "mean" : "sum"}};
}

TrainConfig config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (j.contains("task")) {
    const auto task = parse_task(j.at("task").get<std::string>());
    if (task != c.task_spec.task) c.task_spec = sim::TaskSpec::defaults(task);
  }
  if (j.contains("task_spec")) {
    const auto& t = j.at("task_spec");
    c.task_spec.goal_radius = t.value("goal_radius", c.task_spec.goal_radius);
    c.task_spec.step_timeout = t.value("step_timeout", c.task_spec.step_timeout);
    c.task_spec.delta_max = t.value("delta_max", c.task_spec.delta_max);
  }
  if (j.contains("method")) c.method = methods::MethodSpec::of(methods::parse_method(j.at("method").get<std::string>()));
  if (j.contains("policy")) {
    auto merged = policy::to_json(c.policy);
    merged.update(j.at("policy"));
    c.policy = policy::config_from_json(merged);
  }
  if (j.contains("teacher")) {
    const auto& t = j.at("teacher");
    c.teacher.correction_threshold = t.value("correction_threshold", c.teacher.correction_threshold);
    c.teacher.correction_gain = t.value("correction_gain", c.teacher.correction_gain);
    c.teacher.miss_probability = t.value("miss_probability", c.teacher.miss_probability);
    c.teacher.latency_steps = t.value("latency_steps", c.teacher.latency_steps);
    c.teacher.uncorrectable_bound = read_double_or_inf(t, "uncorrectable_bound", c.teacher.uncorrectable_bound);
    c.teacher.correction_max = t.value("correction_max", c.teacher.correction_max);
  }
  c.n_demos = j.value("n_demos", c.n_demos);
  c.n_interactive_episodes = j.value("n_interactive_episodes", c.n_interactive_episodes);
  c.warm_start_seconds = j.value("warm_start_seconds", c.warm_start_seconds);
  c.warm_start_updates = j.value("warm_start_updates", c.warm_start_updates);
  c.control_rate_hz = j.value("control_rate_hz", c.control_rate_hz);
  c.updates_per_env_step = j.value("updates_per_env_step", c.updates_per_env_step);
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    c.seeds.env = s.value("env", c.seeds.env);
    c.seeds.policy = s.value("policy", c.seeds.policy);
    c.seeds.teacher = s.value("teacher", c.seeds.teacher);
  }
  if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
  if (j.contains("batch_source")) {
    const auto b = j.at("batch_source").get<std::string>();
    if (b != "sampled" && b != "full_buffer") throw std::invalid_argument("unknown batch_source '" + b + "'");
    c.batch_source = b == "sampled" ? BatchSource::Sampled : BatchSource::FullBuffer;
  }
  if (j.contains("reduction")) {
    const auto r = j.at("reduction").get<std::string>();
    if (r != "mean" && r != "sum") throw std::invalid_argument("unknown reduction '" + r + "'");
    c.reduction = r == "mean" ? policy::Reduction::Mean : policy::Reduction::Sum;
  }
  return c;
}

std::vector<Episode> collect_demonstrations(const sim::TaskSpec& spec, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("collect_demonstrations: n must be >= 1");
  std::vector<Episode> out;
  const int max_attempts = 10 * n;
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(out.size()) < n; ++attempt) {
    Episode e;
    e.task = spec.task;
    e.seed = derive_seed(seed, kDemoStream, static_cast<std::uint64_t>(attempt));
    e.source = EpisodeSource::Demonstration;
    auto s = sim::reset(spec, e.seed).state;
    while (!s.done) {
      const auto a = sim::scripted_expert(spec, s);
      e.transitions.push_back({sim::observe(s), a, FeedbackLabel::Good});
      const auto r = sim::step(spec, s, a);
      s = r.state;
      e.success = r.success;
    }
    if (e.success) out.push_back(std::move(e));
  }
  if (static_cast<int>(out.size()) < n)
    throw std::runtime_error("collect_demonstrations: expert failed too often (" + std::to_string(out.size()) +
                             " of " + std::to_string(n) + " after " + std::to_string(max_attempts) + " attempts)");
  return out;
}

UpdateRecord update_loop_step(const ReplayBuffer& buffer, policy::PolicyParams& params, const TrainConfig& config,
                              std::mt19937_64& rng) {
  const Batch batch = config.batch_source == BatchSource::FullBuffer
                          ? buffer.all_weighted()
                          : buffer.sample_batch(config.policy.batch_trajectories, rng);
  if (batch.empty()) throw std::logic_error("update_loop_step: replay buffer is empty");
  auto lg = policy::loss_and_gradient(params, config.policy, batch, config.reduction);
  policy::adam_step(params, lg.gradients, config.policy);
  return {params.version, lg.loss, std::move(lg.gradients)};
}

std::vector<feedback::FeedbackEvent> ScriptedTeacherSource::events(int episode, int step, const sim::TaskSpec& spec,
                                                                   const sim::WorldState& state,
                                                                   const Action& policy_action, clock::time_point,
                                                                   std::vector<logs::EventRecord>& audit) {
  auto ev = teacher_.teach(policy_action, sim::scripted_expert(spec, state), step);
  for (const auto& e : ev) {
    logs::EventRecord r;
    r.episode = episode;
    r.step = step;
    r.source = "scripted";
    r.kind = std::string(feedback::to_string(e.kind));
    r.dx = e.delta[0];
    r.dy = e.delta[1];
    r.grip = e.gripper_override;
    r.disposition = "applied";
    audit.push_back(std::move(r));
  }
  return ev;
}

logs::EventRecord HumanTeacherSource::record(const feedback::InputAudit& a) const {
  logs::EventRecord r;
  r.episode = a.episode;
  r.step = a.step;
  r.source = "human";
  r.kind = std::string(feedback::to_string(a.input.kind));
  if (a.input.kind == feedback::HumanInput::Kind::Correct) {
    r.dx = a.input.dx;
    r.dy = a.input.dy;
    if (a.input.grip != 0.0) r.grip = a.input.grip;
  }
  r.disposition = std::string(feedback::to_string(a.disposition));
  r.sequence = a.input.sequence;
  r.received_ms = ms_since(origin_, a.input.received);
  return r;
}

std::vector<feedback::FeedbackEvent> HumanTeacherSource::events(int episode, int step, const sim::TaskSpec&,
                                                                const sim::WorldState&, const Action&,
                                                                clock::time_point tick,
                                                                std::vector<logs::EventRecord>& audit) {
  auto drained = queue_.drain(episode, step, tick);
  for (const auto& a : drained.audit) audit.push_back(record(a));
  return std::move(drained.events);
}

void HumanTeacherSource::finish(int episode, int step, std::vector<logs::EventRecord>& audit) {
  for (const auto& a : queue_.expire(episode, step)) audit.push_back(record(a));
}

RunStatus RunControl::status() const {
  std::lock_guard lock(mutex_);
  return status_;
}

void RunControl::set_status(RunStatus s) {
  std::lock_guard lock(mutex_);
  if (status_ == RunStatus::Paused)
    resume_status_ = s;
  else
    status_ = s;
}

void RunControl::pause() {
  std::lock_guard lock(mutex_);
  pause_now_ = true;
}

void RunControl::pause_at_episode_end() {
  std::lock_guard lock(mutex_);
  pause_at_boundary_ = true;
}

void RunControl::resume() {
  {
    std::lock_guard lock(mutex_);
    pause_now_ = false;
    pause_at_boundary_ = false;
  }
  cv_.notify_all();
}

void RunControl::stop() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
}

bool RunControl::checkpoint(bool episode_boundary, bool* waited) {
  std::unique_lock lock(mutex_);
  auto must_wait = [&] { return !stop_ && (pause_now_ || (episode_boundary && pause_at_boundary_)); };
  if (waited) *waited = false;
  if (!must_wait()) return !stop_;
  if (waited) *waited = true;
  resume_status_ = status_;
  status_ = RunStatus::Paused;
  auto frame = last_frame_;
  auto sink = sink_;
  lock.unlock();
  if (frame && sink) {
    frame->status = RunStatus::Paused;
    sink(*frame);
  }
  lock.lock();
  cv_.wait(lock, [&] { return !must_wait(); });
  status_ = resume_status_;
  return !stop_;
}

bool RunControl::sleep_for(std::chrono::duration<double> d) {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, d, [&] { return stop_.load(); });
  return !stop_;
}

void RunControl::set_frame_sink(std::function<void(const sim::SceneFrame&)> sink) {
  std::lock_guard lock(mutex_);
  sink_ = std::move(sink);
}

void RunControl::publish(const sim::SceneFrame& frame) const {
  std::function<void(const sim::SceneFrame&)> sink;
  {
    std::lock_guard lock(mutex_);
    last_frame_ = frame;
    sink = sink_;
  }
  if (sink) sink(frame);
}

EpisodeOutcome environment_episode(sim::Environment& env, const TrainConfig& config, Teacher& teacher,
                                   ReplayBuffer& buffer, int episode_id, std::uint64_t seed,
                                   const EpisodeHooks& hooks, std::vector<logs::EventRecord>& audit) {
  EpisodeOutcome out;
  out.log.episode_id = episode_id;
  out.log.source = EpisodeSource::Interactive;
  out.log.task = env.spec().task;
  out.log.seed = seed;

  teacher.begin_episode(episode_id);
  env.reset(seed);
  feedback::LabelerState labeler;
  auto hidden = policy::initial_hidden<float>(config.policy);
  int step = 0;

  while (!env.state().done) {
    const auto tick = hooks.before_step ? hooks.before_step(step) : std::optional(clock::now());
    if (!tick) break;
    const auto params = hooks.snapshot();
    const auto obs = sim::observe(env.state());
    auto decision = policy::act(*params, config.policy, obs, hidden);
    hidden = std::move(decision.hidden);

    const std::size_t audit_start = audit.size();
    auto raw = teacher.events(episode_id, step, env.spec(), env.state(), decision.action, *tick, audit);
    const auto events = methods::teacher_adapter(config.method, std::move(raw));
    for (std::size_t i = audit_start; i < audit.size(); ++i) {
      auto& r = audit[i];
      if (r.disposition != "applied") continue;
      const bool kept = r.kind == "correction" ? config.method.corrections_enabled
                                               : config.method.evaluative_enabled();
      if (!kept) r.disposition = "filtered";
    }

    const auto fb = feedback::apply_feedback(labeler, decision.action, events, config.task_spec.delta_max,
                                             config.teacher.correction_max);
    labeler = fb.next;

    logs::LoggedStep rec;
    rec.step = step;
    rec.obs = obs;
    rec.action = fb.executed;
    rec.label = fb.label;
    rec.toggle_state = labeler.toggle;
    if (fb.correction) {
      rec.correction_delta = fb.correction->delta;
      rec.gripper_override = fb.correction->gripper_override;
    }
    rec.disposition = methods::filter_transition(config.method, fb.label);
    out.log.steps.push_back(std::move(rec));

    try {
      env.step(fb.executed);
    } catch (const std::exception&) {
      out.aborted = true;
      break;
    }
    if (hooks.after_step) hooks.after_step(env.state(), labeler.toggle);
    ++step;
  }

  out.log.success = !out.aborted && sim::is_success(env.spec(), env.state());
  if (!out.log.steps.empty()) {
    out.stored = methods::stored_segments(config.method, out.log.labeled());
    for (const auto& e : out.stored) buffer.append_episode(e);
  }
  return out;
}

namespace {

struct Prepared {
  std::unique_ptr<ReplayBuffer> buffer = std::make_unique<ReplayBuffer>();
  std::vector<logs::LoggedEpisode> episodes;
  policy::PolicyParams params;
};

Prepared prepare(const TrainConfig& config) {
  Prepared p;
  const auto demos = collect_demonstrations(config.task_spec, config.n_demos, config.seeds.env);
  for (std::size_t i = 0; i < demos.size(); ++i) {
    p.episodes.push_back(demo_log(demos[i], static_cast<int>(i)));
    p.buffer->append_episode(demos[i]);
  }
  p.params = policy::init_params<float>(config.policy, config.seeds.policy);
  return p;
}

sim::SceneFrame frame_for(const TrainConfig& config, const sim::WorldState& s, int episode, Toggle toggle,
                          RunStatus status, const std::vector<bool>& successes) {
  return sim::render_frame(config.task_spec, s, {episode, toggle, status, success_fraction(successes)});
}

RunResult run_lockstep(const TrainConfig& config, const RunHooks& hooks) {
  auto prep = prepare(config);
  RunResult result;
  auto& params = prep.params;
  const auto initial_version = params.version;
  std::mt19937_64 rng(derive_seed(config.seeds.policy, kUpdateStream));

  auto do_update = [&] {
    auto rec = update_loop_step(*prep.buffer, params, config, rng);
    if (hooks.on_update) hooks.on_update(rec);
  };

  for (int i = 0; i < config.warm_start_updates; ++i) do_update();
  result.metrics.warm_start_updates = params.version - initial_version;

  if (config.method.interactive()) {
    ScriptedTeacherSource scripted(config.teacher, config.seeds.teacher);
    Teacher& teacher = hooks.teacher ? *hooks.teacher : scripted;
    sim::Environment env(config.task_spec);
    // Non-owning view: updates mutate params in place between steps.
    const std::shared_ptr<const policy::PolicyParams> view(std::shared_ptr<void>(), &params);
    EpisodeHooks eh;
    eh.snapshot = [&] { return view; };
    eh.after_step = [&](const sim::WorldState&, Toggle) {
      ++result.metrics.env_steps;
      for (int k = 0; k < config.updates_per_env_step; ++k) do_update();
    };
    for (int e = 0; e < config.n_interactive_episodes; ++e) {
      const auto seed = derive_seed(config.seeds.env, kEnvStream, static_cast<std::uint64_t>(e));
      auto outcome = environment_episode(env, config, teacher, *prep.buffer, config.n_demos + e, seed, eh,
                                         result.events);
      result.metrics.episode_success.push_back(outcome.log.success);
      result.metrics.aborted_episodes += outcome.aborted ? 1 : 0;
      prep.episodes.push_back(std::move(outcome.log));
    }
    teacher.finish(config.n_demos + config.n_interactive_episodes, 0, result.events);
  }

  result.metrics.update_steps = params.version - initial_version;
  // Simulated teaching time at the control rate, so lockstep metrics stay reproducible.
  result.metrics.duration_seconds = static_cast<double>(result.metrics.env_steps) / config.control_rate_hz;
  finalize_rates(result.metrics, prep.episodes);
  result.metrics.stored_episodes = prep.buffer->size();
  result.params = std::move(params);
  result.buffer = std::move(prep.buffer);
  result.episodes = std::move(prep.episodes);
  return result;
}

RunResult run_async(const TrainConfig& config, const RunHooks& hooks) {
  auto prep = prepare(config);
  RunResult result;
  RunControl local_control;
  RunControl& control = hooks.control ? *hooks.control : local_control;
  const auto start = clock::now();

  policy::PolicyParams work = std::move(prep.params);
  const auto initial_version = work.version;
  ParamStore store(snapshot_of(work));
  std::atomic<bool> stop_updates{false};
  std::atomic<std::uint64_t> published_version{work.version};
  std::exception_ptr update_error;

  std::thread updater([&] {
    lower_thread_priority();
    std::mt19937_64 rng(derive_seed(config.seeds.policy, kUpdateStream));
    try {
      while (!stop_updates.load()) {
        if (config.update_delay.count() > 0) std::this_thread::sleep_for(config.update_delay);
        auto rec = update_loop_step(*prep.buffer, work, config, rng);
        store.set(snapshot_of(work));
        published_version.store(work.version);
        if (hooks.on_update) hooks.on_update(rec);
      }
    } catch (...) {
      update_error = std::current_exception();
    }
  });

  auto stop_updater = [&] {
    stop_updates.store(true);
    if (updater.joinable()) updater.join();
  };

  try {
    control.set_status(RunStatus::WarmStart);
    {
      const auto first = sim::reset(config.task_spec, derive_seed(config.seeds.env, kEnvStream, 0)).state;
      control.publish(frame_for(config, first, config.n_demos, Toggle::Positive, RunStatus::WarmStart, {}));
    }
    bool running = control.sleep_for(std::chrono::duration<double>(config.warm_start_seconds));
    result.metrics.warm_start_updates = published_version.load() - initial_version;

    if (running && config.method.interactive()) {
      control.set_status(RunStatus::Interactive);
      ScriptedTeacherSource scripted(config.teacher, config.seeds.teacher);
      Teacher& teacher = hooks.teacher ? *hooks.teacher : scripted;
      sim::Environment env(config.task_spec);
      const auto period = std::chrono::duration_cast<clock::duration>(
          std::chrono::duration<double>(1.0 / config.control_rate_hz));
      const auto interactive_start = clock::now();
      auto next_tick = interactive_start;
      std::vector<double> lateness;
      int current_episode = config.n_demos;
      int current_step = 0;

      EpisodeHooks eh;
      eh.snapshot = [&] { return store.get(); };
      eh.before_step = [&](int step) -> std::optional<clock::time_point> {
        current_step = step;
        if (config.interactive_seconds_budget &&
            std::chrono::duration<double>(clock::now() - interactive_start).count() >
                *config.interactive_seconds_budget)
          return std::nullopt;
        bool waited = false;
        if (!control.checkpoint(false, &waited)) return std::nullopt;
        if (waited) next_tick = clock::now();
        std::this_thread::sleep_until(next_tick);
        const auto tick = clock::now();
        lateness.push_back(ms_since(next_tick, tick));
        next_tick += period;
        if (tick > next_tick) next_tick = tick + period;
        return tick;
      };
      eh.after_step = [&](const sim::WorldState& s, Toggle toggle) {
        ++result.metrics.env_steps;
        control.publish(frame_for(config, s, current_episode, toggle, control.status(),
                                  result.metrics.episode_success));
      };

      for (int e = 0; e < config.n_interactive_episodes && running; ++e) {
        bool waited = false;
        if (!control.checkpoint(true, &waited)) break;
        if (waited) next_tick = clock::now();
        current_episode = config.n_demos + e;
        const auto seed = derive_seed(config.seeds.env, kEnvStream, static_cast<std::uint64_t>(e));
        auto outcome =
            environment_episode(env, config, teacher, *prep.buffer, current_episode, seed, eh, result.events);
        if (outcome.log.steps.empty()) break;
        const bool finished = env.state().done || outcome.aborted;
        result.metrics.episode_success.push_back(outcome.log.success);
        result.metrics.aborted_episodes += outcome.aborted ? 1 : 0;
        prep.episodes.push_back(std::move(outcome.log));
        if (!finished) break;  // stopped or out of time mid-episode
      }
      teacher.finish(current_episode, current_step, result.events);
      result.metrics.ticks = tick_stats(std::move(lateness));
    }
  } catch (...) {
    stop_updater();
    throw;
  }

  stop_updater();
  if (update_error) std::rethrow_exception(update_error);
  control.set_status(RunStatus::Done);

  result.metrics.duration_seconds = std::chrono::duration<double>(clock::now() - start).count();
  result.metrics.update_steps = work.version - initial_version;
  finalize_rates(result.metrics, prep.episodes);
  result.metrics.stored_episodes = prep.buffer->size();
  result.params = std::move(work);
  result.buffer = std::move(prep.buffer);
  result.episodes = std::move(prep.episodes);
  return result;
}

}  // namespace

RunResult run(const TrainConfig& config, const RunHooks& hooks) {
  config.validate();
  return config.mode == Mode::Lockstep ? run_lockstep(config, hooks) : run_async(config, hooks);
}

std::uint64_t eval_seed(std::uint64_t seed, int index) {
  return derive_seed(seed, kEvalStream, static_cast<std::uint64_t>(index));
}

EvalResult evaluate(const ControllerFactory& factory, const sim::TaskSpec& spec, int n_episodes,
                    std::uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate: n_episodes must be >= 1");
  EvalResult r;
  for (int i = 0; i < n_episodes; ++i) {
    auto controller = factory();
    auto s = sim::reset(spec, eval_seed(seed, i)).state;
    bool success = false;
    while (!s.done) {
      const auto a = clip_action(controller(s, sim::observe(s)), spec.delta_max);
      const auto out = sim::step(spec, s, a);
      s = out.state;
      success = out.success;
    }
    r.successes.push_back(success);
  }
  r.success_rate = 100.0 * success_fraction(r.successes);
  return r;
}

EvalResult evaluate(const policy::PolicyParams& params, const policy::PolicyConfig& config,
                    const sim::TaskSpec& spec, int n_episodes, std::uint64_t seed) {
  policy::check_shapes(params, config);
  return evaluate(
      [&]() -> Controller {
        auto hidden = std::make_shared<policy::Vector<float>>(policy::initial_hidden<float>(config));
        return [&params, &config, hidden](const sim::WorldState&, const Observation& obs) {
          auto r = policy::act(params, config, obs, *hidden);
          *hidden = std::move(r.hidden);
          return r.action;
        };
      },
      spec, n_episodes, seed);
}

}  // namespace ceiling::trainer
