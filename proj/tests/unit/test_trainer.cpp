#include <cmath>
#include <limits>
#include <set>
#include <thread>

#include "ceiling/trainer.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace ceiling;
using namespace ceiling::trainer;
using L = FeedbackLabel;

namespace {

TrainConfig small_run(methods::Method m, std::uint64_t seed = 3) {
  TrainConfig c;
  c.method = methods::MethodSpec::of(m);
  c.seeds = Seeds::from_master(seed);
  c.n_demos = 3;
  c.n_interactive_episodes = 3;
  c.warm_start_updates = 20;
  c.policy.batch_trajectories = 4;
  return c;
}

bool same_params(const policy::PolicyParams& a, const policy::PolicyParams& b) {
  if (a.tensors.size() != b.tensors.size() || a.version != b.version) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i)
    if (a.tensors[i] != b.tensors[i]) return false;
  return true;
}

class NoEvents : public Teacher {
 public:
  void begin_episode(int) override {}
  std::vector<feedback::FeedbackEvent> events(int, int, const sim::TaskSpec&, const sim::WorldState&,
                                              const Action&, std::chrono::steady_clock::time_point,
                                              std::vector<logs::EventRecord>&) override {
    return {};
  }
};

EpisodeHooks fixed_params(const policy::PolicyParams& p) {
  auto shared = std::make_shared<const policy::PolicyParams>(p);
  EpisodeHooks h;
  h.snapshot = [shared] { return shared; };
  return h;
}

}  // namespace

TEST_CASE("seed streams are distinct and stable") {
  const auto s = Seeds::from_master(7);
  CHECK(s == Seeds::from_master(7));
  CHECK(std::set<std::uint64_t>{s.env, s.policy, s.teacher}.size() == 3);
  CHECK_FALSE(s == Seeds::from_master(8));
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(7, 1, i));
  CHECK(seen.size() == 1000);
  CHECK(derive_seed(7, 1, 0) != derive_seed(7, 2, 0));
}

TEST_CASE("demonstrations are successful expert episodes") {
  const auto spec = sim::TaskSpec::defaults(TaskId::PushBox);
  const auto demos = collect_demonstrations(spec, 5, 11);
  REQUIRE(demos.size() == 5);
  for (const auto& d : demos) {
    CHECK(d.success);
    CHECK(d.source == EpisodeSource::Demonstration);
    CHECK(tally(d).good == d.transitions.size());
    CHECK(d.transitions.size() <= static_cast<std::size_t>(spec.step_timeout));
  }
  const auto again = collect_demonstrations(spec, 5, 11);
  for (std::size_t i = 0; i < demos.size(); ++i) {
    CHECK(again[i].seed == demos[i].seed);
    CHECK(again[i].transitions.size() == demos[i].transitions.size());
  }
  CHECK_THROWS_AS(collect_demonstrations(spec, 0, 11), std::invalid_argument);
}

TEST_CASE("update step on an all-zero-weight batch only applies weight decay") {
  policy::PolicyConfig pc;
  TrainConfig c;
  ReplayBuffer buffer;
  buffer.append_episode(testing::episode_with_labels({L::Discarded, L::Discarded, L::Discarded}));
  auto params = policy::init_params<float>(pc, 5);
  const auto before = params;
  std::mt19937_64 rng(1);
  const auto rec = update_loop_step(buffer, params, c, rng);
  CHECK(rec.loss == 0.0);
  CHECK(rec.version == before.version + 1);
  const double shrink = 1.0 - pc.learning_rate * pc.weight_decay;
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    CHECK(rec.gradients.tensors[i].isZero(0.0));
    const auto expected = (before.tensors[i].cast<double>() * shrink).eval();
    CHECK((params.tensors[i].cast<double>() - expected).cwiseAbs().maxCoeff() <= 1e-7);
  }
}

TEST_CASE("update step rejects an empty buffer") {
  TrainConfig c;
  ReplayBuffer buffer;
  auto params = policy::init_params<float>(c.policy, 5);
  std::mt19937_64 rng(1);
  CHECK_THROWS(update_loop_step(buffer, params, c, rng));
}

TEST_CASE("loss on a fixed demonstration buffer decreases over the first 50 steps") {
  TrainConfig c;
  c.batch_source = BatchSource::FullBuffer;
  ReplayBuffer buffer;
  for (auto& d : collect_demonstrations(c.task_spec, 4, 2)) buffer.append_episode(std::move(d));
  auto params = policy::init_params<float>(c.policy, 9);
  std::mt19937_64 rng(1);
  double previous = std::numeric_limits<double>::infinity();
  int increases = 0;
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto rec = update_loop_step(buffer, params, c, rng);
    if (i == 0) first = rec.loss;
    last = rec.loss;
    increases += rec.loss >= previous;
    previous = rec.loss;
  }
  CHECK(increases == 0);
  CHECK(last < first);
}

TEST_CASE("lockstep runs are deterministic") {
  const auto c = small_run(methods::Method::CEILing);
  const auto a = run(c);
  const auto b = run(c);
  CHECK(same_params(a.params, b.params));
  CHECK(a.episodes == b.episodes);
  CHECK(a.events == b.events);
  CHECK(a.metrics.update_steps == b.metrics.update_steps);
  CHECK(a.metrics.episode_success == b.metrics.episode_success);
  CHECK(a.metrics.correction_rate == b.metrics.correction_rate);
  CHECK(a.metrics.duration_seconds == b.metrics.duration_seconds);

  auto other = c;
  other.seeds = Seeds::from_master(4);
  CHECK_FALSE(same_params(run(other).params, a.params));
}

TEST_CASE("lockstep bookkeeping invariants") {
  for (auto m : {methods::Method::Evaluative, methods::Method::HGDagger, methods::Method::IWR,
                 methods::Method::CEILing}) {
    CAPTURE(methods::to_string(m));
    auto c = small_run(m);
    c.updates_per_env_step = 2;
    std::uint64_t seen_updates = 0;
    RunHooks hooks;
    hooks.on_update = [&](const UpdateRecord& r) {
      ++seen_updates;
      CHECK(r.version == seen_updates);
    };
    const auto r = run(c, hooks);
    const auto& met = r.metrics;
    CHECK(met.warm_start_updates == 20);
    CHECK(met.update_steps == r.params.version);
    CHECK(met.update_steps == seen_updates);
    CHECK(met.update_steps == 20 + 2 * met.env_steps);
    CHECK(met.duration_seconds == doctest::Approx(met.env_steps / 20.0));
    REQUIRE(r.episodes.size() == 6);
    std::size_t steps = 0, stored = c.n_demos;
    LabelCounts counts;
    for (std::size_t i = 0; i < r.episodes.size(); ++i) {
      const auto& e = r.episodes[i];
      CHECK(e.episode_id == static_cast<int>(i));
      CHECK(e.source == (i < 3 ? EpisodeSource::Demonstration : EpisodeSource::Interactive));
      if (e.source != EpisodeSource::Interactive) continue;
      CHECK(e.steps.size() <= static_cast<std::size_t>(c.task_spec.step_timeout));
      CHECK(e.success == met.episode_success[i - 3]);
      steps += e.steps.size();
      counts += tally(e.labeled());
      stored += methods::stored_segments(c.method, e.labeled()).size();
    }
    CHECK(steps == met.env_steps);
    CHECK(r.buffer->size() == stored);
    CHECK(met.stored_episodes == stored);
    const auto rates = feedback::feedback_rates(counts);
    CHECK(met.correction_rate == rates.correction_rate);
    CHECK(met.negative_rate == rates.negative_rate);
    if (!c.method.corrections_enabled) CHECK(met.correction_rate == 0.0);
    if (!c.method.evaluative_enabled()) CHECK(met.negative_rate == 0.0);
  }
}

TEST_CASE("BC runs a fixed update budget on demonstrations only") {
  auto c = small_run(methods::Method::BC);
  const auto r = run(c);
  CHECK(r.metrics.update_steps == 20);
  CHECK(r.metrics.env_steps == 0);
  CHECK(r.metrics.episode_success.empty());
  CHECK(r.metrics.correction_rate == 0.0);
  CHECK(r.metrics.negative_rate == 0.0);
  CHECK(r.buffer->size() == 3);
  CHECK(r.episodes.size() == 3);
  CHECK(r.events.empty());
}

TEST_CASE("configuration errors are raised before any work") {
  auto c = small_run(methods::Method::CEILing);
  int updates = 0;
  RunHooks hooks;
  hooks.on_update = [&](const UpdateRecord&) { ++updates; };
  auto bad = c;
  bad.n_demos = 0;
  CHECK_THROWS_AS(run(bad, hooks), std::invalid_argument);
  bad = c;
  bad.policy.delta_max = 0.02;
  CHECK_THROWS_AS(run(bad, hooks), std::invalid_argument);
  bad = c;
  bad.teacher.miss_probability = 1.5;
  CHECK_THROWS_AS(run(bad, hooks), std::invalid_argument);
  bad = c;
  bad.control_rate_hz = 0.0;
  CHECK_THROWS_AS(run(bad, hooks), std::invalid_argument);
  CHECK(updates == 0);
}

TEST_CASE("config JSON round trip") {
  auto c = small_run(methods::Method::IWR, 9);
  c.task_spec = sim::TaskSpec::defaults(TaskId::PickupCube);
  c.teacher.uncorrectable_bound = std::numeric_limits<double>::infinity();
  c.teacher.latency_steps = 4;
  c.mode = Mode::Async;
  c.batch_source = BatchSource::FullBuffer;
  c.reduction = policy::Reduction::Sum;
  c.policy.recurrent = false;
  const auto j = to_json(c);
  CHECK(j["teacher"]["uncorrectable_bound"].is_null());
  const auto back = config_from_json(nlohmann::json::parse(j.dump()));
  CHECK(to_json(back) == j);
  CHECK(std::isinf(back.teacher.uncorrectable_bound));
  CHECK(back.task_spec.task == TaskId::PickupCube);

  const auto partial = config_from_json({{"n_demos", 4}}, c);
  CHECK(partial.n_demos == 4);
  CHECK(partial.method.method == methods::Method::IWR);
  CHECK_THROWS(config_from_json({{"mode", "turbo"}}));
  CHECK_THROWS(config_from_json({{"reduction", "max"}}));
}

TEST_CASE("a perfect teacher drives an untrained policy to success") {
  TrainConfig c;
  c.teacher.correction_threshold = 0.0;
  c.teacher.miss_probability = 0.0;
  c.teacher.latency_steps = 0;
  c.teacher.uncorrectable_bound = std::numeric_limits<double>::infinity();
  c.teacher.correction_max = 2 * c.task_spec.delta_max;
  const auto params = policy::init_params<float>(c.policy, 1);
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    sim::Environment env(c.task_spec);
    ScriptedTeacherSource teacher(c.teacher, seed);
    ReplayBuffer buffer;
    std::vector<logs::EventRecord> audit;
    const auto out = environment_episode(env, c, teacher, buffer, 0, seed, fixed_params(params), audit);
    CHECK(out.log.success);
    CHECK(out.log.steps.size() <= static_cast<std::size_t>(c.task_spec.step_timeout));

    // Replays the episode to recover each step's policy action.
    auto hidden = policy::initial_hidden<float>(c.policy);
    auto state = sim::reset(c.task_spec, seed).state;
    for (const auto& s : out.log.steps) {
      auto d = policy::act(params, c.policy, s.obs, hidden);
      hidden = d.hidden;
      const auto expert = sim::scripted_expert(c.task_spec, state);
      const bool divergent = std::hypot(d.action.delta[0] - expert.delta[0], d.action.delta[1] - expert.delta[1]) > 0 ||
                             (d.action.gripper >= 0) != (expert.gripper >= 0);
      CHECK(s.label == (divergent ? L::Corrected : L::Good));
      state = sim::step(c.task_spec, state, s.action).state;
    }
    CHECK(buffer.size() == 1);
  }
}

TEST_CASE("no teacher events labels every step Good") {
  TrainConfig c;
  const auto params = policy::init_params<float>(c.policy, 1);
  sim::Environment env(c.task_spec);
  NoEvents teacher;
  ReplayBuffer buffer;
  std::vector<logs::EventRecord> audit;
  const auto out = environment_episode(env, c, teacher, buffer, 0, 5, fixed_params(params), audit);
  CHECK(out.log.steps.size() <= static_cast<std::size_t>(c.task_spec.step_timeout));
  for (const auto& s : out.log.steps) CHECK(s.label == L::Good);
  CHECK(buffer.counts().good == out.log.steps.size());
  CHECK(audit.empty());
}

TEST_CASE("stripped events are audited as filtered") {
  TrainConfig c;
  c.method = methods::MethodSpec::of(methods::Method::Evaluative);
  const auto params = policy::init_params<float>(c.policy, 1);
  sim::Environment env(c.task_spec);
  ScriptedTeacherSource teacher(c.teacher, 4);
  ReplayBuffer buffer;
  std::vector<logs::EventRecord> audit;
  const auto out = environment_episode(env, c, teacher, buffer, 0, 5, fixed_params(params), audit);
  REQUIRE_FALSE(audit.empty());
  for (const auto& r : audit) CHECK(r.disposition == (r.kind == "correction" ? "filtered" : "applied"));
  for (const auto& s : out.log.steps) CHECK(s.label != L::Corrected);
}

TEST_CASE("human toggle received before a tick labels that step") {
  TrainConfig c;
  const auto params = policy::init_params<float>(c.policy, 1);
  sim::Environment env(c.task_spec);
  feedback::HumanEventQueue queue;
  const auto origin = std::chrono::steady_clock::now();
  HumanTeacherSource teacher(queue, origin);
  ReplayBuffer buffer;
  std::vector<logs::EventRecord> audit;
  auto hooks = fixed_params(params);
  hooks.before_step = [&](int step) -> std::optional<std::chrono::steady_clock::time_point> {
    if (step == 2) queue.push({feedback::HumanInput::Kind::Toggle, 0, 0, 0, 0, std::chrono::steady_clock::now()});
    if (step == 5) return std::nullopt;
    return std::chrono::steady_clock::now();
  };
  const auto out = environment_episode(env, c, teacher, buffer, 0, 5, hooks, audit);
  REQUIRE(out.log.steps.size() == 5);
  CHECK(out.log.steps[1].label == L::Good);
  CHECK(out.log.steps[2].label == L::Discarded);
  CHECK(out.log.steps[4].label == L::Discarded);
  REQUIRE(audit.size() == 1);
  CHECK(audit[0].step == 2);
  CHECK(audit[0].disposition == "applied");
  CHECK(audit[0].source == "human");
  CHECK(*audit[0].received_ms >= 0.0);
}

TEST_CASE("evaluation baselines") {
  const auto spec = sim::TaskSpec::defaults(TaskId::Reach);
  policy::PolicyConfig pc;
  const auto zero = evaluate(policy::zero_params<float>(pc), pc, spec, 100, 1);
  CHECK(zero.success_rate <= 10.0);
  const auto untrained = evaluate(policy::init_params<float>(pc, 1), pc, spec, 100, 1);
  CHECK(untrained.success_rate <= 10.0);
  const auto expert = evaluate(
      [&]() -> Controller { return [&](const sim::WorldState& s, const Observation&) { return sim::scripted_expert(spec, s); }; },
      spec, 100, 1);
  CHECK(expert.success_rate == 100.0);
  CHECK(expert.successes.size() == 100);
  CHECK(evaluate(policy::init_params<float>(pc, 1), pc, spec, 100, 1).successes == untrained.successes);
  CHECK_THROWS_AS(evaluate(policy::zero_params<float>(pc), pc, spec, 0, 1), std::invalid_argument);
}

TEST_CASE("evaluation does not touch the training buffer") {
  const auto c = small_run(methods::Method::CEILing);
  const auto r = run(c);
  const auto counts = r.buffer->counts();
  const auto size = r.buffer->size();
  evaluate(r.params, c.policy, c.task_spec, 10, 1);
  CHECK(r.buffer->size() == size);
  CHECK(r.buffer->counts() == counts);
}

TEST_CASE("run control pause, resume and stop") {
  RunControl control;
  control.set_status(RunStatus::Interactive);
  std::vector<RunStatus> published;
  control.set_frame_sink([&](const sim::SceneFrame& f) { published.push_back(f.status); });
  const auto spec = sim::TaskSpec::defaults(TaskId::Reach);
  control.publish(sim::render_frame(spec, sim::reset(spec, 1).state, {0, Toggle::Positive, RunStatus::Interactive, 0}));

  bool waited = true;
  CHECK(control.checkpoint(false, &waited));
  CHECK_FALSE(waited);

  control.pause_at_episode_end();
  CHECK(control.checkpoint(false, &waited));
  CHECK_FALSE(waited);

  std::atomic<bool> released{false};
  std::thread t([&] {
    CHECK(control.checkpoint(true, &waited));
    released = true;
  });
  while (control.status() != RunStatus::Paused) std::this_thread::yield();
  CHECK_FALSE(released.load());
  control.resume();
  t.join();
  CHECK(waited);
  CHECK(control.status() == RunStatus::Interactive);
  REQUIRE(published.size() == 2);
  CHECK(published[1] == RunStatus::Paused);

  control.pause();
  std::thread s([&] { CHECK_FALSE(control.checkpoint(false)); });
  while (control.status() != RunStatus::Paused) std::this_thread::yield();
  control.stop();
  s.join();
  CHECK_FALSE(control.sleep_for(std::chrono::seconds(10)));
}

TEST_CASE("short async run") {
  auto c = small_run(methods::Method::CEILing);
  c.mode = Mode::Async;
  c.warm_start_seconds = 0.2;
  c.control_rate_hz = 100.0;
  c.n_interactive_episodes = 2;
  c.interactive_seconds_budget = 3.0;
  RunControl control;
  const auto r = run(c, {&control, nullptr, {}});
  CHECK(control.status() == RunStatus::Done);
  CHECK(r.metrics.warm_start_updates > 0);
  CHECK(r.metrics.update_steps == r.params.version);
  CHECK(r.metrics.update_steps >= r.metrics.warm_start_updates);
  CHECK(r.metrics.env_steps > 0);
  CHECK(r.metrics.ticks.ticks == r.metrics.env_steps);
  CHECK(r.episodes.size() == 3 + r.metrics.episode_success.size());
}
