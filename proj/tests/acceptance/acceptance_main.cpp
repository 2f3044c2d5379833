// Acceptance checks. Each criterion prints one line, "PASS <name>: ..." or
// "FAIL <name>: ...". Exit status is nonzero when any selected criterion fails.
//
//   ceiling_acceptance --cli <path to ceiling> --work <dir> [criterion...]

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "ceiling/feedback.hpp"
#include "ceiling/methods.hpp"
#include "ceiling/policy.hpp"
#include "ceiling/replay_buffer.hpp"
#include "ceiling/trainer.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace ceiling;
using clock_type = std::chrono::steady_clock;

namespace {

struct Context {
  fs::path cli;
  fs::path work;
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.setf(std::ios::scientific);
  s.precision(2);
  s << v;
  return s.str();
}

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

nlohmann::json last_json_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  return nlohmann::json::parse(last);
}

// Runs the CLI binary; output goes to <out>.log.
int run_cli(const Context& ctx, const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + ctx.cli.string() + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh_dir(const Context& ctx, const std::string& name) {
  const auto dir = ctx.work / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// Gradient and loss

policy::PolicyConfig random_config(std::mt19937_64& rng, bool recurrent) {
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  policy::PolicyConfig c;
  c.recurrent = recurrent;
  c.input_dim = dim(rng);
  c.hidden = {dim(rng)};
  if (rng() % 2) c.hidden.push_back(dim(rng));
  std::uniform_real_distribution<double> u(0.3, 1.5);
  c.sigma = {u(rng), u(rng), u(rng)};
  c.input_scale.assign(c.input_dim, u(rng));
  c.input_shift.assign(c.input_dim, u(rng) - 1.0);
  c.output_scale = {u(rng), u(rng), u(rng)};
  return c;
}

Batch random_batch(const policy::PolicyConfig& c, std::mt19937_64& rng, std::size_t n_traj, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_real_distribution<double> q(0.0, 3.0);
  Batch b;
  for (std::size_t i = 0; i < n_traj; ++i) {
    auto e = testing::random_episode(len(rng), c.input_dim, rng);
    std::vector<double> w(e.transitions.size());
    for (auto& x : w) x = q(rng);
    b.push_back(testing::weighted(std::move(e), std::move(w)));
  }
  return b;
}

// Worst relative error of the analytic gradient against central differences.
// Entries where both values are below `floor` are compared absolutely.
double fd_relative_error(const policy::PolicyParams64& p, const policy::PolicyConfig& c, const Batch& batch,
                         double floor = 1e-7) {
  const auto analytic = policy::backward(p, c, batch);
  const double h = 1e-5;
  double worst = 0.0;
  auto probe = p;
  for (std::size_t i = 0; i < probe.tensors.size(); ++i)
    for (Eigen::Index k = 0; k < probe.tensors[i].size(); ++k) {
      const double orig = probe.tensors[i](k);
      probe.tensors[i](k) = orig + h;
      const double up = policy::loss(probe, c, batch);
      probe.tensors[i](k) = orig - h;
      const double down = policy::loss(probe, c, batch);
      probe.tensors[i](k) = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.tensors[i](k);
      const double scale = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / scale);
    }
  return worst;
}

Outcome gradient_fd(const Context&) {
  const auto t0 = clock_type::now();
  std::mt19937_64 rng(20240611);
  double worst = 0.0;
  int configs = 0, mlp = 0, rec = 0;
  for (int trial = 0; trial < 24; ++trial) {
    const bool recurrent = trial % 2 == 1;
    const auto c = random_config(rng, recurrent);
    const auto p = policy::init_params<double>(c, 1000 + static_cast<std::uint64_t>(trial));
    worst = std::max(worst, fd_relative_error(p, c, random_batch(c, rng, 3, 7)));
    ++configs;
    (recurrent ? rec : mlp)++;
  }
  // The shipped architecture and scales, on observation-range inputs.
  for (bool recurrent : {false, true}) {
    policy::PolicyConfig c;
    c.recurrent = recurrent;
    const auto p = policy::init_params<double>(c, 7);
    std::mt19937_64 r2(recurrent ? 2 : 1);
    std::uniform_real_distribution<double> u01(0.0, 1.0), ud(-0.01, 0.01);
    Batch b;
    for (int k = 0; k < 2; ++k) {
      Episode e;
      for (int t = 0; t < 4; ++t) {
        Transition tr;
        tr.obs.features.resize(c.input_dim);
        for (auto& f : tr.obs.features) f = u01(r2);
        tr.action = {{ud(r2), ud(r2)}, u01(r2) * 2 - 1};
        e.transitions.push_back(tr);
      }
      b.push_back(testing::weighted(std::move(e), {1.0, 0.0, 2.5, 1.0}));
    }
    worst = std::max(worst, fd_relative_error(p, c, b, 1e-4));
    ++configs;
    (recurrent ? rec : mlp)++;
  }
  const double secs = seconds_since(t0);
  const bool pass = worst <= 1e-4 && secs < 60.0 && mlp > 0 && rec > 0;
  return {pass, std::to_string(configs) + " configs (" + std::to_string(mlp) + " mlp, " + std::to_string(rec) +
                    " recurrent), worst relative error " + sci(worst) + " (limit 1e-04), " + fmt(secs, 1) +
                    " s (limit 60 s)"};
}

Outcome loss_identities(const Context&) {
  std::mt19937_64 rng(77);
  bool q0 = true, linear = true;
  double worst_linear = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = random_config(rng, trial % 2 == 0);
    const auto p = policy::init_params<double>(c, 50 + static_cast<std::uint64_t>(trial));
    auto b = random_batch(c, rng, 3, 6);
    auto zero = b;
    for (auto& t : zero) std::fill(t.weights.begin(), t.weights.end(), 0.0);
    const auto lz = policy::loss_and_gradient(p, c, zero);
    q0 = q0 && lz.loss == 0.0;
    for (const auto& g : lz.gradients.tensors) q0 = q0 && g.isZero(0.0);

    const double k = 0.5 + trial * 0.37;
    auto scaled = b;
    for (auto& t : scaled)
      for (auto& w : t.weights) w *= k;
    const auto base = policy::loss_and_gradient(p, c, b);
    const auto big = policy::loss_and_gradient(p, c, scaled);
    worst_linear = std::max(worst_linear, std::abs(big.loss - k * base.loss) / std::abs(k * base.loss));
    for (std::size_t i = 0; i < base.gradients.tensors.size(); ++i) {
      const double n = (k * base.gradients.tensors[i]).norm();
      if (n > 0) worst_linear = std::max(worst_linear, (big.gradients.tensors[i] - k * base.gradients.tensors[i]).norm() / n);
    }
  }
  linear = worst_linear <= 1e-12;

  policy::PolicyConfig c;
  c.recurrent = false;
  c.sigma = {1.0, 1.0, 1.0};
  const auto p = policy::zero_params<double>(c);
  Episode e;
  for (int t = 0; t < 5; ++t) {
    Transition tr;
    tr.obs.features.assign(c.input_dim, 0.3 * t);
    tr.action = {{0.0, 0.0}, 0.0};
    e.transitions.push_back(tr);
  }
  const Batch at_mean{testing::weighted(e, std::vector<double>(5, 1.0))};
  const double closed = 3.0 * 0.5 * std::log(2.0 * std::numbers::pi);
  const double err = std::abs(policy::loss(p, c, at_mean) - closed);
  const bool pass = q0 && linear && err <= 1e-9;
  return {pass, std::string("q=0 zero loss and gradient: ") + (q0 ? "yes" : "no") + "; linear in q, worst rel " +
                    sci(worst_linear) + "; loss at mean " + sci(err) + " from 3*ln(2*pi)/2 (limit 1e-09)"};
}

// ---------------------------------------------------------------------------
// Labeler and alpha

std::vector<FeedbackLabel> label_run(const std::vector<std::vector<feedback::FeedbackEvent>>& steps) {
  feedback::LabelerState s;
  std::vector<FeedbackLabel> out;
  for (const auto& ev : steps) {
    const auto r = feedback::apply_feedback(s, Action{}, ev);
    out.push_back(r.label);
    s = r.next;
  }
  return out;
}

Outcome labeler(const Context&) {
  using L = FeedbackLabel;
  using feedback::FeedbackEvent;
  const std::vector<FeedbackEvent> none;
  const std::vector T{FeedbackEvent::toggle(0)};
  const std::vector C{FeedbackEvent::correction(0, {0.004, -0.002})};
  const auto labels = label_run({none, none, none, T, none, none, T, C});
  const std::vector expected{L::Good, L::Good, L::Good, L::Discarded, L::Discarded, L::Discarded, L::Good, L::Corrected};
  const bool example = labels == expected;

  std::string got;
  for (auto l : labels) got += static_cast<char>(std::toupper(to_string(l)[0]));

  std::mt19937_64 rng(5150);
  std::bernoulli_distribution p_toggle(0.1), p_correct(0.15);
  std::uniform_real_distribution<double> u(-0.02, 0.02);
  int violations = 0, streams = 0;
  for (; streams < 1000; ++streams) {
    feedback::LabelerState s;
    Toggle toggle = Toggle::Positive;
    for (int step = 0; step < 80; ++step) {
      std::vector<FeedbackEvent> ev;
      if (p_toggle(rng)) {
        ev.push_back(FeedbackEvent::toggle(step));
        toggle = toggle == Toggle::Positive ? Toggle::Negative : Toggle::Positive;
      }
      const bool correct = p_correct(rng);
      if (correct) ev.push_back(FeedbackEvent::correction(step, {u(rng), u(rng)}));
      const auto r = feedback::apply_feedback(s, Action{{u(rng) / 2, u(rng) / 2}, -1.0}, ev);
      const L want = correct ? L::Corrected : toggle == Toggle::Positive ? L::Good : L::Discarded;
      if (r.label != want || r.next.toggle != toggle) ++violations;
      s = r.next;
    }
  }
  return {example && violations == 0, "walkthrough labels " + got + " (expected GGGDDDGC); " +
                                           std::to_string(streams) + " random streams, " +
                                           std::to_string(violations) + " persistence violations"};
}

Outcome alpha_rule(const Context&) {
  using L = FeedbackLabel;
  const double a9 = alpha_from_counts({90, 7, 10});
  ReplayBuffer b;
  std::vector<L> labels(90, L::Good);
  labels.insert(labels.end(), 10, L::Corrected);
  b.append_episode(testing::episode_with_labels(labels));
  bool weight9 = true;
  for (const auto& w : b.all_weighted())
    for (std::size_t i = 0; i < w.weights.size(); ++i)
      if (w.episode->transitions[i].label == L::Corrected) weight9 = weight9 && w.weights[i] == 9.0;
  const double a1 = alpha_from_counts({40, 3, 0});

  // Growth: appending Good steps raises the weight of earlier Corrected steps.
  b.append_episode(testing::episode_with_labels(std::vector<L>(30, L::Good)));
  std::mt19937_64 rng(1);
  bool tracks = true;
  for (int k = 0; k < 20; ++k)
    for (const auto& w : b.sample_batch(2, rng))
      for (std::size_t i = 0; i < w.weights.size(); ++i)
        if (w.episode->transitions[i].label == L::Corrected) tracks = tracks && w.weights[i] == 12.0;

  const bool pass = a9 == 9.0 && weight9 && a1 == 1.0 && tracks;
  return {pass, "(90,7,10) -> " + fmt(a9, 1) + ", sampled corrected weight 9: " + (weight9 ? "yes" : "no") +
                    "; n_corrected=0 -> " + fmt(a1, 1) + "; after +30 good steps weight 12: " +
                    (tracks ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// Method equivalences

// Scripted teacher with its correction events removed.
class NeverCorrecting : public trainer::Teacher {
 public:
  NeverCorrecting(feedback::TeacherConfig config, std::uint64_t seed) : teacher_(config, seed) {}
  void begin_episode(int) override { teacher_.begin_episode(); }
  std::vector<feedback::FeedbackEvent> events(int, int step, const sim::TaskSpec& spec, const sim::WorldState& state,
                                              const Action& policy_action, clock_type::time_point,
                                              std::vector<logs::EventRecord>&) override {
    auto ev = teacher_.teach(policy_action, sim::scripted_expert(spec, state), step);
    std::erase_if(ev, [](const auto& e) { return e.kind == feedback::EventKind::Correction; });
    return ev;
  }

 private:
  feedback::ScriptedTeacher teacher_;
};

struct Trace {
  trainer::RunResult result;
  std::vector<trainer::UpdateRecord> updates;
};

Trace traced_run(const trainer::TrainConfig& c, trainer::Teacher* teacher = nullptr) {
  Trace t;
  trainer::RunHooks hooks;
  hooks.teacher = teacher;
  hooks.on_update = [&](const trainer::UpdateRecord& u) { t.updates.push_back(u); };
  t.result = trainer::run(c, hooks);
  return t;
}

trainer::TrainConfig equivalence_config(methods::Method m) {
  trainer::TrainConfig c;
  c.method = methods::MethodSpec::of(m);
  c.n_demos = 3;
  c.n_interactive_episodes = 6;
  c.warm_start_updates = 30;
  c.seeds = trainer::Seeds::from_master(11);
  return c;
}

bool same_buffers(const ReplayBuffer& a, const ReplayBuffer& b) {
  const auto ea = a.episodes(), eb = b.episodes();
  if (ea.size() != eb.size()) return false;
  for (std::size_t i = 0; i < ea.size(); ++i)
    if (!(*ea[i] == *eb[i])) return false;
  return true;
}

bool same_updates(const std::vector<trainer::UpdateRecord>& a, const std::vector<trainer::UpdateRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].version != b[i].version || a[i].loss != b[i].loss) return false;
    if (a[i].gradients.tensors.size() != b[i].gradients.tensors.size()) return false;
    for (std::size_t k = 0; k < a[i].gradients.tensors.size(); ++k)
      if (a[i].gradients.tensors[k] != b[i].gradients.tensors[k]) return false;
  }
  return true;
}

bool same_params(const policy::PolicyParams& a, const policy::PolicyParams& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t k = 0; k < a.tensors.size(); ++k)
    if (a.tensors[k] != b.tensors[k]) return false;
  return true;
}

Outcome equivalence_a(const Context&) {
  auto c = equivalence_config(methods::Method::CEILing);
  c.teacher.uncorrectable_bound = std::numeric_limits<double>::infinity();
  auto iwr = c;
  iwr.method = methods::MethodSpec::of(methods::Method::IWR);
  const auto x = traced_run(c), y = traced_run(iwr);
  const auto counts = x.result.buffer->counts();
  const bool buffers = same_buffers(*x.result.buffer, *y.result.buffer);
  const bool grads = same_updates(x.updates, y.updates);
  const bool params = same_params(x.result.params, y.result.params);
  const bool pass = buffers && grads && params && counts.corrected > 0 && counts.discarded == 0;
  return {pass, "never-negative teacher: buffers identical " + std::string(buffers ? "yes" : "no") +
                    ", per-batch gradients identical " + (grads ? "yes" : "no") + " over " +
                    std::to_string(x.updates.size()) + " updates, final params identical " +
                    (params ? "yes" : "no") + "; stored G/D/C " + std::to_string(counts.good) + "/" +
                    std::to_string(counts.discarded) + "/" + std::to_string(counts.corrected)};
}

Outcome equivalence_b(const Context&) {
  // A teacher that corrects every interactive step: CEILing stores only Corrected
  // interactive steps, which is exactly what HG-DAgger keeps.
  auto c = equivalence_config(methods::Method::CEILing);
  c.teacher.correction_threshold = -1.0;
  c.teacher.miss_probability = 0.0;
  c.teacher.latency_steps = 0;
  c.teacher.uncorrectable_bound = std::numeric_limits<double>::infinity();
  auto hg = c;
  hg.method = methods::MethodSpec::of(methods::Method::HGDagger);
  const auto x = traced_run(c), y = traced_run(hg);
  bool only_corrected = true;
  for (const auto& e : x.result.buffer->episodes())
    if (e->source == EpisodeSource::Interactive)
      for (const auto& t : e->transitions) only_corrected = only_corrected && t.label == FeedbackLabel::Corrected;
  const bool buffers = same_buffers(*x.result.buffer, *y.result.buffer);
  const bool grads = same_updates(x.updates, y.updates);
  const bool pass = only_corrected && buffers && grads && same_params(x.result.params, y.result.params);
  return {pass, "all interactive steps corrected: " + std::string(only_corrected ? "yes" : "no") +
                    "; stored sets identical " + (buffers ? "yes" : "no") + "; per-batch gradients identical " +
                    (grads ? "yes" : "no") + " over " + std::to_string(x.updates.size()) + " updates"};
}

Outcome equivalence_c(const Context&) {
  // Evaluative drops Discarded steps and splits the episode; CEILing keeps them at
  // q=0. Gradients agree when every stored step is used once (full buffer, summed)
  // and the network carries no state across the split.
  auto c = equivalence_config(methods::Method::CEILing);
  c.policy.recurrent = false;
  c.batch_source = trainer::BatchSource::FullBuffer;
  c.reduction = policy::Reduction::Sum;
  c.teacher.uncorrectable_bound = 0.004;
  auto ev = c;
  ev.method = methods::MethodSpec::of(methods::Method::Evaluative);
  NeverCorrecting t1(c.teacher, c.seeds.teacher), t2(c.teacher, c.seeds.teacher);
  const auto x = traced_run(c, &t1), y = traced_run(ev, &t2);
  const auto cx = x.result.buffer->counts(), cy = y.result.buffer->counts();
  const bool grads = same_updates(x.updates, y.updates);
  const bool params = same_params(x.result.params, y.result.params);
  const bool buffers_differ = cx.discarded > 0 && cy.discarded == 0 && cx.good == cy.good && cx.corrected == 0;
  return {grads && params && buffers_differ,
          "never-correcting teacher: per-batch gradients identical " + std::string(grads ? "yes" : "no") + " over " +
              std::to_string(x.updates.size()) + " updates, final params identical " + (params ? "yes" : "no") +
              "; CEILing keeps " + std::to_string(cx.discarded) + " zero-weight steps that Evaluative drops"};
}

// ---------------------------------------------------------------------------
// End-to-end runs through the CLI

Outcome determinism(const Context& ctx) {
  const auto a = fresh_dir(ctx, "determinism_a"), b = fresh_dir(ctx, "determinism_b");
  const std::string args = "train --task reach --method ceiling --seed 7 --mode lockstep --out ";
  const int ra = run_cli(ctx, args + "\"" + a.string() + "\"", a.string() + ".log");
  const int rb = run_cli(ctx, args + "\"" + b.string() + "\"", b.string() + ".log");
  if (ra != 0 || rb != 0) return {false, "train exited with " + std::to_string(ra) + "/" + std::to_string(rb)};
  std::string mismatched;
  for (const char* f : {"checkpoint.ceil", "episodes.jsonl", "events.jsonl", "metrics.json", "config.json"})
    if (slurp(a / f) != slurp(b / f) || slurp(a / f).empty()) mismatched += std::string(" ") + f;
  const auto ck = slurp(a / "checkpoint.ceil");
  return {mismatched.empty(), mismatched.empty()
                                  ? "checkpoint (" + std::to_string(ck.size()) +
                                        " bytes), episode and event logs, metrics and config byte-identical"
                                  : "differs:" + mismatched};
}

Outcome desk_scale(const Context& ctx) {
  const auto dir = fresh_dir(ctx, "desk_scale");
  const auto t0 = clock_type::now();
  const int rc = run_cli(ctx, "train --task reach --method ceiling --seed 1 --eval-episodes 100 --out \"" +
                                  (dir / "ceiling").string() + "\"",
                         dir / "ceiling.log");
  const double minutes = seconds_since(t0) / 60.0;
  const int rb = run_cli(ctx, "train --task reach --method bc --demos 10 --seed 1 --eval-episodes 100 --out \"" +
                                  (dir / "bc").string() + "\"",
                         dir / "bc.log");
  if (rc != 0 || rb != 0) return {false, "train exited with " + std::to_string(rc) + "/" + std::to_string(rb)};
  const auto m = read_json(dir / "ceiling" / "metrics.json");
  const double ceiling_rate = last_json_line(dir / "ceiling" / "eval.jsonl")["success_rate"].get<double>();
  const double bc_rate = last_json_line(dir / "bc" / "eval.jsonl")["success_rate"].get<double>();
  const bool setup = m["demos"] == 10 && m["episodes"] == 100 && m["mode"] == "lockstep";
  const bool pass = setup && ceiling_rate >= 90.0 && bc_rate <= ceiling_rate - 10.0 && minutes <= 15.0;
  return {pass, "reach seed 1: CEILing " + fmt(ceiling_rate, 1) + "% (need >= 90), BC " + fmt(bc_rate, 1) +
                    "% (need <= " + fmt(ceiling_rate - 10.0, 1) + "), CEILing run " + fmt(minutes, 2) +
                    " min (limit 15), correction rate " + fmt(m["correction_rate"].get<double>(), 1) + "%"};
}

Outcome method_ordering(const Context& ctx) {
  const auto dir = fresh_dir(ctx, "method_ordering");
  const auto t0 = clock_type::now();
  const int rc = run_cli(ctx,
                         "benchmark --tasks reach,pushbox --methods ceiling,iwr,hg-dagger,evaluative,bc "
                         "--seeds 1,2,3,4,5 --eval-episodes 100 --out \"" +
                             dir.string() + "\"",
                         dir / "benchmark.log");
  const double hours = seconds_since(t0) / 3600.0;
  if (rc != 0) return {false, "benchmark exited with " + std::to_string(rc)};
  const auto report = read_json(dir / "report.json");
  std::map<std::string, std::map<std::string, double>> mean;
  int failed = 0;
  for (const auto& a : report["aggregates"]) {
    mean[a["task"]][a["method"]] = a["success_rate"]["mean"].get<double>();
    failed += a["failed"].get<int>();
  }
  const std::vector<std::string> order{"ceiling", "iwr", "hg-dagger", "evaluative"};
  bool pass = failed == 0 && hours <= 2.0;
  std::string detail;
  for (const char* task : {"reach", "pushbox"}) {
    detail += std::string(detail.empty() ? "" : "; ") + task;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const double v = mean[task][order[i]];
      detail += (i ? " >= " : " ") + order[i] + " " + fmt(v, 1);
      if (i > 0 && mean[task][order[i - 1]] < v) pass = false;
    }
  }
  return {pass, detail + "; " + std::to_string(failed) + " failed runs; " + fmt(hours * 60.0, 1) +
                    " min (limit 120)"};
}

Outcome async_liveness(const Context&) {
  trainer::TrainConfig c;
  c.mode = trainer::Mode::Async;
  c.update_delay = std::chrono::milliseconds(10);
  c.warm_start_seconds = 5.0;
  c.interactive_seconds_budget = 60.0;
  c.n_interactive_episodes = 1000;
  c.control_rate_hz = 20.0;
  c.seeds = trainer::Seeds::from_master(3);
  const auto r = trainer::run(c);
  const auto& m = r.metrics;
  const std::uint64_t interactive_updates = m.update_steps - m.warm_start_updates;
  const bool pass = m.ticks.p99_ms < 10.0 && interactive_updates > m.env_steps && m.env_steps >= 1000;
  return {pass, "20 Hz with 10 ms per update: " + std::to_string(m.ticks.ticks) + " ticks, lateness p50 " +
                    fmt(m.ticks.p50_ms, 2) + " ms, p99 " + fmt(m.ticks.p99_ms, 2) + " ms (limit 10), max " +
                    fmt(m.ticks.max_ms, 2) + " ms; " + std::to_string(interactive_updates) +
                    " updates vs " + std::to_string(m.env_steps) + " env steps"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> criteria{
      {"gradient-fd", gradient_fd},
      {"loss-identities", loss_identities},
      {"labeler", labeler},
      {"alpha", alpha_rule},
      {"equivalence-a-iwr", equivalence_a},
      {"equivalence-b-hg-dagger", equivalence_b},
      {"equivalence-c-evaluative", equivalence_c},
      {"determinism", determinism},
      {"desk-scale-learning", desk_scale},
      {"method-ordering", method_ordering},
      {"async-liveness", async_liveness},
  };

  CLI::App app{"CEILing acceptance checks"};
  Context ctx;
  std::vector<std::string> selected;
  app.add_option("--cli", ctx.cli, "Path to the ceiling executable");
  app.add_option("--work", ctx.work, "Scratch directory")->default_val(fs::temp_directory_path() / "ceiling_acceptance");
  app.add_option("criteria", selected, "Criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  if (selected.empty())
    for (const auto& [name, _] : criteria) selected.push_back(name);
  fs::create_directories(ctx.work);

  int failures = 0;
  for (const auto& name : selected) {
    const auto it = std::find_if(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; });
    if (it == criteria.end()) {
      std::cerr << "unknown criterion: " << name << '\n';
      return 2;
    }
    Outcome o;
    try {
      o = it->second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
