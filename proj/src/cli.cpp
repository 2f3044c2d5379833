#include "ceiling/cli.hpp"

#include <pthread.h>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "ceiling/checkpoint.hpp"
#include "ceiling/gateway.hpp"
#include "ceiling/report.hpp"
#include "ceiling/trainer.hpp"

namespace ceiling::cli {
namespace {

namespace fs = std::filesystem;

const std::vector<std::string> kTasks{"reach", "pushbox", "pickupcube"};
const std::vector<std::string> kMethods{"bc", "evaluative", "hg-dagger", "iwr", "ceiling"};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

fs::path output_dir(const std::string& flag) {
  if (const char* env = std::getenv("CEILING_OUT"); env && *env) return env;
  return flag;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void append_json_line(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file " + path.string() + ": " + e.what());
  }
}

// Shared train/benchmark knobs. Unset optionals keep the config (file) values.
struct RunFlags {
  std::optional<int> episodes;
  std::optional<int> demos;
  std::optional<int> warm_start_updates;
  std::optional<double> warm_start_seconds;
  std::optional<int> updates_per_step;
  std::optional<double> control_rate;
  std::string config_file;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--episodes", episodes, "Interactive episodes (default 100)")->check(CLI::NonNegativeNumber);
    cmd.add_option("--demos", demos, "Expert demonstrations for the warm start (default 10)")
        ->check(CLI::PositiveNumber);
    cmd.add_option("--warm-start-updates", warm_start_updates, "Lockstep warm-start updates; BC budget (default 1000)")
        ->check(CLI::NonNegativeNumber);
    cmd.add_option("--warm-start-seconds", warm_start_seconds, "Async warm-start duration (default 120)")
        ->check(CLI::NonNegativeNumber);
    cmd.add_option("--updates-per-step", updates_per_step, "Lockstep updates per environment step (default 1)")
        ->check(CLI::NonNegativeNumber);
    cmd.add_option("--rate", control_rate, "Control rate in Hz (default 20)")->check(CLI::PositiveNumber);
    cmd.add_option("--config", config_file, "JSON training config; flags take precedence");
  }

  trainer::TrainConfig base() const {
    trainer::TrainConfig c;
    if (!config_file.empty()) {
      try {
        c = trainer::config_from_json(read_json(config_file));
      } catch (const UsageError&) {
        throw;
      } catch (const std::exception& e) {
        throw UsageError("config file " + config_file + ": " + e.what());
      }
    }
    return c;
  }

  void apply(trainer::TrainConfig& c) const {
    if (episodes) c.n_interactive_episodes = *episodes;
    if (demos) c.n_demos = *demos;
    if (warm_start_updates) c.warm_start_updates = *warm_start_updates;
    if (warm_start_seconds) c.warm_start_seconds = *warm_start_seconds;
    if (updates_per_step) c.updates_per_env_step = *updates_per_step;
    if (control_rate) c.control_rate_hz = *control_rate;
  }
};

void set_task(trainer::TrainConfig& c, const std::string& task) {
  const auto id = parse_task(task);
  if (id != c.task_spec.task) c.task_spec = sim::TaskSpec::defaults(id);
}

nlohmann::json metrics_json(const trainer::TrainConfig& c, const trainer::RunMetrics& m, const std::string& teacher) {
  std::size_t successes = 0;
  for (bool s : m.episode_success) successes += s ? 1 : 0;
  nlohmann::json j = {
      {"task", std::string(to_string(c.task_spec.task))},
      {"method", std::string(methods::to_string(c.method.method))},
      {"teacher", teacher},
      {"mode", std::string(trainer::to_string(c.mode))},
      {"seeds", {{"env", c.seeds.env}, {"policy", c.seeds.policy}, {"teacher", c.seeds.teacher}}},
      {"demos", c.n_demos},
      {"episodes", m.episode_success.size()},
      {"update_steps", m.update_steps},
      {"warm_start_updates", m.warm_start_updates},
      {"env_steps", m.env_steps},
      {"duration_seconds", m.duration_seconds},
      {"duration_minutes", m.duration_seconds / 60.0},
      {"correction_rate", m.correction_rate},
      {"negative_rate", m.negative_rate},
      {"training_success_rate",
       m.episode_success.empty() ? 0.0 : 100.0 * static_cast<double>(successes) / m.episode_success.size()},
      {"episode_success", m.episode_success},
      {"stored_episodes", m.stored_episodes},
      {"aborted_episodes", m.aborted_episodes}};
  if (c.mode == trainer::Mode::Async)
    j["tick_lateness_ms"] = {
        {"ticks", m.ticks.ticks}, {"p50", m.ticks.p50_ms}, {"p99", m.ticks.p99_ms}, {"max", m.ticks.max_ms}};
  return j;
}

nlohmann::json eval_json(const std::string& checkpoint, TaskId task, int episodes, std::uint64_t seed,
                         const trainer::EvalResult& r) {
  std::size_t successes = 0;
  for (bool s : r.successes) successes += s ? 1 : 0;
  return {{"checkpoint", checkpoint},    {"task", std::string(to_string(task))},
          {"episodes", episodes},        {"seed", seed},
          {"success_rate", r.success_rate}, {"successes", successes}};
}

void write_artifacts(const fs::path& dir, const trainer::TrainConfig& c, const trainer::RunResult& r,
                     const std::string& teacher) {
  fs::create_directories(dir);
  policy::SaveOptions options;
  options.task = c.task_spec.task;
  policy::save_checkpoint(r.params, c.policy, dir / "checkpoint.ceil", options);
  logs::write_episode_log(dir / "episodes.jsonl", r.episodes);
  logs::write_event_log(dir / "events.jsonl", r.events);
  write_json(dir / "config.json", trainer::to_json(c));
  write_json(dir / "metrics.json", metrics_json(c, r.metrics, teacher));
}

// Routes SIGINT/SIGTERM to RunControl::stop while a run is in progress.
class StopOnSignal {
 public:
  explicit StopOnSignal(trainer::RunControl& control) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, &old_);
    watcher_ = std::thread([this, set, &control] {
      const timespec poll{0, 100'000'000};
      while (!done_.load()) {
        if (sigtimedwait(&set, nullptr, &poll) > 0) {
          std::cerr << "stopping after the current step\n";
          control.stop();
        }
      }
    });
  }
  ~StopOnSignal() {
    done_ = true;
    watcher_.join();
    pthread_sigmask(SIG_SETMASK, &old_, nullptr);
  }

 private:
  sigset_t old_;
  std::atomic<bool> done_{false};
  std::thread watcher_;
};

struct TrainFlags {
  std::string task = "reach";
  std::string method = "ceiling";
  std::string teacher = "scripted";
  std::optional<std::string> mode;
  std::uint64_t seed = 0;
  std::string out = "ceiling-run";
  int eval_episodes = 0;
  std::string host = "127.0.0.1";
  unsigned short port = 8765;
  RunFlags run;
};

int cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  if (f.teacher == "human" && f.mode && *f.mode == "lockstep")
    throw UsageError("--teacher human requires --mode async (a human cannot teach in lockstep)");
  auto c = f.run.base();
  set_task(c, f.task);
  c.method = methods::MethodSpec::of(methods::parse_method(f.method));
  c.seeds = trainer::Seeds::from_master(f.seed);
  c.mode = f.teacher == "human" ? trainer::Mode::Async
                                : (f.mode ? trainer::parse_mode(*f.mode) : trainer::Mode::Lockstep);
  f.run.apply(c);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto dir = output_dir(f.out);

  trainer::RunControl control;
  feedback::HumanEventQueue queue;
  std::optional<gateway::Gateway> gw;
  std::optional<trainer::HumanTeacherSource> human;
  trainer::RunHooks hooks;
  hooks.control = &control;
  if (f.teacher == "human") {
    gw.emplace(control, queue, gateway::GatewayOptions{f.host, f.port});
    gw->start();
    control.set_frame_sink([&](const sim::SceneFrame& frame) { gw->publish(frame); });
    gw->hold_until_teacher();
    human.emplace(queue, std::chrono::steady_clock::now());
    hooks.teacher = &*human;
    err << "teaching gateway on ws://" << f.host << ':' << gw->port() << '\n';
  }

  trainer::RunResult result;
  {
    std::optional<StopOnSignal> guard;
    if (c.mode == trainer::Mode::Async) guard.emplace(control);
    result = trainer::run(c, hooks);
  }
  write_artifacts(dir, c, result, f.teacher);

  std::string eval_part;
  if (f.eval_episodes > 0) {
    const auto r = trainer::evaluate(result.params, c.policy, c.task_spec, f.eval_episodes, f.seed);
    append_json_line(dir / "eval.jsonl", eval_json("checkpoint.ceil", c.task_spec.task, f.eval_episodes, f.seed, r));
    eval_part = " success_rate=" + fixed(r.success_rate, 1);
  }
  if (gw) gw->stop();

  const auto& m = result.metrics;
  out << "train task=" << to_string(c.task_spec.task) << " method=" << methods::to_string(c.method.method)
      << " seed=" << f.seed << " mode=" << trainer::to_string(c.mode) << " episodes=" << m.episode_success.size()
      << " update_steps=" << m.update_steps << " duration_min=" << fixed(m.duration_seconds / 60.0, 2)
      << " correction_rate=" << fixed(m.correction_rate, 1) << " negative_rate=" << fixed(m.negative_rate, 1)
      << eval_part << " out=" << dir.string() << '\n';
  return kExitOk;
}

struct EvalFlags {
  std::string checkpoint;
  int episodes = 100;
  std::uint64_t seed = 0;
  std::optional<std::string> task;
  std::optional<std::string> out;
};

int cmd_eval(const EvalFlags& f, std::ostream& out, std::ostream&) {
  if (f.episodes < 1) throw UsageError("--episodes must be at least 1");
  const auto ckpt = policy::load_checkpoint(f.checkpoint);
  TaskId task;
  if (f.task)
    task = parse_task(*f.task);
  else if (ckpt.task)
    task = *ckpt.task;
  else
    throw UsageError("checkpoint does not record its task; pass --task");
  auto spec = sim::TaskSpec::defaults(task);
  spec.delta_max = ckpt.config.delta_max;
  const auto r = trainer::evaluate(ckpt.params, ckpt.config, spec, f.episodes, f.seed);

  const char* env = std::getenv("CEILING_OUT");
  const fs::path dir = env && *env ? fs::path(env) : f.out ? fs::path(*f.out) : fs::path(f.checkpoint).parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  append_json_line(dir / "eval.jsonl", eval_json(fs::path(f.checkpoint).filename().string(), task, f.episodes, f.seed, r));
  out << "eval task=" << to_string(task) << " episodes=" << f.episodes << " seed=" << f.seed
      << " success_rate=" << fixed(r.success_rate, 1) << '\n';
  return kExitOk;
}

struct BenchmarkFlags {
  std::vector<std::string> tasks{"reach"};
  std::vector<std::string> methods{kMethods};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int eval_episodes = 100;
  std::string out = "ceiling-benchmark";
  bool save_runs = false;
  RunFlags run;
};

int cmd_benchmark(const BenchmarkFlags& f, std::ostream& out, std::ostream& err) {
  const auto base = f.run.base();
  std::vector<trainer::TrainConfig> cells;
  for (const auto& task : f.tasks)
    for (const auto& method : f.methods)
      for (auto seed : f.seeds) {
        auto c = base;
        set_task(c, task);
        c.method = methods::MethodSpec::of(methods::parse_method(method));
        c.seeds = trainer::Seeds::from_master(seed);
        c.mode = trainer::Mode::Lockstep;
        f.run.apply(c);
        try {
          c.validate();
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
        cells.push_back(c);
      }

  const auto dir = output_dir(f.out);
  fs::create_directories(dir);
  std::vector<report::RunRow> rows;
  std::size_t index = 0;
  for (const auto& task : f.tasks)
    for (const auto& method : f.methods)
      for (auto seed : f.seeds) {
        const auto& c = cells[index++];
        report::RunRow row;
        row.task = task;
        row.method = method;
        row.seed = seed;
        try {
          const auto r = trainer::run(c);
          const auto e = trainer::evaluate(r.params, c.policy, c.task_spec, f.eval_episodes, seed);
          if (f.save_runs) write_artifacts(dir / "runs" / (task + "-" + method + "-" + std::to_string(seed)), c, r,
                                           "scripted");
          row.success_rate = e.success_rate;
          row.update_steps = static_cast<double>(r.metrics.update_steps);
          row.duration_minutes = r.metrics.duration_seconds / 60.0;
          row.correction_rate = r.metrics.correction_rate;
          row.negative_rate = r.metrics.negative_rate;
          err << "[" << index << "/" << cells.size() << "] " << task << ' ' << method << " seed=" << seed
              << " success_rate=" << fixed(row.success_rate, 1) << '\n';
        } catch (const std::exception& e) {
          row.error = e.what();
          err << "[" << index << "/" << cells.size() << "] " << task << ' ' << method << " seed=" << seed
              << " failed: " << e.what() << '\n';
        }
        rows.push_back(std::move(row));
      }

  const auto rep = report::aggregate(std::move(rows));
  {
    std::ofstream csv(dir / "report.csv", std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + (dir / "report.csv").string());
    report::write_csv(csv, rep);
  }
  write_json(dir / "report.json", report::to_json(rep));
  report::print_table(out, rep);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interactive policy learning from corrective and evaluative feedback"};
  app.name(args.empty() ? "ceiling" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  TrainFlags train;
  auto* t = app.add_subcommand("train", "Train a policy and write checkpoint, logs and metrics");
  t->add_option("--task", train.task, "Task")->check(CLI::IsMember(kTasks));
  t->add_option("--method", train.method, "Learning method")->check(CLI::IsMember(kMethods));
  t->add_option("--teacher", train.teacher, "Feedback source")->check(CLI::IsMember({"scripted", "human"}));
  t->add_option("--mode", train.mode, "Scheduling (default lockstep; human forces async)")
      ->check(CLI::IsMember({"async", "lockstep"}));
  t->add_option("--seed", train.seed, "Master seed");
  t->add_option("--out", train.out, "Output directory (CEILING_OUT overrides)");
  t->add_option("--eval-episodes", train.eval_episodes, "Evaluate after training")->check(CLI::NonNegativeNumber);
  t->add_option("--host", train.host, "Gateway address (human teacher)");
  t->add_option("--port", train.port, "Gateway port (human teacher)");
  train.run.add_to(*t);

  EvalFlags eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint with mean actions");
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  e->add_option("--episodes", eval.episodes, "Evaluation episodes");
  e->add_option("--seed", eval.seed, "Evaluation seed");
  e->add_option("--task", eval.task, "Task (defaults to the checkpoint's)")->check(CLI::IsMember(kTasks));
  e->add_option("--out", eval.out, "Directory for eval.jsonl (default: next to the checkpoint)");

  BenchmarkFlags bench;
  auto* b = app.add_subcommand("benchmark", "Lockstep factorial over tasks, methods and seeds");
  b->add_option("--tasks", bench.tasks, "Tasks")->delimiter(',')->check(CLI::IsMember(kTasks));
  b->add_option("--methods", bench.methods, "Methods")->delimiter(',')->check(CLI::IsMember(kMethods));
  b->add_option("--seeds", bench.seeds, "Master seeds")->delimiter(',');
  b->add_option("--eval-episodes", bench.eval_episodes, "Evaluation episodes per run")->check(CLI::PositiveNumber);
  b->add_option("--out", bench.out, "Output directory (CEILING_OUT overrides)");
  b->add_flag("--save-runs", bench.save_runs, "Also write every run's artifacts");
  bench.run.add_to(*b);

  std::vector<std::string> argv(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(argv.begin(), argv.end());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::ParseError& ex) {
    err << app.get_name() << ": " << ex.what() << "\n" << "run '" << app.get_name() << " --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (t->parsed()) return cmd_train(train, out, err);
    if (e->parsed()) return cmd_eval(eval, out, err);
    return cmd_benchmark(bench, out, err);
  } catch (const UsageError& ex) {
    err << app.get_name() << ": " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << app.get_name() << ": " << ex.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace ceiling::cli
