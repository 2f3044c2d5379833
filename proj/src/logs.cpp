#include "ceiling/logs.hpp"

#include <fstream>
#include <sstream>

namespace ceiling::logs {

Episode LoggedEpisode::labeled() const {
  Episode e;
  e.task = task;
  e.seed = seed;
  e.source = source;
  e.success = success;
  for (const auto& s : steps) e.transitions.push_back({s.obs, s.action, s.label});
  return e;
}

nlohmann::json step_to_json(const LoggedEpisode& e, const LoggedStep& s, bool last) {
  nlohmann::json j = {{"episode_id", e.episode_id},
                      {"source", std::string(to_string(e.source))},
                      {"task", std::string(to_string(e.task))},
                      {"seed", e.seed},
                      {"step", s.step},
                      {"obs", s.obs.features},
                      {"action", s.action.as_array()},
                      {"label", std::string(to_string(s.label))},
                      {"toggle_state", std::string(to_string(s.toggle_state))},
                      {"disposition", std::string(methods::to_string(s.disposition))}};
  if (s.correction_delta) j["correction_delta"] = *s.correction_delta;
  if (s.gripper_override) j["gripper_override"] = *s.gripper_override;
  if (last) j["success"] = e.success;
  return j;
}

void write_episode_log(std::ostream& out, const std::vector<LoggedEpisode>& episodes) {
  for (const auto& e : episodes)
    for (std::size_t i = 0; i < e.steps.size(); ++i)
      out << step_to_json(e, e.steps[i], i + 1 == e.steps.size()).dump() << '\n';
}

void write_episode_log(const std::filesystem::path& path, const std::vector<LoggedEpisode>& episodes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_episode_log(out, episodes);
}

std::vector<LoggedEpisode> read_episode_log(std::istream& in) {
  std::vector<LoggedEpisode> out;
  std::string line;
  std::size_t n = 0;
  bool closed = true;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const int id = j.at("episode_id").get<int>();
      if (closed || out.back().episode_id != id) {
        if (!closed) throw std::invalid_argument("episode " + std::to_string(out.back().episode_id) +
                                                 " ends without a success field");
        LoggedEpisode e;
        e.episode_id = id;
        e.source = parse_source(j.at("source").get<std::string>());
        e.task = parse_task(j.at("task").get<std::string>());
        e.seed = j.at("seed").get<std::uint64_t>();
        out.push_back(std::move(e));
        closed = false;
      }
      auto& e = out.back();
      LoggedStep s;
      s.step = j.at("step").get<int>();
      s.obs = {e.task, j.at("obs").get<std::vector<double>>()};
      s.action = Action::from_array(j.at("action").get<std::array<double, kActionDim>>());
      s.label = parse_label(j.at("label").get<std::string>());
      s.toggle_state = parse_toggle(j.at("toggle_state").get<std::string>());
      s.disposition = methods::parse_disposition(j.at("disposition").get<std::string>());
      if (j.contains("correction_delta")) s.correction_delta = j.at("correction_delta").get<std::array<double, 2>>();
      if (j.contains("gripper_override")) s.gripper_override = j.at("gripper_override").get<double>();
      e.steps.push_back(std::move(s));
      if (j.contains("success")) {
        e.success = j.at("success").get<bool>();
        closed = true;
      }
    } catch (const std::exception& ex) {
      throw LogFormatError(n, ex.what());
    }
  }
  if (!closed) throw LogFormatError(n, "log ends inside an episode");
  return out;
}

std::vector<LoggedEpisode> read_episode_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_episode_log(in);
}

nlohmann::json to_json(const EventRecord& r) {
  nlohmann::json j = {{"episode", r.episode}, {"step", r.step},           {"source", r.source},
                      {"kind", r.kind},       {"disposition", r.disposition}};
  if (r.kind == "correction") {
    j["dx"] = r.dx;
    j["dy"] = r.dy;
    if (r.grip) j["grip"] = *r.grip;
  }
  if (r.sequence) j["sequence"] = *r.sequence;
  if (r.received_ms) j["received_ms"] = *r.received_ms;
  return j;
}

EventRecord event_from_json(const nlohmann::json& j) {
  EventRecord r;
  r.episode = j.at("episode").get<int>();
  r.step = j.at("step").get<int>();
  r.source = j.at("source").get<std::string>();
  r.kind = j.at("kind").get<std::string>();
  r.disposition = j.at("disposition").get<std::string>();
  r.dx = j.value("dx", 0.0);
  r.dy = j.value("dy", 0.0);
  if (j.contains("grip")) r.grip = j.at("grip").get<double>();
  if (j.contains("sequence")) r.sequence = j.at("sequence").get<std::uint64_t>();
  if (j.contains("received_ms")) r.received_ms = j.at("received_ms").get<double>();
  return r;
}

void write_event_log(const std::filesystem::path& path, const std::vector<EventRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<EventRecord> read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<EventRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(event_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& ex) {
      throw LogFormatError(n, ex.what());
    }
  }
  return out;
}

}  // namespace ceiling::logs
