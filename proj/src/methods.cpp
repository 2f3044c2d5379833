#include "ceiling/methods.hpp"

#include <stdexcept>
#include <string>

namespace ceiling::methods {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::BC: return "bc";
    case Method::Evaluative: return "evaluative";
    case Method::HGDagger: return "hg-dagger";
    case Method::IWR: return "iwr";
    case Method::CEILing: return "ceiling";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::BC, Method::Evaluative, Method::HGDagger, Method::IWR, Method::CEILing})
    if (name == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

MethodSpec MethodSpec::of(Method m) {
  switch (m) {
    case Method::BC: return {m, false, false, true};
    case Method::Evaluative: return {m, false, true, true};
    case Method::HGDagger: return {m, true, true, false};
    case Method::IWR: return {m, true, false, true};
    case Method::CEILing: return {m, true, true, true};
  }
  throw std::invalid_argument("MethodSpec::of: bad method");
}

std::string_view to_string(Disposition d) {
  switch (d) {
    case Disposition::StoreAsIs: return "store";
    case Disposition::StoreAsGood: return "store_as_good";
    case Disposition::Drop: return "drop";
  }
  return "unknown";
}

Disposition parse_disposition(std::string_view name) {
  for (auto d : {Disposition::StoreAsIs, Disposition::StoreAsGood, Disposition::Drop})
    if (name == to_string(d)) return d;
  throw std::invalid_argument("unknown disposition '" + std::string(name) + "'");
}

Disposition filter_transition(const MethodSpec& spec, FeedbackLabel label) {
  if (label == FeedbackLabel::Corrected && !spec.corrections_enabled)
    throw std::logic_error("filter_transition: corrected step under " + std::string(to_string(spec.method)));
  switch (label) {
    case FeedbackLabel::Corrected: return Disposition::StoreAsIs;
    case FeedbackLabel::Good: return spec.store_good ? Disposition::StoreAsIs : Disposition::Drop;
    case FeedbackLabel::Discarded:
      if (!spec.store_good) return Disposition::Drop;
      if (!spec.discard_bad) return Disposition::StoreAsGood;
      // CEILing keeps q=0 steps for the record; Evaluative-only drops them.
      return spec.method == Method::CEILing ? Disposition::StoreAsIs : Disposition::Drop;
  }
  return Disposition::Drop;
}

std::vector<feedback::FeedbackEvent> teacher_adapter(const MethodSpec& spec,
                                                     std::vector<feedback::FeedbackEvent> raw) {
  std::erase_if(raw, [&](const feedback::FeedbackEvent& e) {
    if (e.kind == feedback::EventKind::Correction) return !spec.corrections_enabled;
    return !spec.evaluative_enabled();
  });
  return raw;
}

std::vector<Episode> stored_segments(const MethodSpec& spec, const Episode& labeled) {
  std::vector<Episode> out;
  Episode current;
  auto flush = [&] {
    if (current.transitions.empty()) return;
    out.push_back(std::move(current));
    current = Episode{};
  };
  for (const auto& t : labeled.transitions) {
    const auto d = filter_transition(spec, t.label);
    if (d == Disposition::Drop) {
      flush();
      continue;
    }
    if (current.transitions.empty()) {
      current.task = labeled.task;
      current.seed = labeled.seed;
      current.source = labeled.source;
      current.success = labeled.success;
    }
    current.transitions.push_back(t);
    if (d == Disposition::StoreAsGood) current.transitions.back().label = FeedbackLabel::Good;
  }
  flush();
  return out;
}

}  // namespace ceiling::methods
