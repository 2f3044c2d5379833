#pragma once

#include <string_view>
#include <vector>

#include "ceiling/feedback.hpp"
#include "ceiling/types.hpp"

namespace ceiling::methods {

enum class Method : std::uint8_t { BC, Evaluative, HGDagger, IWR, CEILing };

std::string_view to_string(Method m);
// Accepts bc, evaluative, hg-dagger, iwr, ceiling. Throws std::invalid_argument.
Method parse_method(std::string_view name);

struct MethodSpec {
  Method method = Method::CEILing;
  bool corrections_enabled = true;
  bool discard_bad = true;
  bool store_good = true;

  static MethodSpec of(Method m);
  bool interactive() const { return method != Method::BC; }
  // The evaluative toggle only matters when it separates stored from discarded data.
  bool evaluative_enabled() const { return discard_bad && store_good; }
  bool operator==(const MethodSpec&) const = default;
};

enum class Disposition : std::uint8_t { StoreAsIs, StoreAsGood, Drop };
std::string_view to_string(Disposition d);
Disposition parse_disposition(std::string_view name);

// Throws std::logic_error for a Corrected label under a method without corrections.
Disposition filter_transition(const MethodSpec& spec, FeedbackLabel label);

std::vector<feedback::FeedbackEvent> teacher_adapter(const MethodSpec& spec,
                                                     std::vector<feedback::FeedbackEvent> raw);

// Applies dispositions to a labeled episode. Dropped steps split the remainder into
// contiguous segments, each returned as its own episode (empty result if all dropped).
std::vector<Episode> stored_segments(const MethodSpec& spec, const Episode& labeled);

}  // namespace ceiling::methods
