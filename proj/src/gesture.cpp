#include "palmctl/gesture.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace palmctl::gesture {

using json = nlohmann::json;

void FingerStateParams::validate() const {
  if (!(thumb_slope_max > 0.0)) throw ConfigError("thumb_slope_max: must be positive");
  if (!(thumb_min_dx > 0.0)) throw ConfigError("thumb_min_dx: must be positive");
}

namespace {

struct FingerJoints {
  Landmark mcp;
  Landmark tip;
};

FingerJoints joints(Finger f) {
  switch (f) {
    case Finger::Thumb: return {Landmark::ThumbMcp, Landmark::ThumbTip};
    case Finger::Index: return {Landmark::IndexMcp, Landmark::IndexTip};
    case Finger::Middle: return {Landmark::MiddleMcp, Landmark::MiddleTip};
    case Finger::Ring: return {Landmark::RingMcp, Landmark::RingTip};
    case Finger::Pinky: return {Landmark::PinkyMcp, Landmark::PinkyTip};
  }
  throw std::invalid_argument("unknown finger");
}

}  // namespace

int finger_state(const LandmarkSet& lms, Finger finger) {
  if (finger == Finger::Thumb) throw std::invalid_argument("finger_state: use thumb_state for the thumb");
  const auto [mcp, tip] = joints(finger);
  return lms[tip].y < lms[mcp].y ? 1 : 0;
}

int thumb_state(const LandmarkSet& lms, const FingerStateParams& params) {
  const Point2& mcp = lms[Landmark::ThumbMcp];
  const Point2& tip = lms[Landmark::ThumbTip];
  const double dx = tip.x - mcp.x;
  if (std::abs(dx) < params.thumb_min_dx) return 0;
  const double slope = (tip.y - mcp.y) / dx;
  return std::abs(slope) <= params.thumb_slope_max ? 1 : 0;
}

PostureArray posture_array(const LandmarkSet& lms, const FingerStateParams& params) {
  PostureArray pa;
  pa.set(Finger::Thumb, thumb_state(lms, params) != 0);
  for (Finger f : {Finger::Index, Finger::Middle, Finger::Ring, Finger::Pinky}) {
    pa.set(f, finger_state(lms, f) != 0);
  }
  return pa;
}

Point2 cursor_point(const LandmarkSet& lms) {
  const Point2& a = lms[Landmark::ThumbTip];
  const Point2& b = lms[Landmark::IndexTip];
  return {(a.x + b.x) / 2, (a.y + b.y) / 2};
}

Point2 focal_point(const LandmarkSet& lms) { return lms[Landmark::MiddleMcp]; }

HandPostures frame_postures(const HandFrame& frame, const FingerStateParams& params) {
  HandPostures out;
  if (const auto* r = frame.hand(Handedness::Right)) out.right = posture_array(*r, params);
  if (const auto* l = frame.hand(Handedness::Left)) out.left = posture_array(*l, params);
  return out;
}

// --- registry ---------------------------------------------------------------

GestureRegistry::GestureRegistry(std::vector<GestureDef> defs) : defs_(std::move(defs)) {
  for (std::size_t i = 0; i < defs_.size(); ++i) {
    const auto& d = defs_[i];
    if (d.name.empty()) throw ConfigError("registry[" + std::to_string(i) + "].name: empty");
    if (d.hold_frames < 1) throw ConfigError(d.name + ".hold_frames: must be >= 1");
    for (std::size_t j = 0; j < i; ++j) {
      if (defs_[j].name == d.name) throw ConfigError("registry: duplicate name \"" + d.name + "\"");
      if (defs_[j].pattern == d.pattern) {
        throw ConfigError("registry: \"" + d.name + "\" repeats the pattern of \"" + defs_[j].name + "\"");
      }
    }
  }
}

const GestureDef* GestureRegistry::find(std::string_view name) const {
  for (const auto& d : defs_) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

namespace {

PostureArray posture_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != kNumFingers) throw ConfigError(path + ": expected 5 bits");
  std::array<int, kNumFingers> bits{};
  for (std::size_t i = 0; i < kNumFingers; ++i) {
    if (!j[i].is_number_integer()) throw ConfigError(path + ": expected 0 or 1");
    bits[i] = j[i].get<int>();
    if (bits[i] != 0 && bits[i] != 1) throw ConfigError(path + ": expected 0 or 1");
  }
  return PostureArray(bits);
}

json posture_to_json(const PostureArray& p) {
  json arr = json::array();
  for (int b : p.bits()) arr.push_back(b);
  return arr;
}

}  // namespace

GestureRegistry GestureRegistry::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("registry: malformed JSON: ") + e.what());
  }
  if (!j.is_array()) throw ConfigError("registry: expected array");
  std::vector<GestureDef> defs;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    const auto path = "registry[" + std::to_string(i) + "]";
    if (!e.is_object()) throw ConfigError(path + ": expected object");
    GestureDef def;
    if (!e.contains("name") || !e["name"].is_string()) throw ConfigError(path + ".name: expected string");
    def.name = e["name"].get<std::string>();
    if (!e.contains("hold_frames") || !e["hold_frames"].is_number_integer()) {
      throw ConfigError(path + ".hold_frames: expected integer");
    }
    def.hold_frames = e["hold_frames"].get<int>();
    if (!e.contains("pattern") || !e["pattern"].is_object()) throw ConfigError(path + ".pattern: expected object");
    const auto& pat = e["pattern"];
    if (pat.contains("single") && !pat.contains("double")) {
      def.pattern = SinglePattern{posture_from_json(pat["single"], path + ".pattern.single")};
    } else if (pat.contains("double") && !pat.contains("single")) {
      const auto& dbl = pat["double"];
      if (!dbl.is_object() || !dbl.contains("R") || !dbl.contains("L")) {
        throw ConfigError(path + ".pattern.double: expected {\"R\":..., \"L\":...}");
      }
      def.pattern = DoublePattern{posture_from_json(dbl["R"], path + ".pattern.double.R"),
                                  posture_from_json(dbl["L"], path + ".pattern.double.L")};
    } else {
      throw ConfigError(path + ".pattern: expected exactly one of \"single\" or \"double\"");
    }
    defs.push_back(std::move(def));
  }
  return GestureRegistry(std::move(defs));
}

std::string GestureRegistry::to_json() const {
  json arr = json::array();
  for (const auto& d : defs_) {
    json pattern;
    if (const auto* s = std::get_if<SinglePattern>(&d.pattern)) {
      pattern["single"] = posture_to_json(s->posture);
    } else {
      const auto& dp = std::get<DoublePattern>(d.pattern);
      pattern["double"] = {{"R", posture_to_json(dp.right)}, {"L", posture_to_json(dp.left)}};
    }
    arr.push_back({{"name", d.name}, {"pattern", pattern}, {"hold_frames", d.hold_frames}});
  }
  return arr.dump(2);
}

GestureRegistry default_registry() {
  auto single = [](std::string name, std::array<int, 5> bits) {
    return GestureDef{std::move(name), SinglePattern{PostureArray(bits)}, 5};
  };
  auto both = [](std::string name, std::array<int, 5> right, std::array<int, 5> left) {
    return GestureDef{std::move(name), DoublePattern{PostureArray(right), PostureArray(left)}, 5};
  };
  // Double-handed entries first so a two-hand pose is never claimed by a
  // single-hand entry.
  return GestureRegistry({
      both("TimeOut", {1, 1, 1, 1, 1}, {1, 1, 1, 1, 1}),
      both("Collab", {0, 1, 0, 0, 0}, {0, 1, 0, 0, 0}),
      both("XSign", {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0}),
      both("Frame", {1, 1, 0, 0, 0}, {1, 1, 0, 0, 0}),
      single("Punch_VRF", {0, 0, 0, 0, 0}),
      single("One_VRF", {0, 1, 0, 0, 0}),
      single("Two_VRF", {0, 1, 1, 0, 0}),
      single("Three_VRF", {0, 1, 1, 1, 0}),
      single("Four_VRF", {0, 1, 1, 1, 1}),
      single("Five_VRF", {1, 1, 1, 1, 1}),
      single("Six_VRF", {1, 0, 0, 0, 1}),
      single("Seven_VRF", {1, 1, 0, 0, 0}),
      single("Eight_VRF", {1, 1, 1, 0, 0}),
      single("Nine_VRF", {1, 1, 1, 1, 0}),
      single("Span_VRF", {1, 0, 0, 0, 0}),
      single("Horiz_HRF", {0, 0, 0, 0, 1}),
  });
}

// --- classification -----------------------------------------------------------

Classification classify_detail(const HandPostures& postures, const GestureRegistry& registry) {
  for (const auto& def : registry.defs()) {
    if (const auto* s = std::get_if<SinglePattern>(&def.pattern)) {
      if (postures.right && *postures.right == s->posture) return {&def, Handedness::Right};
      if (postures.left && *postures.left == s->posture) return {&def, Handedness::Left};
    } else {
      const auto& d = std::get<DoublePattern>(def.pattern);
      if (postures.right && postures.left && *postures.right == d.right && *postures.left == d.left) {
        return {&def, Handedness::Right};
      }
    }
  }
  return {};
}

std::optional<std::string> classify(const HandPostures& postures, const GestureRegistry& registry) {
  if (auto c = classify_detail(postures, registry)) return c.def->name;
  return std::nullopt;
}

// --- debounce -----------------------------------------------------------------

std::vector<GestureEvent> step(EngineState& state, const HandFrame& frame,
                               const GestureRegistry& registry, const FingerStateParams& params) {
  if (state.last_t_ms && frame.t_ms <= *state.last_t_ms) {
    throw StreamOrderError("t=" + std::to_string(frame.t_ms) + " not after t=" + std::to_string(*state.last_t_ms));
  }
  state.last_t_ms = frame.t_ms;

  const Classification c = classify_detail(frame_postures(frame, params), registry);
  std::optional<Point2> cursor;
  if (c.hand) {
    cursor = cursor_point(*frame.hand(*c.hand));
  } else if (!frame.hands.empty()) {
    const LandmarkSet* h = frame.hand(Handedness::Right);
    cursor = cursor_point(h ? *h : frame.hands.front());
  }
  if (cursor) state.last_cursor = cursor;

  std::optional<std::string> label;
  if (c) label = c.def->name;

  std::vector<GestureEvent> events;
  if (state.active && label != state.active) {
    events.push_back({EventKind::Offset, *state.active, state.active_onset_ms, frame.t_ms, std::nullopt});
    state.active.reset();
  }

  if (label && label == state.candidate) {
    ++state.run_length;
  } else {
    state.candidate = label;
    state.run_length = label ? 1 : 0;
  }

  if (label && !state.active && state.run_length >= c.def->hold_frames) {
    state.active = label;
    state.active_onset_ms = frame.t_ms;
    events.push_back({EventKind::Onset, *label, frame.t_ms, std::nullopt, cursor});
  }
  return events;
}

std::string serialize_event(const GestureEvent& ev) {
  std::string out = "{\"event\":\"";
  out += ev.kind == EventKind::Onset ? "onset" : "offset";
  out += "\",\"name\":" + json(ev.name).dump() + ",\"onset_ms\":" + std::to_string(ev.onset_ms);
  if (ev.offset_ms) out += ",\"offset_ms\":" + std::to_string(*ev.offset_ms);
  if (ev.cursor) out += ",\"cursor\":[" + format_double(ev.cursor->x) + "," + format_double(ev.cursor->y) + "]";
  return out + "}";
}

}  // namespace palmctl::gesture
