#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "palmctl/core.hpp"

namespace palmctl::gesture {

struct FingerStateParams {
  double thumb_slope_max = 1.0;
  double thumb_min_dx = 0.04;

  void validate() const;
};

/// Open (1) iff the fingertip lies strictly above its MCP joint. Only valid for
/// index, middle, ring and pinky; throws std::invalid_argument for the thumb.
int finger_state(const LandmarkSet& lms, Finger finger);

/// Open (1) iff the MCP-to-tip segment is lateral: |dx| >= thumb_min_dx and
/// |slope| <= thumb_slope_max.
int thumb_state(const LandmarkSet& lms, const FingerStateParams& params = {});

PostureArray posture_array(const LandmarkSet& lms, const FingerStateParams& params = {});

/// Midpoint of the thumb tip and index tip.
Point2 cursor_point(const LandmarkSet& lms);

/// Middle-finger MCP.
Point2 focal_point(const LandmarkSet& lms);

struct HandPostures {
  std::optional<PostureArray> right;
  std::optional<PostureArray> left;
};

HandPostures frame_postures(const HandFrame& frame, const FingerStateParams& params = {});

/// Ordered gesture definitions; lookup is first match in list order.
class GestureRegistry {
 public:
  GestureRegistry() = default;
  /// Throws ConfigError on duplicate names, duplicate patterns or hold_frames < 1.
  explicit GestureRegistry(std::vector<GestureDef> defs);

  const std::vector<GestureDef>& defs() const { return defs_; }
  const GestureDef* find(std::string_view name) const;
  std::size_t size() const { return defs_.size(); }

  /// JSON array of {"name", "pattern": {"single": [...]} | {"double": {"R": [...], "L": [...]}}, "hold_frames"}.
  static GestureRegistry from_json(std::string_view text);
  std::string to_json() const;

 private:
  std::vector<GestureDef> defs_;
};

/// Sixteen gestures named after the HANDS set, hold_frames 5.
GestureRegistry default_registry();

struct Classification {
  const GestureDef* def = nullptr;
  /// Hand whose landmarks drive the cursor: the matching hand for single
  /// patterns, the right hand for double patterns.
  std::optional<Handedness> hand;

  explicit operator bool() const { return def != nullptr; }
};

Classification classify_detail(const HandPostures& postures, const GestureRegistry& registry);

std::optional<std::string> classify(const HandPostures& postures, const GestureRegistry& registry);

struct EngineState {
  std::optional<std::int64_t> last_t_ms;
  /// Name of the gesture the current run of identical classifications maps to.
  std::optional<std::string> candidate;
  int run_length = 0;
  std::optional<std::string> active;
  std::int64_t active_onset_ms = 0;
  std::optional<Point2> last_cursor;
};

/// Temporal debounce. A gesture fires once `hold_frames` consecutive frames
/// classify to it and closes on the first frame that classifies differently.
/// Throws StreamOrderError if t_ms does not increase.
std::vector<GestureEvent> step(EngineState& state, const HandFrame& frame,
                               const GestureRegistry& registry, const FingerStateParams& params = {});

/// Owns one stream's state.
class GestureEngine {
 public:
  explicit GestureEngine(GestureRegistry registry, FingerStateParams params = {})
      : registry_(std::move(registry)), params_(params) {
    params_.validate();
  }

  std::vector<GestureEvent> step(const HandFrame& frame) {
    return gesture::step(state_, frame, registry_, params_);
  }

  const EngineState& state() const { return state_; }
  const GestureRegistry& registry() const { return registry_; }

 private:
  GestureRegistry registry_;
  FingerStateParams params_;
  EngineState state_;
};

std::string serialize_event(const GestureEvent& ev);

}  // namespace palmctl::gesture
