#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "palmctl/errors.hpp"

namespace palmctl {

inline constexpr std::size_t kNumLandmarks = 21;
inline constexpr std::size_t kNumFingers = 5;

/// Normalized image coordinate. x grows to the right, y grows downward,
/// both in [0, 1].
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Wrist first, then each digit from thumb to pinky, base to tip.
enum class Landmark : std::uint8_t {
  Wrist = 0,
  ThumbCmc = 1,
  ThumbMcp = 2,
  ThumbIp = 3,
  ThumbTip = 4,
  IndexMcp = 5,
  IndexPip = 6,
  IndexDip = 7,
  IndexTip = 8,
  MiddleMcp = 9,
  MiddlePip = 10,
  MiddleDip = 11,
  MiddleTip = 12,
  RingMcp = 13,
  RingPip = 14,
  RingDip = 15,
  RingTip = 16,
  PinkyMcp = 17,
  PinkyPip = 18,
  PinkyDip = 19,
  PinkyTip = 20,
};

enum class Handedness : std::uint8_t { Left, Right };

char handedness_code(Handedness hd);

struct LandmarkSet {
  std::array<Point2, kNumLandmarks> points{};
  std::array<double, kNumLandmarks> confidences{};
  Handedness handedness = Handedness::Right;

  const Point2& operator[](Landmark lm) const { return points[static_cast<std::size_t>(lm)]; }
  Point2& operator[](Landmark lm) { return points[static_cast<std::size_t>(lm)]; }

  friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;
};

/// One timestamped observation: zero, one or two hands, at most one per handedness.
struct HandFrame {
  std::int64_t t_ms = 0;
  std::vector<LandmarkSet> hands;

  const LandmarkSet* hand(Handedness hd) const;

  /// Hands compare by handedness, independent of storage order.
  friend bool operator==(const HandFrame& a, const HandFrame& b);
};

enum class Finger : std::uint8_t { Thumb = 0, Index, Middle, Ring, Pinky };

/// Open/folded bit per digit, ordered thumb, index, middle, ring, pinky.
class PostureArray {
 public:
  PostureArray() = default;
  /// Throws ValidationError unless every entry is 0 or 1.
  explicit PostureArray(const std::array<int, kNumFingers>& bits);

  bool open(Finger f) const { return bits_[static_cast<std::size_t>(f)] != 0; }
  void set(Finger f, bool is_open) { bits_[static_cast<std::size_t>(f)] = is_open ? 1 : 0; }
  std::array<int, kNumFingers> bits() const;
  std::string to_string() const;  // "[0,1,0,0,0]"

  friend bool operator==(const PostureArray&, const PostureArray&) = default;

 private:
  std::array<std::uint8_t, kNumFingers> bits_{};
};

struct SinglePattern {
  PostureArray posture;
  friend bool operator==(const SinglePattern&, const SinglePattern&) = default;
};

struct DoublePattern {
  PostureArray right;
  PostureArray left;
  friend bool operator==(const DoublePattern&, const DoublePattern&) = default;
};

using GesturePattern = std::variant<SinglePattern, DoublePattern>;

struct GestureDef {
  std::string name;
  GesturePattern pattern;
  int hold_frames = 5;

  friend bool operator==(const GestureDef&, const GestureDef&) = default;
};

enum class EventKind : std::uint8_t { Onset, Offset };

/// Onset events carry no offset_ms; the matching Offset event repeats onset_ms
/// and closes it.
struct GestureEvent {
  EventKind kind = EventKind::Onset;
  std::string name;
  std::int64_t onset_ms = 0;
  std::optional<std::int64_t> offset_ms;
  std::optional<Point2> cursor;

  friend bool operator==(const GestureEvent&, const GestureEvent&) = default;
};

inline constexpr std::string_view kNoGesture = "none";

struct EvalRow {
  std::string name;
  std::int64_t total_frames = 0;
  std::int64_t correct_frames = 0;
  std::int64_t false_frames = 0;
  double accuracy_pct = 0.0;
  double error_pct = 0.0;
  double recall = 0.0;
};

/// Builds a row from raw counts; accuracy and recall are correct/total.
EvalRow make_eval_row(std::string name, std::int64_t total, std::int64_t correct);

/// Frame-level recognition report. Confusion rows are ground truth, columns
/// are predictions, both indexed by `labels` (which ends with "none").
struct EvalReport {
  std::vector<EvalRow> rows;
  EvalRow totals;
  double macro_recall = 0.0;
  std::vector<std::string> labels;
  std::vector<std::vector<std::int64_t>> confusion;
};

// --- frame stream I/O -------------------------------------------------------

/// Checks every HandFrame invariant; throws ValidationError naming the first
/// violated field.
void validate_frame(const HandFrame& frame);

/// Parses one JSONL frame line. Throws ParseError on malformed JSON or wrong
/// JSON types, ValidationError on invariant violations.
HandFrame parse_frame(std::string_view line);

/// Same as parse_frame but additionally requires a string "label" field, as
/// written by the synthetic corpus generator.
HandFrame parse_labelled_frame(std::string_view line, std::string& label);

/// Canonical single-line encoding: right hand before left, shortest
/// round-trip decimals. No trailing newline.
std::string serialize_frame(const HandFrame& frame);

/// Shortest decimal that parses back to exactly `v`.
std::string format_double(double v);

/// Reads frames line by line and rejects non-increasing timestamps.
/// Blank lines are skipped.
class FrameStreamReader {
 public:
  explicit FrameStreamReader(std::istream& in) : in_(in) {}

  /// Returns nullopt at end of stream.
  std::optional<HandFrame> next();
  std::size_t line_number() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
  std::optional<std::int64_t> last_t_;
};

}  // namespace palmctl
