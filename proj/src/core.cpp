#include "palmctl/core.hpp"

#include <charconv>
#include <cmath>
#include "json.hpp"

namespace palmctl {

using json = nlohmann::json;

char handedness_code(Handedness hd) { return hd == Handedness::Right ? 'R' : 'L'; }

const LandmarkSet* HandFrame::hand(Handedness hd) const {
  for (const auto& h : hands) {
    if (h.handedness == hd) return &h;
  }
  return nullptr;
}

bool operator==(const HandFrame& a, const HandFrame& b) {
  if (a.t_ms != b.t_ms || a.hands.size() != b.hands.size()) return false;
  for (const auto& h : a.hands) {
    const LandmarkSet* other = b.hand(h.handedness);
    if (!other || !(*other == h)) return false;
  }
  return true;
}

PostureArray::PostureArray(const std::array<int, kNumFingers>& bits) {
  for (std::size_t i = 0; i < kNumFingers; ++i) {
    if (bits[i] != 0 && bits[i] != 1) {
      throw ValidationError("posture[" + std::to_string(i) + "]: expected 0 or 1");
    }
    bits_[i] = static_cast<std::uint8_t>(bits[i]);
  }
}

std::array<int, kNumFingers> PostureArray::bits() const {
  std::array<int, kNumFingers> out{};
  for (std::size_t i = 0; i < kNumFingers; ++i) out[i] = bits_[i];
  return out;
}

std::string PostureArray::to_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < kNumFingers; ++i) {
    if (i) s += ',';
    s += static_cast<char>('0' + bits_[i]);
  }
  return s + "]";
}

EvalRow make_eval_row(std::string name, std::int64_t total, std::int64_t correct) {
  EvalRow row;
  row.name = std::move(name);
  row.total_frames = total;
  row.correct_frames = correct;
  row.false_frames = total - correct;
  if (total > 0) {
    row.accuracy_pct = 100.0 * static_cast<double>(correct) / static_cast<double>(total);
    row.recall = static_cast<double>(correct) / static_cast<double>(total);
  }
  row.error_pct = 100.0 - row.accuracy_pct;
  return row;
}

// --- validation -------------------------------------------------------------

namespace {

bool in_unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

std::string hand_path(std::size_t i) { return "hands[" + std::to_string(i) + "]"; }

}  // namespace

void validate_frame(const HandFrame& frame) {
  if (frame.t_ms < 0) throw ValidationError("t: must be non-negative");
  if (frame.hands.size() > 2) throw ValidationError("hands: at most 2 hands");
  if (frame.hands.size() == 2 && frame.hands[0].handedness == frame.hands[1].handedness) {
    throw ValidationError("hands: duplicate handedness");
  }
  for (std::size_t h = 0; h < frame.hands.size(); ++h) {
    const auto& lms = frame.hands[h];
    for (std::size_t i = 0; i < kNumLandmarks; ++i) {
      if (!in_unit(lms.points[i].x) || !in_unit(lms.points[i].y)) {
        throw ValidationError(hand_path(h) + ".pts[" + std::to_string(i) +
                              "]: coordinate outside [0,1]");
      }
      if (!in_unit(lms.confidences[i])) {
        throw ValidationError(hand_path(h) + ".conf[" + std::to_string(i) +
                              "]: confidence outside [0,1]");
      }
    }
  }
}

// --- parsing ----------------------------------------------------------------

namespace {

double number_at(const json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError(path + ": expected number");
  return v.get<double>();
}

LandmarkSet parse_hand(const json& j, const std::string& path) {
  if (!j.is_object()) throw ParseError(path + ": expected object");
  for (const auto& [key, _] : j.items()) {
    if (key != "hd" && key != "pts" && key != "conf") {
      throw ParseError(path + ": unknown field \"" + key + "\"");
    }
  }
  LandmarkSet lms;

  auto hd = j.find("hd");
  if (hd == j.end()) throw ParseError(path + ".hd: missing");
  if (!hd->is_string()) throw ParseError(path + ".hd: expected string");
  const auto& code = hd->get_ref<const std::string&>();
  if (code == "R") {
    lms.handedness = Handedness::Right;
  } else if (code == "L") {
    lms.handedness = Handedness::Left;
  } else {
    throw ValidationError(path + ".hd: expected \"L\" or \"R\"");
  }

  auto pts = j.find("pts");
  if (pts == j.end()) throw ParseError(path + ".pts: missing");
  if (!pts->is_array()) throw ParseError(path + ".pts: expected array");
  if (pts->size() != kNumLandmarks) {
    throw ValidationError(path + ".pts: expected 21, got " + std::to_string(pts->size()));
  }
  for (std::size_t i = 0; i < kNumLandmarks; ++i) {
    const auto& p = (*pts)[i];
    const auto ppath = path + ".pts[" + std::to_string(i) + "]";
    if (!p.is_array() || p.size() != 2) throw ParseError(ppath + ": expected [x,y]");
    lms.points[i] = {number_at(p[0], ppath), number_at(p[1], ppath)};
    if (!in_unit(lms.points[i].x) || !in_unit(lms.points[i].y)) {
      throw ValidationError(ppath + ": coordinate outside [0,1]");
    }
  }

  lms.confidences.fill(1.0);
  if (auto conf = j.find("conf"); conf != j.end()) {
    if (!conf->is_array()) throw ParseError(path + ".conf: expected array");
    if (conf->size() != kNumLandmarks) {
      throw ValidationError(path + ".conf: expected 21, got " + std::to_string(conf->size()));
    }
    for (std::size_t i = 0; i < kNumLandmarks; ++i) {
      const auto cpath = path + ".conf[" + std::to_string(i) + "]";
      lms.confidences[i] = number_at((*conf)[i], cpath);
      if (!in_unit(lms.confidences[i])) throw ValidationError(cpath + ": confidence outside [0,1]");
    }
  }
  return lms;
}

}  // namespace

namespace {

json parse_object(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("frame: expected object");
  return j;
}

HandFrame frame_from_json(const json& j) {
  for (const auto& [key, _] : j.items()) {
    if (key != "t" && key != "hands") throw ParseError("frame: unknown field \"" + key + "\"");
  }

  HandFrame frame;
  auto t = j.find("t");
  if (t == j.end()) throw ParseError("t: missing");
  if (t->is_number_unsigned()) {
    frame.t_ms = static_cast<std::int64_t>(t->get<std::uint64_t>());
  } else if (t->is_number_integer()) {
    frame.t_ms = t->get<std::int64_t>();
    if (frame.t_ms < 0) throw ValidationError("t: must be non-negative");
  } else {
    throw ParseError("t: expected integer");
  }

  auto hands = j.find("hands");
  if (hands == j.end()) throw ParseError("hands: missing");
  if (!hands->is_array()) throw ParseError("hands: expected array");
  if (hands->size() > 2) throw ValidationError("hands: at most 2 hands");
  for (std::size_t i = 0; i < hands->size(); ++i) {
    frame.hands.push_back(parse_hand((*hands)[i], hand_path(i)));
  }
  validate_frame(frame);
  return frame;
}

}  // namespace

HandFrame parse_frame(std::string_view line) { return frame_from_json(parse_object(line)); }

HandFrame parse_labelled_frame(std::string_view line, std::string& label) {
  json j = parse_object(line);
  auto it = j.find("label");
  if (it == j.end()) throw ParseError("label: missing");
  if (!it->is_string() || it->get_ref<const std::string&>().empty()) {
    throw ParseError("label: expected non-empty string");
  }
  label = it->get<std::string>();
  j.erase(it);
  return frame_from_json(j);
}

// --- serialization ----------------------------------------------------------

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string serialize_frame(const HandFrame& frame) {
  std::string out = "{\"t\":" + std::to_string(frame.t_ms) + ",\"hands\":[";
  bool first = true;
  for (Handedness hd : {Handedness::Right, Handedness::Left}) {
    const LandmarkSet* lms = frame.hand(hd);
    if (!lms) continue;
    if (!first) out += ',';
    first = false;
    out += "{\"hd\":\"";
    out += handedness_code(hd);
    out += "\",\"pts\":[";
    for (std::size_t i = 0; i < kNumLandmarks; ++i) {
      if (i) out += ',';
      out += '[' + format_double(lms->points[i].x) + ',' + format_double(lms->points[i].y) + ']';
    }
    out += "],\"conf\":[";
    for (std::size_t i = 0; i < kNumLandmarks; ++i) {
      if (i) out += ',';
      out += format_double(lms->confidences[i]);
    }
    out += "]}";
  }
  out += "]}";
  return out;
}

// --- stream reader ----------------------------------------------------------

std::optional<HandFrame> FrameStreamReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    HandFrame frame = parse_frame(line);
    if (last_t_ && frame.t_ms <= *last_t_) {
      throw StreamOrderError("line " + std::to_string(line_) + ": t=" +
                             std::to_string(frame.t_ms) + " not after t=" +
                             std::to_string(*last_t_));
    }
    last_t_ = frame.t_ms;
    return frame;
  }
  return std::nullopt;
}

}  // namespace palmctl
