#include "palmctl/device.hpp"

#include <cmath>
#include <algorithm>

#include "json.hpp"

namespace palmctl::device {

using json = nlohmann::json;

void ControllerConfig::validate() const {
  if (!(deadzone >= 0.0 && deadzone < 0.5)) throw ConfigError("deadzone: must be in [0, 0.5)");
  if (!(gain > 0.0) || !std::isfinite(gain)) throw ConfigError("gain: must be positive");
  if (max_steps < 1 || max_steps > kMaxWireSteps) throw ConfigError("max_steps: must be in [1, 999]");
}

ControllerConfig ControllerConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("controller config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("controller config: expected object");
  ControllerConfig cfg;
  try {
    cfg.deadzone = j.value("deadzone", cfg.deadzone);
    cfg.gain = j.value("gain", cfg.gain);
    cfg.max_steps = j.value("max_steps", cfg.max_steps);
  } catch (const json::type_error& e) {
    throw ConfigError(std::string("controller config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<MotorCommand> centering_step(const Point2& focal, const ControllerConfig& cfg) {
  std::vector<MotorCommand> out;
  auto axis_step = [&](Axis axis, double error) {
    if (std::abs(error) <= cfg.deadzone) return;
    const long raw = std::lround(error * cfg.gain);
    const int steps = static_cast<int>(std::clamp<long>(raw, -cfg.max_steps, cfg.max_steps));
    if (steps != 0) out.push_back({axis, steps});
  };
  axis_step(Axis::X, focal.x - 0.5);
  axis_step(Axis::Y, focal.y - 0.5);
  return out;
}

Point2 apply_plant(const Point2& focal, std::span<const MotorCommand> cmds, const ControllerConfig& cfg) {
  Point2 p = focal;
  for (const auto& c : cmds) {
    const double shift = -static_cast<double>(c.steps) / cfg.gain;
    if (c.axis == Axis::X) {
      p.x += shift;
    } else {
      p.y += shift;
    }
  }
  return p;
}

CenteringRun simulate_centering(const Point2& start, const ControllerConfig& cfg, int max_iterations) {
  cfg.validate();
  CenteringRun run;
  run.trajectory.push_back(start);
  Point2 p = start;
  for (int i = 0; i < max_iterations; ++i) {
    const auto cmds = centering_step(p, cfg);
    if (cmds.empty()) {
      run.converged = true;
      break;
    }
    p = apply_plant(p, cmds, cfg);
    run.trajectory.push_back(p);
    ++run.iterations;
  }
  if (!run.converged) run.converged = centering_step(p, cfg).empty();
  return run;
}

// --- gesture mapping -----------------------------------------------------------------

bool valid_token(std::string_view token) {
  if (token.empty() || token.size() > kMaxTokenLength) return false;
  return std::all_of(token.begin(), token.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

CommandMapping::CommandMapping(std::map<std::string, DeviceCommand, std::less<>> table) : table_(std::move(table)) {
  for (const auto& [gesture, cmd] : table_) {
    if (!valid_token(cmd.device_id)) throw ConfigError(gesture + ".device: invalid token \"" + cmd.device_id + "\"");
    if (!valid_token(cmd.action)) throw ConfigError(gesture + ".action: invalid token \"" + cmd.action + "\"");
  }
}

const DeviceCommand* CommandMapping::find(std::string_view gesture) const {
  auto it = table_.find(gesture);
  return it == table_.end() ? nullptr : &it->second;
}

CommandMapping CommandMapping::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("mapping: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("mapping: expected object");
  std::map<std::string, DeviceCommand, std::less<>> table;
  for (const auto& [gesture, entry] : j.items()) {
    if (!entry.is_object() || !entry.contains("device") || !entry.contains("action") ||
        !entry["device"].is_string() || !entry["action"].is_string()) {
      throw ConfigError("mapping." + gesture + ": expected {\"device\": str, \"action\": str}");
    }
    table[gesture] = {entry["device"].get<std::string>(), entry["action"].get<std::string>()};
  }
  return CommandMapping(std::move(table));
}

std::optional<DeviceCommand> map_gesture(const GestureEvent& event, const CommandMapping& mapping) {
  if (event.kind != EventKind::Onset) return std::nullopt;
  if (const auto* cmd = mapping.find(event.name)) return *cmd;
  return std::nullopt;
}

// --- wire codec ------------------------------------------------------------------------

std::string encode_wire(const Command& cmd) {
  if (const auto* m = std::get_if<MotorCommand>(&cmd)) {
    if (m->axis != Axis::X && m->axis != Axis::Y) throw ProtocolError(2, "axis must be X or Y");
    if (m->steps == 0 || std::abs(m->steps) > kMaxWireSteps) throw ProtocolError(4, "steps must be in [-999, 999] \\ {0}");
    std::string out = "M ";
    out += static_cast<char>(m->axis);
    out += m->steps > 0 ? " +" : " -";
    out += std::to_string(std::abs(m->steps));
    out += '\n';
    return out;
  }
  const auto& d = std::get<DeviceCommand>(cmd);
  if (!valid_token(d.device_id)) throw ProtocolError(2, "invalid device token");
  if (!valid_token(d.action)) throw ProtocolError(3 + d.device_id.size(), "invalid action token");
  return "D " + d.device_id + " " + d.action + "\n";
}

namespace {

bool is_token_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

class LineCursor {
 public:
  explicit LineCursor(std::string_view s) : s_(s) {}

  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[pos_]; }

  void expect(char c, const char* what) {
    if (at_end() || s_[pos_] != c) throw ProtocolError(pos_, std::string("expected ") + what);
    ++pos_;
  }

  std::string_view token(const char* what) {
    const std::size_t start = pos_;
    while (!at_end() && is_token_char(s_[pos_])) {
      if (pos_ - start == kMaxTokenLength) throw ProtocolError(pos_, std::string(what) + " longer than 16 bytes");
      ++pos_;
    }
    if (pos_ == start) throw ProtocolError(pos_, std::string("expected ") + what);
    return s_.substr(start, pos_ - start);
  }

  void finish() {
    expect('\n', "LF");
    if (!at_end()) throw ProtocolError(pos_, "trailing bytes after LF");
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

Command decode_wire(std::string_view bytes, int max_steps) {
  LineCursor in(bytes);
  if (in.at_end()) throw ProtocolError(0, "empty input");
  const char verb = in.peek();
  if (verb == 'M') {
    in.expect('M', "verb");
    in.expect(' ', "SP");
    MotorCommand cmd;
    if (in.peek() == 'X') {
      cmd.axis = Axis::X;
    } else if (in.peek() == 'Y') {
      cmd.axis = Axis::Y;
    } else {
      throw ProtocolError(in.pos(), "axis must be X or Y");
    }
    in.expect(static_cast<char>(cmd.axis), "axis");
    in.expect(' ', "SP");
    int sign = 0;
    if (in.peek() == '+') {
      sign = 1;
    } else if (in.peek() == '-') {
      sign = -1;
    } else {
      throw ProtocolError(in.pos(), "sign must be + or -");
    }
    in.expect(in.peek(), "sign");
    const std::size_t digits_at = in.pos();
    int value = 0;
    int digits = 0;
    while (in.peek() >= '0' && in.peek() <= '9') {
      if (digits == 0 && in.peek() == '0') throw ProtocolError(in.pos(), "steps must be nonzero without leading zeros");
      if (digits == 3) throw ProtocolError(in.pos(), "steps longer than 3 digits");
      value = value * 10 + (in.peek() - '0');
      ++digits;
      in.expect(in.peek(), "digit");
    }
    if (digits == 0) throw ProtocolError(in.pos(), "expected digits");
    if (value > max_steps) {
      throw ProtocolError(digits_at, "steps " + std::to_string(value) + " exceed max_steps " + std::to_string(max_steps));
    }
    in.finish();
    cmd.steps = sign * value;
    return cmd;
  }
  if (verb == 'D') {
    in.expect('D', "verb");
    in.expect(' ', "SP");
    DeviceCommand cmd;
    cmd.device_id = std::string(in.token("device token"));
    in.expect(' ', "SP");
    cmd.action = std::string(in.token("action token"));
    in.finish();
    return cmd;
  }
  throw ProtocolError(0, "unknown verb");
}

}  // namespace palmctl::device
