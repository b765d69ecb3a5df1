#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "palmctl/core.hpp"

namespace palmctl::device {

struct ControllerConfig {
  double deadzone = 0.05;  // normalized half-width around the image center
  double gain = 40.0;      // steps per unit normalized error
  int max_steps = 20;      // per-update clamp

  void validate() const;
  static ControllerConfig from_json(std::string_view text);
};

enum class Axis : char { X = 'X', Y = 'Y' };

struct MotorCommand {
  Axis axis = Axis::X;
  int steps = 1;  // nonzero; positive moves toward +x / +y in the image

  friend bool operator==(const MotorCommand&, const MotorCommand&) = default;
};

struct DeviceCommand {
  std::string device_id;
  std::string action;

  friend bool operator==(const DeviceCommand&, const DeviceCommand&) = default;
};

using Command = std::variant<MotorCommand, DeviceCommand>;

/// Proportional step toward centering `focal`: one command per axis whose
/// error exceeds the deadzone, X before Y.
std::vector<MotorCommand> centering_step(const Point2& focal, const ControllerConfig& cfg = {});

/// Reference plant for closed-loop checks: each command moves the focal point
/// by -steps/gain along its axis.
Point2 apply_plant(const Point2& focal, std::span<const MotorCommand> cmds, const ControllerConfig& cfg);

struct CenteringRun {
  std::vector<Point2> trajectory;  // starting point first
  int iterations = 0;              // control updates until the first command-free update
  bool converged = false;
};

/// Runs centering_step against apply_plant until an update emits no commands
/// or `max_iterations` updates have been issued.
CenteringRun simulate_centering(const Point2& start, const ControllerConfig& cfg, int max_iterations);

/// Gesture name -> device command.
class CommandMapping {
 public:
  CommandMapping() = default;
  explicit CommandMapping(std::map<std::string, DeviceCommand, std::less<>> table);

  const DeviceCommand* find(std::string_view gesture) const;
  std::size_t size() const { return table_.size(); }

  /// {"<gesture>": {"device": "<id>", "action": "<action>"}, ...}
  static CommandMapping from_json(std::string_view text);

 private:
  std::map<std::string, DeviceCommand, std::less<>> table_;
};

/// Onset events only; offsets and unmapped gestures yield nothing.
std::optional<DeviceCommand> map_gesture(const GestureEvent& event, const CommandMapping& mapping);

inline constexpr std::size_t kMaxTokenLength = 16;
inline constexpr int kMaxWireSteps = 999;

bool valid_token(std::string_view token);

/// "M X +8\n" or "D tv POWER\n". Throws ProtocolError for commands outside the
/// grammar (zero steps, more than 3 digits, bad tokens).
std::string encode_wire(const Command& cmd);

/// Parses exactly one LF-terminated line and nothing else. Motor steps above
/// `max_steps` are rejected.
Command decode_wire(std::string_view bytes, int max_steps = ControllerConfig{}.max_steps);

/// Ordered byte sink for encoded command lines.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void write(std::string_view bytes) = 0;
};

/// "tcp://host:port" or "serial:<path>". Throws TransportError when the URI is
/// malformed or the endpoint cannot be opened.
std::unique_ptr<Transport> open_transport(std::string_view uri);

}  // namespace palmctl::device
