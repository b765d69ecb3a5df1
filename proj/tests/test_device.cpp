#include <filesystem>
#include <fstream>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "doctest.h"
#include "oracles.hpp"
#include "palmctl/device.hpp"

using namespace palmctl;
using namespace palmctl::device;

TEST_CASE("centering_step examples") {
  CHECK(centering_step({0.5, 0.5}).empty());
  CHECK(centering_step({0.7, 0.5}) == std::vector<MotorCommand>{{Axis::X, 8}});
  CHECK(centering_step({0.9, 0.9}, {0.05, 40, 10}) ==
        std::vector<MotorCommand>{{Axis::X, 10}, {Axis::Y, 10}});
  CHECK(centering_step({0.1, 0.52}) == std::vector<MotorCommand>{{Axis::X, -16}});
  // exactly on the deadzone edge: no command
  CHECK(centering_step({0.5, 0.75}, {0.25, 40, 20}).empty());
}

TEST_CASE("ControllerConfig validation") {
  CHECK_THROWS_AS((ControllerConfig{-0.1, 40, 20}.validate()), ConfigError);
  CHECK_THROWS_AS((ControllerConfig{0.05, 0, 20}.validate()), ConfigError);
  CHECK_THROWS_AS((ControllerConfig{0.05, 40, 0}.validate()), ConfigError);
  const auto cfg = ControllerConfig::from_json(R"({"deadzone":0.1,"gain":20,"max_steps":5})");
  CHECK(cfg.deadzone == 0.1);
  CHECK(cfg.gain == 20);
  CHECK(cfg.max_steps == 5);
  CHECK_THROWS_AS(ControllerConfig::from_json(R"({"gain":"x"})"), ConfigError);
}

TEST_CASE("property: centering_step signs and clamp") {
  std::mt19937_64 rng(61);
  for (int i = 0; i < 2000; ++i) {
    const ControllerConfig cfg{testing::uniform(rng, 0, 0.3), testing::uniform(rng, 1, 200), testing::uniform_int(rng, 1, 50)};
    const Point2 f{testing::uniform(rng), testing::uniform(rng)};
    const auto cmds = centering_step(f, cfg);
    CHECK(cmds.size() <= 2);
    for (std::size_t k = 0; k < cmds.size(); ++k) {
      const auto& c = cmds[k];
      const double e = c.axis == Axis::X ? f.x - 0.5 : f.y - 0.5;
      CHECK(std::abs(e) > cfg.deadzone);
      CHECK(std::abs(c.steps) <= cfg.max_steps);
      if (c.steps != 0) CHECK((c.steps > 0) == (e > 0));
      if (k == 1) CHECK(cmds[0].axis == Axis::X);
    }
  }
}

TEST_CASE("property: closed loop converges within ceil(gain/max_steps) + 2 iterations") {
  std::mt19937_64 rng(62);
  for (int i = 0; i < 1000; ++i) {
    // A deadzone narrower than half a step can oscillate under rounding.
    const double gain = testing::uniform(rng, 5, 200);
    const ControllerConfig cfg{testing::uniform(rng, 0.51 / gain, 0.3), gain, testing::uniform_int(rng, 1, 60)};
    const Point2 start{testing::uniform(rng), testing::uniform(rng)};
    const int bound = static_cast<int>(std::ceil(cfg.gain / cfg.max_steps)) + 2;
    const auto run = simulate_centering(start, cfg, bound);
    CAPTURE(cfg.gain);
    CAPTURE(cfg.max_steps);
    CAPTURE(cfg.deadzone);
    CHECK(run.converged);
    CHECK(run.iterations <= bound);
    const auto end = run.trajectory.back();
    CHECK(std::abs(end.x - 0.5) <= cfg.deadzone);
    CHECK(std::abs(end.y - 0.5) <= cfg.deadzone);
  }
}

TEST_CASE("map_gesture") {
  const auto mapping = CommandMapping::from_json(R"({"Punch_VRF":{"device":"tv","action":"POWER"}})");
  CHECK(mapping.size() == 1);
  const GestureEvent onset{EventKind::Onset, "Punch_VRF", 0, std::nullopt, std::nullopt};
  CHECK(map_gesture(onset, mapping) == DeviceCommand{"tv", "POWER"});
  const GestureEvent offset{EventKind::Offset, "Punch_VRF", 0, 40, std::nullopt};
  CHECK_FALSE(map_gesture(offset, mapping).has_value());
  const GestureEvent other{EventKind::Onset, "One_VRF", 0, std::nullopt, std::nullopt};
  CHECK_FALSE(map_gesture(other, mapping).has_value());
  CHECK_THROWS_AS(CommandMapping::from_json(R"({"A":{"device":"t v","action":"POWER"}})"), ConfigError);
}

TEST_CASE("wire codec examples") {
  CHECK(encode_wire(MotorCommand{Axis::X, 8}) == "M X +8\n");
  CHECK(encode_wire(MotorCommand{Axis::Y, -20}) == "M Y -20\n");
  CHECK(encode_wire(DeviceCommand{"tv", "POWER"}) == "D tv POWER\n");
  CHECK(decode_wire("M X +8\n") == Command{MotorCommand{Axis::X, 8}});
  CHECK(decode_wire("D tv POWER\n") == Command{DeviceCommand{"tv", "POWER"}});

  for (const char* bad : {"M Z +8\n", "M X 8\n", "M X +8", "M X +8\n\n", "M X +0\n", "M X +08\n", "M X +1000\n",
                          "M X +21\n", "M  X +8\n", "m X +8\n", "X\n", "", "D tv\n", "D tv POWER \n",
                          "D tv P-OWER\n", "D 12345678901234567 POWER\n", "M X +8\r\n"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(decode_wire(bad), ProtocolError);
  }
  CHECK(decode_wire("M X +150\n", 999) == Command{MotorCommand{Axis::X, 150}});
  CHECK_THROWS_AS(encode_wire(MotorCommand{Axis::X, 0}), ProtocolError);
  CHECK_THROWS_AS(encode_wire(DeviceCommand{"", "POWER"}), ProtocolError);

  try {
    decode_wire("M Z +8\n");
  } catch (const ProtocolError& e) {
    CHECK(e.offset() == 2);
  }
}

TEST_CASE("property: wire round trip and fuzz") {
  std::mt19937_64 rng(63);
  for (int i = 0; i < 5000; ++i) {
    const auto cmd = testing::random_command(rng, 20);
    const auto bytes = encode_wire(cmd);
    CHECK(decode_wire(bytes) == cmd);
    CHECK(encode_wire(decode_wire(bytes)) == bytes);
  }
  for (int i = 0; i < 5000; ++i) {
    const auto line = testing::fuzz_line(rng, 20);
    std::optional<Command> cmd;
    try {
      cmd = decode_wire(line);
    } catch (const ProtocolError&) {
      continue;
    }
    CHECK(encode_wire(*cmd) == line);
  }
}

TEST_CASE("transport: serial path appends lines") {
  const auto path = std::filesystem::temp_directory_path() / "palmctl_serial_test.txt";
  std::filesystem::remove(path);
  {
    auto t = open_transport("serial:" + path.string());
    t->write(encode_wire(MotorCommand{Axis::X, 3}));
    t->write(encode_wire(DeviceCommand{"tv", "POWER"}));
  }
  std::ifstream in(path);
  const std::string got((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::filesystem::remove(path);
  CHECK(got == "M X +3\nD tv POWER\n");
}

TEST_CASE("transport: tcp delivers bytes in order") {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  REQUIRE(listener >= 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  REQUIRE(::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  REQUIRE(::listen(listener, 1) == 0);
  socklen_t len = sizeof addr;
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  const int port = ntohs(addr.sin_port);

  std::string received;
  std::thread server([&] {
    const int conn = ::accept(listener, nullptr, nullptr);
    char buf[256];
    ssize_t n;
    while ((n = ::read(conn, buf, sizeof buf)) > 0) received.append(buf, static_cast<std::size_t>(n));
    ::close(conn);
  });
  {
    auto t = open_transport("tcp://127.0.0.1:" + std::to_string(port));
    t->write("M X +8\n");
    t->write("D tv POWER\n");
  }
  server.join();
  ::close(listener);
  CHECK(received == "M X +8\nD tv POWER\n");

  CHECK_THROWS_AS(open_transport("udp://x:1"), TransportError);
  CHECK_THROWS_AS(open_transport("tcp://127.0.0.1"), TransportError);
  CHECK_THROWS_AS(open_transport("tcp://127.0.0.1:0"), TransportError);
  CHECK_THROWS_AS(open_transport("serial:/nonexistent-dir/tty"), TransportError);
}
