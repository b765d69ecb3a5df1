#include <cerrno>
#include <charconv>
#include <cstring>

#include <fcntl.h>
#include <netdb.h>
#include <sys/socket.h>
#include <termios.h>
#include <unistd.h>

#include "palmctl/device.hpp"

namespace palmctl::device {

namespace {

class FdTransport : public Transport {
 public:
  FdTransport(int fd, std::string name) : fd_(fd), name_(std::move(name)) {}
  FdTransport(const FdTransport&) = delete;
  FdTransport& operator=(const FdTransport&) = delete;
  ~FdTransport() override { ::close(fd_); }

  void write(std::string_view bytes) override {
    while (!bytes.empty()) {
      const ssize_t n = ::write(fd_, bytes.data(), bytes.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(name_ + ": " + std::strerror(errno));
      }
      bytes.remove_prefix(static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string name_;
};

std::unique_ptr<Transport> open_tcp(std::string_view hostport, std::string_view uri) {
  const auto colon = hostport.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == hostport.size()) {
    throw TransportError(std::string(uri) + ": expected tcp://host:port");
  }
  const std::string host(hostport.substr(0, colon));
  const std::string port(hostport.substr(colon + 1));
  int port_num = 0;
  auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), port_num);
  if (ec != std::errc{} || ptr != port.data() + port.size() || port_num <= 0 || port_num > 65535) {
    throw TransportError(std::string(uri) + ": invalid port");
  }

  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw TransportError(std::string(uri) + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw TransportError(std::string(uri) + ": connection failed");
  return std::make_unique<FdTransport>(fd, std::string(uri));
}

std::unique_ptr<Transport> open_serial(const std::string& path, std::string_view uri) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_NOCTTY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw TransportError(std::string(uri) + ": " + std::strerror(errno));
  if (::isatty(fd)) {
    termios tio{};
    if (::tcgetattr(fd, &tio) == 0) {
      ::cfmakeraw(&tio);
      ::cfsetospeed(&tio, B115200);
      ::cfsetispeed(&tio, B115200);
      ::tcsetattr(fd, TCSANOW, &tio);
    }
  }
  return std::make_unique<FdTransport>(fd, std::string(uri));
}

}  // namespace

std::unique_ptr<Transport> open_transport(std::string_view uri) {
  constexpr std::string_view tcp = "tcp://";
  constexpr std::string_view serial = "serial:";
  if (uri.starts_with(tcp)) return open_tcp(uri.substr(tcp.size()), uri);
  if (uri.starts_with(serial) && uri.size() > serial.size()) {
    return open_serial(std::string(uri.substr(serial.size())), uri);
  }
  throw TransportError(std::string(uri) + ": expected tcp://host:port or serial:<path>");
}

}  // namespace palmctl::device
