// Copyright (c) the ms2 contributors.
// SPDX-License-Identifier: Apache-2.0

// IPv4 datagram transport for the authoritative server: a thin RAII socket
// plus a fixed-tick serve loop. Endpoints use the same "ip:port" strings the
// server keys its client table by.

#ifndef MS2_UDP_HPP
#define MS2_UDP_HPP

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <ms2/server.hpp>

namespace ms2::udp {

inline constexpr std::size_t kMaxDatagramBytes = 65535;

[[noreturn]] inline void throw_errno(const char* what) {
  throw std::system_error(errno, std::generic_category(), what);
}

// "ip:port" with a dotted-quad ip; a bare ":port" binds every interface.
inline sockaddr_in parse_endpoint(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) {
    throw ValidationError("address '" + addr + "' must be ip:port");
  }
  const std::string host = addr.substr(0, colon);
  const std::string port_text = addr.substr(colon + 1);
  if (port_text.empty() || port_text.size() > 5 ||
      port_text.find_first_not_of("0123456789") != std::string::npos) {
    throw ValidationError("address '" + addr + "' has an invalid port");
  }
  const unsigned long port = std::stoul(port_text);
  if (port > 65535) throw ValidationError("address '" + addr + "' has an invalid port");

  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(static_cast<std::uint16_t>(port));
  if (host.empty()) {
    sa.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) {
    throw ValidationError("address '" + addr + "' has an invalid IPv4 host");
  }
  return sa;
}

inline std::string endpoint_name(const sockaddr_in& sa) {
  char host[INET_ADDRSTRLEN] = {};
  inet_ntop(AF_INET, &sa.sin_addr, host, sizeof host);
  return std::string(host) + ':' + std::to_string(ntohs(sa.sin_port));
}

class Socket {
 public:
  // Unbound socket; the kernel assigns a source port on first send.
  Socket() : fd_(::socket(AF_INET, SOCK_DGRAM, 0)) {
    if (fd_ < 0) throw_errno("socket");
  }

  // Bound socket. Port 0 asks the kernel for an ephemeral port; read the
  // outcome back with local_name().
  explicit Socket(const std::string& bind_addr) : Socket() {
    const sockaddr_in sa = parse_endpoint(bind_addr);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0) {
      const int saved = errno;
      ::close(fd_);
      fd_ = -1;
      errno = saved;
      throw_errno("bind");
    }
  }

  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      if (fd_ >= 0) ::close(fd_);
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  ~Socket() {
    if (fd_ >= 0) ::close(fd_);
  }

  std::string local_name() const {
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len) != 0) {
      throw_errno("getsockname");
    }
    return endpoint_name(sa);
  }

  void send(const std::string& to, const std::vector<std::uint8_t>& datagram) {
    const sockaddr_in sa = parse_endpoint(to);
    const auto n = ::sendto(fd_, datagram.data(), datagram.size(), 0,
                            reinterpret_cast<const sockaddr*>(&sa), sizeof sa);
    if (n < 0) throw_errno("sendto");
  }

  // Waits up to timeout_ms for one datagram; nullopt on timeout or signal.
  std::optional<std::pair<std::vector<std::uint8_t>, std::string>> receive(int timeout_ms) {
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, timeout_ms);
    if (ready < 0) {
      if (errno == EINTR) return std::nullopt;
      throw_errno("poll");
    }
    if (ready == 0) return std::nullopt;

    std::vector<std::uint8_t> buf(kMaxDatagramBytes);
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    const auto n =
        ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&sa), &len);
    if (n < 0) {
      if (errno == EINTR) return std::nullopt;
      throw_errno("recvfrom");
    }
    buf.resize(static_cast<std::size_t>(n));
    return std::make_pair(std::move(buf), endpoint_name(sa));
  }

 private:
  int fd_;
};

// Single-threaded authoritative loop: drains the socket between tick
// deadlines (the kernel receive buffer is the ingest queue, the loop its one
// consumer), fires the tick on schedule, and pushes outbound datagrams.
// Returns the number of ticks executed. max_ticks == 0 runs until stop.
inline std::uint64_t serve(ServerCore& server, Socket& socket, const std::atomic<bool>& stop,
                           std::uint64_t max_ticks = 0) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const std::uint64_t period_us = 1000000ull / server.config().tick_rate_hz;
  const auto elapsed_us = [&] {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(clock::now() - start).count());
  };

  std::uint64_t ticks = 0;
  while (!stop.load(std::memory_order_relaxed) && (max_ticks == 0 || ticks < max_ticks)) {
    const auto deadline = start + std::chrono::microseconds((ticks + 1) * period_us);
    while (!stop.load(std::memory_order_relaxed)) {
      const auto now = clock::now();
      if (now >= deadline) break;
      const auto wait =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
      auto got = socket.receive(static_cast<int>(std::min<long long>(wait, 50)));
      if (!got) continue;
      for (const Outbound& out : server.ingest(got->first, got->second, elapsed_us())) {
        socket.send(out.to, out.datagram);
      }
    }
    if (stop.load(std::memory_order_relaxed)) break;
    for (const Outbound& out : server.tick(elapsed_us())) {
      socket.send(out.to, out.datagram);
    }
    ++ticks;
  }
  return ticks;
}

}  // namespace ms2::udp

#endif  // MS2_UDP_HPP
