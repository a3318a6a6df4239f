#pragma once

// Thin POSIX TCP wrapper with length-prefixed framing. One frame = u32
// little-endian body size + body. Sending and receiving on the same socket
// from two different threads is safe (the kernel serializes each side);
// concurrent senders are not.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace onloadrt {

constexpr size_t kMaxFrameBytes = size_t(1) << 28;  // 256 MiB sanity cap

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }

  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  // Half-close / hard-stop from another thread: unblocks pending recv.
  void shutdown_both() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void send_all(const uint8_t* p, size_t n) {
    while (n > 0) {
      ssize_t k = ::send(fd_, p, n, MSG_NOSIGNAL);
      if (k <= 0) throw NetworkError("send failed: connection lost");
      p += k;
      n -= size_t(k);
    }
  }

  void send_frame(const std::vector<uint8_t>& body) {
    if (body.size() > kMaxFrameBytes)
      throw MalformedMessage("frame exceeds size cap");
    uint8_t hdr[4];
    uint32_t n = static_cast<uint32_t>(body.size());
    for (int i = 0; i < 4; ++i) hdr[i] = uint8_t(n >> (8 * i));
    send_all(hdr, 4);
    send_all(body.data(), body.size());
  }

  // Blocks for a whole frame. Returns nullopt if the peer closed cleanly at
  // a frame boundary; truncation inside a frame is an error.
  std::optional<std::vector<uint8_t>> recv_frame() {
    uint8_t hdr[4];
    size_t got = recv_upto(hdr, 4);
    if (got == 0) return std::nullopt;
    if (got < 4) throw NetworkError("connection lost inside frame header");
    uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n |= uint32_t(hdr[i]) << (8 * i);
    if (n > kMaxFrameBytes) throw MalformedMessage("frame exceeds size cap");
    std::vector<uint8_t> body(n);
    if (recv_upto(body.data(), n) < n)
      throw NetworkError("connection lost inside frame body");
    return body;
  }

 private:
  // Reads exactly n bytes unless EOF arrives first; returns bytes read.
  size_t recv_upto(uint8_t* p, size_t n) {
    size_t off = 0;
    while (off < n) {
      ssize_t k = ::recv(fd_, p + off, n - off, 0);
      if (k == 0) break;
      if (k < 0) throw NetworkError("recv failed");
      off += size_t(k);
    }
    return off;
  }

  int fd_ = -1;
};

inline Socket connect_tcp(const std::string& host, uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  std::string service = std::to_string(port);
  if (getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || !res)
    throw NetworkError("cannot resolve " + host);
  int fd = -1;
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(res);
  if (fd < 0)
    throw NetworkError("cannot connect to " + host + ":" + service);
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return Socket(fd);
}

class Listener {
 public:
  explicit Listener(uint16_t port, const std::string& bind_host = "0.0.0.0") {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw NetworkError("cannot create listening socket");
    int one = 1;
    setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (inet_pton(AF_INET, bind_host.c_str(), &addr.sin_addr) != 1)
      throw NetworkError("bad bind address: " + bind_host);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd_);
      throw NetworkError("cannot bind port " + std::to_string(port));
    }
    if (::listen(fd_, 16) != 0) {
      ::close(fd_);
      throw NetworkError("listen failed");
    }
  }

  ~Listener() { close(); }
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  uint16_t port() const {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    if (getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0)
      throw NetworkError("getsockname failed");
    return ntohs(addr.sin_port);
  }

  // Blocks; returns an invalid socket once close() is called elsewhere.
  Socket accept() {
    int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) return Socket();
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return Socket(fd);
  }

  void close() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_ = -1;
};

}  // namespace onloadrt
