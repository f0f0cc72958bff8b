// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#pragma once

// Inline UDP filtering proxy. ProxyEngine is the socket-free datapath — the
// same decode / note_request / evaluate_reply sequence the simulator uses —
// with an injectable clock so decisions can be replayed and compared offline.
// UdpProxy wraps it in two POSIX datagram sockets.
//
// Forwarded datagrams are always the original bytes, never a re-encode.
// Deployment assumption: the proxy host's own clock is trustworthy (it is the
// filter's reference and is expected to be disciplined out-of-band).

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "tempest/defense.hpp"
#include "tempest/log.hpp"
#include "tempest/ntp_codec.hpp"
#include "tempest/result.hpp"

namespace tempest {

struct ProxyRuntimeConfig {
  std::string listen_host = "0.0.0.0";
  std::uint16_t listen_port = 2100;
  std::string upstream_host;
  std::uint16_t upstream_port = 123;
  double threshold_s = 240.0;
  std::string log_path;        // empty: decision lines go to stderr
  double stats_interval_s = 60.0;
};

inline std::vector<std::string> validate(const ProxyRuntimeConfig& cfg) {
  std::vector<std::string> out;
  if (!(cfg.threshold_s > 0)) out.push_back("threshold_s: must be positive");
  if (cfg.upstream_host.empty()) out.push_back("upstream: host missing");
  if (cfg.listen_host == cfg.upstream_host && cfg.listen_port == cfg.upstream_port) {
    out.push_back("listen and upstream endpoints must differ");
  }
  if (cfg.stats_interval_s <= 0) out.push_back("stats_interval_s: must be positive");
  return out;
}

struct ProxyCounters {
  std::uint64_t client_datagrams = 0;
  std::uint64_t client_forwarded = 0;
  std::uint64_t upstream_datagrams = 0;
  std::uint64_t replies_forwarded = 0;
  std::uint64_t replies_dropped = 0;
  std::uint64_t decode_errors = 0;
  std::uint64_t unroutable = 0;  // passed but the client address is unknown
};

// The socket-free proxy datapath around one Filter instance.
class ProxyEngine {
 public:
  ProxyEngine(FilterConfig config, std::function<double()> now_fn)
      : filter_(config), now_fn_(std::move(now_fn)) {}

  // Datagram arriving on the client-facing socket. Returns true when it
  // should be forwarded upstream (as the exact original bytes).
  bool on_client_datagram(std::span<const std::uint8_t> datagram,
                          const std::string& client_addr) {
    std::lock_guard<std::mutex> lk(mu_);
    ++counters_.client_datagrams;
    auto decoded = decode(datagram);
    if (!decoded.ok()) {
      ++counters_.decode_errors;
      TEMPEST_LOG_DEBUG("client datagram from %s: decode failed (%s)", client_addr.c_str(),
                        to_string(decoded.error()));
      return false;
    }
    filter_.note_request(decoded.value(), client_addr, now_fn_());
    ++counters_.client_forwarded;
    return true;
  }

  struct UpstreamResult {
    bool forward = false;
    std::string client_addr;                  // destination when forward is true
    std::optional<FilterDecision> decision;   // absent on decode failure
  };

  // Datagram arriving from the upstream server.
  UpstreamResult on_upstream_datagram(std::span<const std::uint8_t> datagram) {
    std::lock_guard<std::mutex> lk(mu_);
    ++counters_.upstream_datagrams;
    auto decoded = decode(datagram);
    if (!decoded.ok()) {
      ++counters_.decode_errors;
      TEMPEST_LOG_DEBUG("upstream datagram: decode failed (%s)", to_string(decoded.error()));
      return {};
    }
    const SntpPacket& pkt = decoded.value();
    if (pkt.mode != NtpMode::Server) {
      FilterDecision d = filter_.evaluate_unsolicited(pkt);
      ++counters_.replies_dropped;
      return {false, "", d};
    }
    ReplyEvaluation ev = filter_.evaluate_reply(pkt, now_fn_());
    if (ev.decision.verdict != Verdict::Pass) {
      ++counters_.replies_dropped;
      return {false, ev.client_addr, ev.decision};
    }
    if (ev.client_addr.empty()) {
      ++counters_.unroutable;
      return {false, "", ev.decision};
    }
    ++counters_.replies_forwarded;
    return {true, ev.client_addr, ev.decision};
  }

  ProxyCounters counters() const {
    std::lock_guard<std::mutex> lk(mu_);
    return counters_;
  }

  FilterStats filter_stats() const { return filter_.stats(); }

 private:
  Filter filter_;
  std::function<double()> now_fn_;
  mutable std::mutex mu_;
  ProxyCounters counters_;
};

// Blocking UDP proxy loop. run() serves until stop() is called (stop() is
// async-signal-safe: it only writes one byte to a pipe).
class UdpProxy {
 public:
  explicit UdpProxy(ProxyRuntimeConfig cfg)
      : cfg_(std::move(cfg)),
        engine_(FilterConfig{cfg_.threshold_s, cfg_.listen_port, FilterMode::Inline},
                [] { return host_clock_now(); }) {}

  ~UdpProxy() { close_all(); }

  // Seconds on the host clock; the filter's time reference.
  static double host_clock_now() {
    auto now = std::chrono::system_clock::now().time_since_epoch();
    return std::chrono::duration<double>(now).count();
  }

  const ProxyEngine& engine() const { return engine_; }
  std::uint16_t bound_port() const { return bound_port_; }

  Result<bool, std::string> start() {
    auto violations = validate(cfg_);
    if (!violations.empty()) return violations.front();

    if (log_ == nullptr) {
      if (cfg_.log_path.empty()) {
        log_ = stderr;
      } else {
        log_ = std::fopen(cfg_.log_path.c_str(), "a");
        if (!log_) return std::string("cannot open log: ") + cfg_.log_path;
        owns_log_ = true;
      }
    }

    sockaddr_in addr{};
    if (auto err = resolve(cfg_.listen_host, cfg_.listen_port, addr)) return *err;
    listen_fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (listen_fd_ < 0) return std::string("socket: ") + std::strerror(errno);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      return std::string("bind: ") + std::strerror(errno);
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    bound_port_ = ntohs(addr.sin_port);

    if (auto err = resolve(cfg_.upstream_host, cfg_.upstream_port, upstream_addr_)) {
      return *err;
    }
    upstream_fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (upstream_fd_ < 0) return std::string("socket: ") + std::strerror(errno);
    if (::connect(upstream_fd_, reinterpret_cast<sockaddr*>(&upstream_addr_),
                  sizeof(upstream_addr_)) != 0) {
      return std::string("connect upstream: ") + std::strerror(errno);
    }

    if (::pipe(wake_pipe_) != 0) return std::string("pipe: ") + std::strerror(errno);

    TEMPEST_LOG_INFO("proxy listening on %s:%u, upstream %s:%u, threshold %.3f s",
                     cfg_.listen_host.c_str(), bound_port_, cfg_.upstream_host.c_str(),
                     cfg_.upstream_port, cfg_.threshold_s);
    return true;
  }

  // Serves until stop(). Returns the error text on a fatal socket failure.
  Result<bool, std::string> run() {
    if (listen_fd_ < 0) {
      auto st = start();
      if (!st.ok()) return st.error();
    }
    double next_stats = host_clock_now() + cfg_.stats_interval_s;

    std::uint8_t buf[2048];
    while (!stopping_) {
      pollfd fds[3] = {{listen_fd_, POLLIN, 0}, {upstream_fd_, POLLIN, 0},
                       {wake_pipe_[0], POLLIN, 0}};
      double wait_s = next_stats - host_clock_now();
      int timeout_ms = wait_s <= 0 ? 0 : static_cast<int>(wait_s * 1000) + 1;
      int rc = ::poll(fds, 3, timeout_ms);
      if (rc < 0) {
        if (errno == EINTR) continue;
        return std::string("poll: ") + std::strerror(errno);
      }

      if (host_clock_now() >= next_stats) {
        flush_stats();
        next_stats += cfg_.stats_interval_s;
      }
      if (rc == 0) continue;

      if (fds[2].revents & POLLIN) break;

      if (fds[0].revents & POLLIN) {
        sockaddr_in from{};
        socklen_t fromlen = sizeof(from);
        ssize_t n = ::recvfrom(listen_fd_, buf, sizeof(buf), 0,
                               reinterpret_cast<sockaddr*>(&from), &fromlen);
        if (n > 0) {
          std::string key = addr_key(from);
          {
            std::lock_guard<std::mutex> lk(clients_mu_);
            clients_[key] = from;
          }
          if (engine_.on_client_datagram({buf, static_cast<std::size_t>(n)}, key)) {
            ::send(upstream_fd_, buf, static_cast<std::size_t>(n), 0);
          }
        }
      }

      if (fds[1].revents & POLLIN) {
        ssize_t n = ::recv(upstream_fd_, buf, sizeof(buf), 0);
        if (n > 0) {
          auto res = engine_.on_upstream_datagram({buf, static_cast<std::size_t>(n)});
          if (res.decision) {
            std::fprintf(log_, "%s\n",
                         decision_line(*res.decision, res.client_addr).c_str());
            std::fflush(log_);
          }
          if (res.forward) {
            sockaddr_in to{};
            bool found = false;
            {
              std::lock_guard<std::mutex> lk(clients_mu_);
              auto it = clients_.find(res.client_addr);
              if (it != clients_.end()) {
                to = it->second;
                found = true;
              }
            }
            if (found) {
              ::sendto(listen_fd_, buf, static_cast<std::size_t>(n), 0,
                       reinterpret_cast<sockaddr*>(&to), sizeof(to));
            }
          }
        }
      }
    }

    flush_stats();
    return true;
  }

  void stop() {
    stopping_ = true;
    if (wake_pipe_[1] >= 0) {
      char b = 0;
      [[maybe_unused]] ssize_t n = ::write(wake_pipe_[1], &b, 1);
    }
  }

 private:
  // IPv4 resolution via getaddrinfo; fills `out` or returns the error text.
  static std::optional<std::string> resolve(const std::string& host, std::uint16_t port,
                                            sockaddr_in& out) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_DGRAM;
    addrinfo* res = nullptr;
    int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res);
    if (rc != 0 || res == nullptr) {
      return std::string("cannot resolve ") + host + ": " + gai_strerror(rc);
    }
    std::memcpy(&out, res->ai_addr, sizeof(sockaddr_in));
    out.sin_port = htons(port);
    ::freeaddrinfo(res);
    return std::nullopt;
  }

  static std::string addr_key(const sockaddr_in& a) {
    char host[INET_ADDRSTRLEN] = {0};
    inet_ntop(AF_INET, &a.sin_addr, host, sizeof(host));
    return std::string(host) + ':' + std::to_string(ntohs(a.sin_port));
  }

  void flush_stats() {
    ProxyCounters c = engine_.counters();
    std::fprintf(log_,
                 "stats,client_in=%llu,client_fwd=%llu,upstream_in=%llu,replies_fwd=%llu,"
                 "replies_dropped=%llu,decode_errors=%llu,unroutable=%llu\n",
                 static_cast<unsigned long long>(c.client_datagrams),
                 static_cast<unsigned long long>(c.client_forwarded),
                 static_cast<unsigned long long>(c.upstream_datagrams),
                 static_cast<unsigned long long>(c.replies_forwarded),
                 static_cast<unsigned long long>(c.replies_dropped),
                 static_cast<unsigned long long>(c.decode_errors),
                 static_cast<unsigned long long>(c.unroutable));
    std::fflush(log_);
  }

  void close_all() {
    for (int* fd : {&listen_fd_, &upstream_fd_, &wake_pipe_[0], &wake_pipe_[1]}) {
      if (*fd >= 0) {
        ::close(*fd);
        *fd = -1;
      }
    }
    if (owns_log_ && log_) std::fclose(log_);
    log_ = nullptr;
  }

  ProxyRuntimeConfig cfg_;
  ProxyEngine engine_;
  int listen_fd_ = -1;
  int upstream_fd_ = -1;
  int wake_pipe_[2] = {-1, -1};
  std::uint16_t bound_port_ = 0;
  sockaddr_in upstream_addr_{};
  std::map<std::string, sockaddr_in> clients_;
  std::mutex clients_mu_;
  volatile bool stopping_ = false;
  std::FILE* log_ = nullptr;
  bool owns_log_ = false;
};

}  // namespace tempest
