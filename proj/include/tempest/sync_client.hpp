// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#pragma once

// One-shot SNTP client modeled on the Windows time service: long poll cycles,
// a short listen window, originate-timestamp matching, and a fixed server
// preference order with fallback.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tempest/ntp_codec.hpp"
#include "tempest/timekeeping.hpp"

namespace tempest {

enum class ServerRole { DomainController, DnsServer, ExternalServer };

inline const char* to_string(ServerRole r) {
  switch (r) {
    case ServerRole::DomainController: return "domain_controller";
    case ServerRole::DnsServer: return "dns_server";
    case ServerRole::ExternalServer: return "external_server";
  }
  return "unknown";
}

struct SyncPolicy {
  double poll_interval_s = 604800;  // standalone weekly cycle
  double listen_window_s = 5;
  bool require_originate_match = true;
  bool accept_broadcast = false;
  // Compare originate timestamps truncated to whole milliseconds instead of
  // at full 2^-32 precision.
  bool originate_match_ms = false;
  // Accepted but unused; signed frames are carried opaquely end to end.
  bool expect_signed = false;
  std::vector<ServerRole> server_preference = {
      ServerRole::DomainController, ServerRole::DnsServer, ServerRole::ExternalServer};

  double acceptance_duty_cycle() const { return listen_window_s / poll_interval_s; }
};

struct PendingRequest {
  NtpTimestamp sent_ts;          // exact wire value, the originate echo to expect
  double sent_at_client_time = 0;
  double expires_at_client_time = 0;
  std::string destination;
};

enum class RejectReason { NoPending, BadMode, WindowClosed, OriginateMismatch };

inline const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::NoPending: return "no_pending";
    case RejectReason::BadMode: return "bad_mode";
    case RejectReason::WindowClosed: return "window_closed";
    case RejectReason::OriginateMismatch: return "originate_mismatch";
  }
  return "unknown";
}

struct ReplyAccepted {
  SyncSample sample;
  double correction_s = 0;
};

struct ReplyRejected {
  RejectReason reason;
};

using ReplyOutcome = std::variant<ReplyAccepted, ReplyRejected>;

struct BroadcastIgnored {};

struct BroadcastAccepted {
  double implied_offset_s = 0;
};

using BroadcastOutcome = std::variant<BroadcastIgnored, BroadcastAccepted>;

struct PollRequest {
  SntpPacket packet;
  std::string destination;
  ServerRole destination_role;
};

class SyncClient {
 public:
  SyncClient() = default;
  SyncClient(SyncPolicy policy, std::map<ServerRole, std::string> servers)
      : policy_(std::move(policy)), servers_(std::move(servers)) {}

  const SyncPolicy& policy() const { return policy_; }
  const std::optional<PendingRequest>& pending() const { return pending_; }

  // Emits one request toward the most preferred reachable server. A pending
  // request whose window has closed is abandoned; an open one blocks the poll.
  std::optional<PollRequest> begin_poll(
      double client_now, const std::function<bool(const std::string&)>& reachable) {
    if (pending_) {
      if (client_now <= pending_->expires_at_client_time) return std::nullopt;
      pending_.reset();
    }
    for (ServerRole role : policy_.server_preference) {
      auto it = servers_.find(role);
      if (it == servers_.end()) continue;
      if (!reachable(it->second)) continue;
      SntpPacket req;
      req.mode = NtpMode::Client;
      req.version = 3;
      req.poll_exponent = poll_exponent_hint();
      req.transmit_ts = NtpTimestamp::from_seconds(client_now);
      pending_ = PendingRequest{req.transmit_ts, client_now,
                                client_now + policy_.listen_window_s, it->second};
      return PollRequest{req, it->second, role};
    }
    return std::nullopt;
  }

  ReplyOutcome handle_reply(const SntpPacket& reply, double arrival_client_time) {
    if (!pending_) return ReplyRejected{RejectReason::NoPending};
    if (reply.mode != NtpMode::Server) return ReplyRejected{RejectReason::BadMode};
    if (arrival_client_time > pending_->expires_at_client_time) {
      return ReplyRejected{RejectReason::WindowClosed};
    }
    if (policy_.require_originate_match && !originate_matches(reply.originate_ts)) {
      return ReplyRejected{RejectReason::OriginateMismatch};
    }
    SyncSample s;
    s.t1 = pending_->sent_at_client_time;
    s.t2 = reply.receive_ts.to_seconds();
    s.t3 = reply.transmit_ts.to_seconds();
    s.t4 = arrival_client_time;
    auto od = compute_offset_delay(s.t1, s.t2, s.t3, s.t4);
    s.offset_s = od.offset_s;
    s.delay_s = od.delay_s;
    pending_.reset();
    return ReplyAccepted{s, s.offset_s};
  }

  BroadcastOutcome on_broadcast(const SntpPacket& pkt, double arrival_client_time) {
    if (!policy_.accept_broadcast) return BroadcastIgnored{};
    return BroadcastAccepted{pkt.transmit_ts.to_seconds() - arrival_client_time};
  }

 private:
  bool originate_matches(const NtpTimestamp& originate) const {
    if (!policy_.originate_match_ms) return originate == pending_->sent_ts;
    auto to_ms = [](const NtpTimestamp& ts) {
      return static_cast<std::uint64_t>(ts.seconds) * 1000 +
             static_cast<std::uint64_t>(ts.fraction) * 1000 / 4294967296u;
    };
    return to_ms(originate) == to_ms(pending_->sent_ts);
  }

  std::int8_t poll_exponent_hint() const {
    double e = std::log2(std::max(1.0, policy_.poll_interval_s));
    return static_cast<std::int8_t>(std::min(17.0, std::max(0.0, std::floor(e))));
  }

  SyncPolicy policy_;
  std::map<ServerRole, std::string> servers_;
  std::optional<PendingRequest> pending_;
};

}  // namespace tempest
