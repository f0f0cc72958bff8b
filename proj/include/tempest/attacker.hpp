// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#pragma once

// Attack behaviors: broadcast floods, on-path spoofed replies with a chosen
// per-reply offset, the same mechanism driven slowly to stay under a filter
// threshold, and DNS-level redirection of a victim's time source.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "tempest/ntp_codec.hpp"

namespace tempest {

struct BroadcastFlood {
  double packets_per_second = 1000;
  double claimed_offset_s = 240;
  double tick_s = 1.0;  // emission granularity
};

struct SpoofedReply {
  std::string target;
  double per_reply_offset_s = 240;
  bool observes_requests = true;
  bool spoof_source = true;
  // Delay the victim should compute for the forged exchange. Kept near zero
  // so the offset term dominates any threshold evaluation.
  double implied_delay_s = 0;
  // The attacker's estimate of the victim-measured round trip; when it
  // matches the real path, the victim-computed offset is exact.
  double assumed_rtt_s = 0;
};

struct SlowDrift {
  std::string target;
  double per_interval_offset_s = 30;
  bool observes_requests = true;
  bool spoof_source = true;
  double implied_delay_s = 0;
  double assumed_rtt_s = 0;
};

struct DnsRedirect {
  std::string victim;
  std::string attacker_server;
};

using AttackVariant = std::variant<BroadcastFlood, SpoofedReply, SlowDrift, DnsRedirect>;

struct AttackSpec {
  AttackVariant variant;
  double start_s = 0;
  double stop_s = std::numeric_limits<double>::infinity();
  // How long after a victim transmit the attacker's tap sees the request.
  double observe_latency_s = 0.002;

  bool active_at(double t) const { return t >= start_s && t < stop_s; }
};

// Builds the forged server reply for an observed client request. The victim
// computes offset = X exactly and delay = implied_delay when assumed_rtt
// matches the real round trip:
//   t2 = t1 + X + d/2,  t3 = t2 + (rtt - d).
// Requires t1 + X + d/2 > 0: a claimed time before the wire format's era
// start is unencodable (the timestamp pins to zero and the lie is obvious).
inline SntpPacket make_spoofed_reply(const SntpPacket& request, double offset_s,
                                     double implied_delay_s, double assumed_rtt_s) {
  SntpPacket reply;
  reply.mode = NtpMode::Server;
  reply.version = request.version;
  reply.stratum = 1;
  reply.reference_id = {'A', 'T', 'K', 0};
  reply.originate_ts = request.transmit_ts;
  double t1 = request.transmit_ts.to_seconds();
  double t2 = t1 + offset_s + implied_delay_s / 2.0;
  double t3 = t2 + (assumed_rtt_s - implied_delay_s);
  reply.receive_ts = NtpTimestamp::from_seconds(t2);
  reply.transmit_ts = NtpTimestamp::from_seconds(t3);
  reply.reference_ts = reply.receive_ts;
  return reply;
}

// One flood tick: floor(rate * tick) broadcast frames with randomized
// originate guesses. The claimed time rides the attacker's offset goal.
inline std::vector<SntpPacket> flood_tick(const BroadcastFlood& flood, double tick_s,
                                          double true_time_s, std::mt19937_64& rng) {
  std::vector<SntpPacket> out;
  auto n = static_cast<std::uint64_t>(std::floor(flood.packets_per_second * tick_s));
  out.reserve(n);
  std::uniform_real_distribution<double> guess(0.0, true_time_s + 1.0);
  std::uniform_real_distribution<double> jitter(0.0, tick_s);
  for (std::uint64_t i = 0; i < n; ++i) {
    SntpPacket p;
    p.mode = NtpMode::Broadcast;
    p.version = 3;
    p.stratum = 1;
    p.reference_id = {'F', 'L', 'D', 0};
    p.originate_ts = NtpTimestamp::from_seconds(guess(rng));
    p.transmit_ts =
        NtpTimestamp::from_seconds(true_time_s + flood.claimed_offset_s + jitter(rng));
    p.reference_ts = p.transmit_ts;
    out.push_back(p);
  }
  return out;
}

}  // namespace tempest
