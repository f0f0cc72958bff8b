// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#pragma once

// Threshold filter for server replies: track each outstanding request at the
// gateway, measure the claimed offset and delay of the matching reply, and
// drop anything whose combined magnitude exceeds the threshold. Unmatched
// server traffic and broadcasts are dropped outright; client requests always
// pass.

#include <cstdint>
#include <cstdio>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include "tempest/ntp_codec.hpp"
#include "tempest/timekeeping.hpp"

namespace tempest {

enum class FilterMode { Inline, Mirror };

struct FilterConfig {
  double threshold_s = 240;  // "more than four minutes", strict
  std::uint16_t proxy_port = 2100;
  FilterMode mode = FilterMode::Inline;
  double record_ttl_s = 16;
};

enum class Verdict { Pass, Drop };

enum class FilterReason {
  Ok,
  OverThreshold,
  NoExchange,
  UnsolicitedBroadcast,
  ClientPassthrough,
};

inline const char* to_string(Verdict v) { return v == Verdict::Pass ? "pass" : "drop"; }

inline const char* to_string(FilterReason r) {
  switch (r) {
    case FilterReason::Ok: return "ok";
    case FilterReason::OverThreshold: return "over_threshold";
    case FilterReason::NoExchange: return "no_exchange";
    case FilterReason::UnsolicitedBroadcast: return "unsolicited_broadcast";
    case FilterReason::ClientPassthrough: return "client_passthrough";
  }
  return "unknown";
}

struct FilterDecision {
  Verdict verdict = Verdict::Drop;
  double offset_s = 0;
  double delay_s = 0;
  double combined_s = 0;
  double threshold_s = 0;
  FilterReason reason = FilterReason::NoExchange;
};

struct ExchangeRecord {
  NtpTimestamp request_transmit_ts;
  std::string client_addr;
  double t1_filter = 0;    // filter clock at request transit
  double created_at = 0;   // same clock, for ttl expiry
};

struct ReplyEvaluation {
  FilterDecision decision;
  std::string client_addr;  // empty when no exchange matched
};

// Stable machine-readable order: verdict, client, offset, delay, combined,
// threshold, reason.
inline std::string decision_line(const FilterDecision& d, const std::string& client_addr) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%.6f,%s", to_string(d.verdict),
                client_addr.c_str(), d.offset_s, d.delay_s, d.combined_s, d.threshold_s,
                to_string(d.reason));
  return buf;
}

struct FilterStats {
  std::uint64_t requests_noted = 0;
  std::uint64_t replies_passed = 0;
  std::uint64_t replies_dropped_over_threshold = 0;
  std::uint64_t dropped_no_exchange = 0;
  std::uint64_t dropped_broadcast = 0;
  std::uint64_t client_passthrough = 0;
};

class Filter {
 public:
  Filter() = default;
  explicit Filter(FilterConfig config) : config_(config) {}

  const FilterConfig& config() const { return config_; }

  void note_request(const SntpPacket& request, const std::string& client_addr,
                    double filter_now) {
    if (request.mode != NtpMode::Client) return;
    std::lock_guard lock(mu_);
    purge_locked(filter_now);
    table_[key_of(request.transmit_ts, client_addr)] =
        ExchangeRecord{request.transmit_ts, client_addr, filter_now, filter_now};
    ++stats_.requests_noted;
  }

  // Matches the reply's originate timestamp to a recorded exchange. Claimed
  // endpoints come from the exchange; the elapsed time between request and
  // reply transit is measured on the filter's own clock.
  ReplyEvaluation evaluate_reply(const SntpPacket& reply, double filter_now) {
    std::lock_guard lock(mu_);
    purge_locked(filter_now);
    auto it = table_.lower_bound(key_of(reply.originate_ts, ""));
    if (it == table_.end() || it->second.request_transmit_ts != reply.originate_ts) {
      ++stats_.dropped_no_exchange;
      return {FilterDecision{Verdict::Drop, 0, 0, 0, config_.threshold_s,
                             FilterReason::NoExchange},
              ""};
    }
    const ExchangeRecord& rec = it->second;
    double t1 = rec.request_transmit_ts.to_seconds();
    double t4 = t1 + (filter_now - rec.t1_filter);
    auto od = compute_offset_delay(t1, reply.receive_ts.to_seconds(),
                                   reply.transmit_ts.to_seconds(), t4);
    double combined = std::fabs(od.offset_s) + std::max(od.delay_s, 0.0);
    FilterDecision d;
    d.offset_s = od.offset_s;
    d.delay_s = od.delay_s;
    d.combined_s = combined;
    d.threshold_s = config_.threshold_s;
    std::string client = rec.client_addr;
    if (combined > config_.threshold_s) {
      d.verdict = Verdict::Drop;
      d.reason = FilterReason::OverThreshold;
      ++stats_.replies_dropped_over_threshold;
      // Keep the record: a genuine reply to the same request may still come.
    } else {
      d.verdict = Verdict::Pass;
      d.reason = FilterReason::Ok;
      ++stats_.replies_passed;
      table_.erase(it);
    }
    return {d, client};
  }

  // Broadcasts and server replies with no exchange are default-deny; client
  // requests are never dropped.
  FilterDecision evaluate_unsolicited(const SntpPacket& pkt) {
    std::lock_guard lock(mu_);
    FilterDecision d;
    d.threshold_s = config_.threshold_s;
    switch (pkt.mode) {
      case NtpMode::Client:
        d.verdict = Verdict::Pass;
        d.reason = FilterReason::ClientPassthrough;
        ++stats_.client_passthrough;
        break;
      case NtpMode::Broadcast:
        d.verdict = Verdict::Drop;
        d.reason = FilterReason::UnsolicitedBroadcast;
        ++stats_.dropped_broadcast;
        break;
      case NtpMode::Server:
        d.verdict = Verdict::Drop;
        d.reason = FilterReason::NoExchange;
        ++stats_.dropped_no_exchange;
        break;
    }
    return d;
  }

  FilterStats stats() const {
    std::lock_guard lock(mu_);
    return stats_;
  }

  std::size_t table_size() const {
    std::lock_guard lock(mu_);
    return table_.size();
  }

 private:
  using Key = std::pair<std::uint64_t, std::string>;

  static Key key_of(const NtpTimestamp& ts, const std::string& addr) {
    return {(static_cast<std::uint64_t>(ts.seconds) << 32) | ts.fraction, addr};
  }

  void purge_locked(double filter_now) {
    for (auto it = table_.begin(); it != table_.end();) {
      if (filter_now - it->second.created_at > config_.record_ttl_s) {
        it = table_.erase(it);
      } else {
        ++it;
      }
    }
  }

  FilterConfig config_;
  mutable std::mutex mu_;
  std::map<Key, ExchangeRecord> table_;
  FilterStats stats_;
};

}  // namespace tempest
