// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#pragma once

// Run results: per-node counters, conservation totals, and time series,
// serializable as deterministic JSON or long-form CSV.

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace tempest {

// One (time, value) observation tagged with the node it belongs to.
struct SeriesPoint {
  double t_s = 0;
  std::string node;
  double value = 0;
};

// One labelled event (kerberos outcome, document probe, correction, crash).
struct EventPoint {
  double t_s = 0;
  std::string node;
  std::string label;   // e.g. "accept", "reject", "allowed", "denied:expired"
  double value = 0;    // label-specific payload (offset, skew, ...)
};

struct NodeMetrics {
  // Sync-client tallies.
  std::uint64_t polls_sent = 0;
  std::uint64_t replies_delivered = 0;
  std::uint64_t replies_accepted = 0;
  std::map<std::string, std::uint64_t> replies_rejected;  // keyed by reason
  std::uint64_t broadcasts_ignored = 0;
  std::uint64_t broadcasts_accepted = 0;
  double total_correction_s = 0;     // signed sum of applied corrections
  double max_abs_correction_s = 0;

  // Kerberos exchanges against the configured authority.
  std::uint64_t kerberos_accepts = 0;
  std::uint64_t kerberos_rejects = 0;
  double first_kerberos_reject_s = -1;  // -1 when none happened

  // Rights-managed document activity.
  std::uint64_t licenses_acquired = 0;
  std::uint64_t opens_allowed = 0;
  std::map<std::string, std::uint64_t> opens_denied;  // keyed by reason
  bool crashed = false;
  double crashed_at_s = -1;
  double clock_offset_at_end_s = 0;

  // Attacker tallies.
  std::uint64_t packets_injected = 0;
  std::uint64_t attack_replies_emitted = 0;
  std::uint64_t attack_replies_delivered = 0;
  std::uint64_t attack_replies_dropped = 0;

  // Filter tallies.
  std::uint64_t filter_requests_noted = 0;
  std::uint64_t filter_replies_passed = 0;
  std::uint64_t filter_replies_dropped = 0;
  std::uint64_t filter_broadcasts_dropped = 0;
  std::uint64_t filter_no_exchange_drops = 0;
};

struct Totals {
  std::uint64_t sent_total = 0;         // every packet handed to a link
  std::uint64_t delivered = 0;
  std::uint64_t lost_by_link = 0;
  std::uint64_t dropped_by_filter = 0;
  std::uint64_t in_flight_at_end = 0;   // still on the wire when time ran out
  std::uint64_t events_processed = 0;

  bool conserved() const {
    return sent_total == delivered + lost_by_link + dropped_by_filter + in_flight_at_end;
  }
};

struct MetricsReport {
  std::uint64_t seed = 0;
  double duration_s = 0;
  Totals totals;
  std::map<std::string, NodeMetrics> nodes;  // keyed by node id
  std::vector<SeriesPoint> clock_samples;    // periodic true offset per node
  std::vector<EventPoint> kerberos_checks;
  std::vector<EventPoint> access_checks;
  std::vector<EventPoint> corrections;       // one point per accepted reply
  std::vector<EventPoint> filter_decisions;  // one point per evaluated reply

  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;
};

inline nlohmann::ordered_json MetricsReport::to_json() const {
  using nlohmann::ordered_json;
  ordered_json j;
  j["seed"] = seed;
  j["duration_s"] = duration_s;

  ordered_json jt;
  jt["sent_total"] = totals.sent_total;
  jt["delivered"] = totals.delivered;
  jt["lost_by_link"] = totals.lost_by_link;
  jt["dropped_by_filter"] = totals.dropped_by_filter;
  jt["in_flight_at_end"] = totals.in_flight_at_end;
  jt["events_processed"] = totals.events_processed;
  jt["conserved"] = totals.conserved();
  j["totals"] = jt;

  ordered_json jn = ordered_json::object();
  for (const auto& [id, m] : nodes) {
    ordered_json e;
    e["polls_sent"] = m.polls_sent;
    e["replies_delivered"] = m.replies_delivered;
    e["replies_accepted"] = m.replies_accepted;
    e["replies_rejected"] = ordered_json(m.replies_rejected);
    e["broadcasts_ignored"] = m.broadcasts_ignored;
    e["broadcasts_accepted"] = m.broadcasts_accepted;
    e["total_correction_s"] = m.total_correction_s;
    e["max_abs_correction_s"] = m.max_abs_correction_s;
    e["kerberos_accepts"] = m.kerberos_accepts;
    e["kerberos_rejects"] = m.kerberos_rejects;
    e["first_kerberos_reject_s"] = m.first_kerberos_reject_s;
    e["licenses_acquired"] = m.licenses_acquired;
    e["opens_allowed"] = m.opens_allowed;
    e["opens_denied"] = ordered_json(m.opens_denied);
    e["crashed"] = m.crashed;
    e["crashed_at_s"] = m.crashed_at_s;
    e["clock_offset_at_end_s"] = m.clock_offset_at_end_s;
    e["packets_injected"] = m.packets_injected;
    e["attack_replies_emitted"] = m.attack_replies_emitted;
    e["attack_replies_delivered"] = m.attack_replies_delivered;
    e["attack_replies_dropped"] = m.attack_replies_dropped;
    e["filter_requests_noted"] = m.filter_requests_noted;
    e["filter_replies_passed"] = m.filter_replies_passed;
    e["filter_replies_dropped"] = m.filter_replies_dropped;
    e["filter_broadcasts_dropped"] = m.filter_broadcasts_dropped;
    e["filter_no_exchange_drops"] = m.filter_no_exchange_drops;
    jn[id] = e;
  }
  j["nodes"] = jn;

  auto series = [](const std::vector<SeriesPoint>& pts) {
    ordered_json arr = ordered_json::array();
    for (const auto& p : pts) {
      arr.push_back(ordered_json{{"t_s", p.t_s}, {"node", p.node}, {"value", p.value}});
    }
    return arr;
  };
  auto events = [](const std::vector<EventPoint>& pts) {
    ordered_json arr = ordered_json::array();
    for (const auto& p : pts) {
      arr.push_back(ordered_json{
          {"t_s", p.t_s}, {"node", p.node}, {"label", p.label}, {"value", p.value}});
    }
    return arr;
  };
  j["clock_samples"] = series(clock_samples);
  j["kerberos_checks"] = events(kerberos_checks);
  j["access_checks"] = events(access_checks);
  j["corrections"] = events(corrections);
  j["filter_decisions"] = events(filter_decisions);
  return j;
}

// Long form: t_s,node,metric,value — one row per observation, easy to pivot.
inline std::string MetricsReport::to_csv() const {
  std::ostringstream out;
  out.precision(9);
  out << std::fixed;
  out << "t_s,node,metric,value\n";
  for (const auto& p : clock_samples) {
    out << p.t_s << ',' << p.node << ",clock_offset_s," << p.value << '\n';
  }
  auto rows = [&](const std::vector<EventPoint>& pts, const char* prefix) {
    for (const auto& p : pts) {
      out << p.t_s << ',' << p.node << ',' << prefix << ':' << p.label << ',' << p.value
          << '\n';
    }
  };
  rows(kerberos_checks, "kerberos");
  rows(access_checks, "access");
  rows(corrections, "correction");
  rows(filter_decisions, "filter");
  return out.str();
}

}  // namespace tempest
