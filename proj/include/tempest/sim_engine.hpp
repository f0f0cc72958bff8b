// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#pragma once

// Deterministic discrete-event simulator. Wires clocks, sync clients,
// rights-management clients, attackers, and the reply filter into a single
// seeded run that produces a MetricsReport.
//
// Time is kept as an integer count of microseconds; events execute in
// (time, insertion order). All randomness flows from the scenario seed
// through per-link and per-attacker substreams, so a report is a pure
// function of (config, seed).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tempest/attacker.hpp"
#include "tempest/defense.hpp"
#include "tempest/irm_model.hpp"
#include "tempest/log.hpp"
#include "tempest/ntp_codec.hpp"
#include "tempest/report.hpp"
#include "tempest/result.hpp"
#include "tempest/scenario.hpp"
#include "tempest/sync_client.hpp"
#include "tempest/timekeeping.hpp"

namespace tempest {

struct InvalidScenario {
  std::vector<std::string> violations;
};

namespace detail {

// SplitMix64 step; used only to derive independent substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace detail

class Simulation {
 public:
  explicit Simulation(ScenarioConfig cfg) : cfg_(std::move(cfg)) {}

  Result<MetricsReport, InvalidScenario> run() {
    auto violations = validate(cfg_);
    if (!violations.empty()) return InvalidScenario{std::move(violations)};

    setup();
    schedule_initial();

    while (!queue_.empty() && queue_.top().t_us <= duration_us_) {
      Event ev = queue_.top();
      queue_.pop();
      now_us_ = ev.t_us;
      ++report_.totals.events_processed;
      dispatch(ev);
    }

    while (!queue_.empty()) {
      const Event& ev = queue_.top();
      if (ev.kind == EvKind::Deliver || ev.kind == EvKind::FilterTransit) {
        ++report_.totals.in_flight_at_end;
      }
      queue_.pop();
    }

    finish();
    return std::move(report_);
  }

 private:
  enum class EvKind {
    Poll,
    Deliver,
    FilterTransit,
    Observe,
    FloodTick,
    KerbProbe,
    Acquire,
    IrmProbe,
    Sample,
  };

  struct SimPacket {
    SntpPacket frame;
    int src = -1;
    int dst = -1;
    int link = -1;
    int attacker = -1;  // emitting attacker's node index, -1 for honest traffic
  };

  struct Event {
    std::int64_t t_us = 0;
    std::uint64_t seq = 0;
    EvKind kind = EvKind::Sample;
    int node = -1;  // acting node (poll, observe, flood, probes)
    int aux = -1;   // per-node list index (acquire, irm probe)
    SimPacket pkt;
    std::int64_t remaining_us = 0;  // filter transit: latency left after the filter
  };

  struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
      if (a.t_us != b.t_us) return a.t_us > b.t_us;
      return a.seq > b.seq;
    }
  };

  struct NodeRt {
    NodeSpec spec;
    SimClock clock;
    std::optional<SyncClient> sync;
    std::optional<RmsClient> irm;
    std::unique_ptr<Filter> filter;
    int kerb_authority = -1;
  };

  struct LinkRt {
    LinkSpec spec;
    int from = -1;
    int to = -1;
    int filter_node = -1;
    std::mt19937_64 rng;
  };

  static std::int64_t us_of(double s) { return std::llround(s * 1e6); }
  static double s_of(std::int64_t us) { return static_cast<double>(us) * 1e-6; }

  void push(Event ev) {
    ev.seq = next_seq_++;
    queue_.push(std::move(ev));
  }

  NodeMetrics& metrics(int node) { return report_.nodes[nodes_[node].spec.id]; }

  void setup() {
    duration_us_ = us_of(cfg_.duration_s);
    report_.seed = cfg_.seed;
    report_.duration_s = cfg_.duration_s;

    for (std::size_t i = 0; i < cfg_.nodes.size(); ++i) {
      index_[cfg_.nodes[i].id] = static_cast<int>(i);
    }

    std::uint64_t rng_state = cfg_.seed;

    for (const auto& spec : cfg_.nodes) {
      NodeRt rt;
      rt.spec = spec;
      rt.clock.base_offset_s = spec.clock.base_offset_s;
      rt.clock.drift_ppm = spec.clock.drift_ppm;
      rt.clock.discipline = spec.clock.discipline;
      rt.clock.max_slew_ppm = spec.clock.max_slew_ppm;
      if (spec.sync) rt.sync.emplace(spec.sync->policy, spec.sync->servers);
      if (spec.irm) rt.irm.emplace(rt.clock.read(0.0), spec.irm->crash_threshold_s);
      if (spec.filter) rt.filter = std::make_unique<Filter>(*spec.filter);
      if (spec.kerberos) rt.kerb_authority = index_.at(spec.kerberos->authority);
      report_.nodes[spec.id];  // materialize the entry even if nothing happens
      nodes_.push_back(std::move(rt));
    }

    int sole_filter = -1;
    int filter_count = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].spec.role == NodeRole::Filter) {
        sole_filter = static_cast<int>(i);
        ++filter_count;
      }
    }

    for (const auto& spec : cfg_.links) {
      LinkRt rt;
      rt.spec = spec;
      rt.from = index_.at(spec.from);
      rt.to = index_.at(spec.to);
      if (spec.via_filter) {
        rt.filter_node = spec.filter_id.empty() ? sole_filter : index_.at(spec.filter_id);
      }
      rt.rng.seed(detail::splitmix64(rng_state));
      int li = static_cast<int>(links_.size());
      link_by_pair_.emplace(std::make_pair(rt.from, rt.to), li);
      links_.push_back(std::move(rt));
    }

    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].spec.attack) {
        attacker_rng_[static_cast<int>(i)].seed(detail::splitmix64(rng_state));
      }
    }
    (void)filter_count;
  }

  void schedule_initial() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& spec = nodes_[i].spec;
      int ni = static_cast<int>(i);
      if (spec.sync) {
        double first = spec.sync->first_poll_at_s > 0 ? spec.sync->first_poll_at_s
                                                      : spec.sync->policy.poll_interval_s;
        push({us_of(first), 0, EvKind::Poll, ni});
      }
      if (spec.kerberos) {
        push({us_of(spec.kerberos->first_at_s), 0, EvKind::KerbProbe, ni});
      }
      if (spec.irm) {
        for (std::size_t k = 0; k < spec.irm->acquire.size(); ++k) {
          push({us_of(spec.irm->acquire[k].at_s), 0, EvKind::Acquire, ni,
                static_cast<int>(k)});
        }
        for (std::size_t k = 0; k < spec.irm->probes.size(); ++k) {
          push({us_of(spec.irm->probes[k].first_at_s), 0, EvKind::IrmProbe, ni,
                static_cast<int>(k)});
        }
      }
      if (spec.attack && std::holds_alternative<BroadcastFlood>(spec.attack->variant)) {
        push({us_of(spec.attack->start_s), 0, EvKind::FloodTick, ni});
      }
    }
    if (cfg_.sample_interval_s > 0) {
      push({0, 0, EvKind::Sample});
    }
  }

  void dispatch(const Event& ev) {
    switch (ev.kind) {
      case EvKind::Poll: on_poll(ev.node); break;
      case EvKind::Deliver: on_deliver(ev.pkt); break;
      case EvKind::FilterTransit: on_filter_transit(ev.pkt, ev.remaining_us); break;
      case EvKind::Observe: on_observe(ev.node, ev.pkt); break;
      case EvKind::FloodTick: on_flood_tick(ev.node); break;
      case EvKind::KerbProbe: on_kerb_probe(ev.node); break;
      case EvKind::Acquire: on_acquire(ev.node, ev.aux); break;
      case EvKind::IrmProbe: on_irm_probe(ev.node, ev.aux); break;
      case EvKind::Sample: on_sample(); break;
    }
  }

  // Hands a frame to the (src → dst) link: loss draw, latency draw, and the
  // optional filter stop partway along the path.
  void send_packet(int src, int dst, const SntpPacket& frame, int attacker) {
    auto it = link_by_pair_.find({src, dst});
    if (it == link_by_pair_.end()) {
      TEMPEST_LOG_WARN("no link %s -> %s; packet not sent", nodes_[src].spec.id.c_str(),
                       nodes_[dst].spec.id.c_str());
      return;
    }
    LinkRt& link = links_[it->second];
    ++report_.totals.sent_total;

    if (link.spec.loss_rate > 0) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      if (u(link.rng) < link.spec.loss_rate) {
        ++report_.totals.lost_by_link;
        return;
      }
    }

    double latency = link.spec.latency_min_s;
    if (!link.spec.fixed_latency()) {
      std::uniform_real_distribution<double> d(link.spec.latency_min_s,
                                               link.spec.latency_max_s);
      latency = d(link.rng);
    }
    std::int64_t lat_us = us_of(latency);

    SimPacket pkt;
    pkt.frame = frame;
    pkt.src = src;
    pkt.dst = dst;
    pkt.link = it->second;
    pkt.attacker = attacker;

    if (link.spec.via_filter && link.filter_node >= 0) {
      double offset = link.spec.filter_offset_s >= 0 ? link.spec.filter_offset_s
                                                     : latency / 2.0;
      std::int64_t off_us = std::min(us_of(offset), lat_us);
      Event ev{now_us_ + off_us, 0, EvKind::FilterTransit};
      ev.pkt = std::move(pkt);
      ev.remaining_us = lat_us - off_us;
      push(std::move(ev));
    } else {
      Event ev{now_us_ + lat_us, 0, EvKind::Deliver};
      ev.pkt = std::move(pkt);
      push(std::move(ev));
    }
  }

  void on_poll(int ni) {
    NodeRt& n = nodes_[ni];
    double t = s_of(now_us_);
    if (n.sync) {
      double client_now = n.clock.read(t);
      auto reachable = [&](const std::string& id) {
        auto it = index_.find(id);
        if (it == index_.end()) return false;
        return link_by_pair_.count({ni, it->second}) > 0;
      };
      auto pr = n.sync->begin_poll(client_now, reachable);
      if (pr) {
        ++metrics(ni).polls_sent;
        std::string dest = pr->destination;
        if (pr->destination_role == ServerRole::ExternalServer) {
          for (std::size_t a = 0; a < nodes_.size(); ++a) {
            const auto& atk = nodes_[a].spec.attack;
            if (!atk || !atk->active_at(t)) continue;
            if (const auto* redirect = std::get_if<DnsRedirect>(&atk->variant)) {
              if (redirect->victim == n.spec.id) dest = redirect->attacker_server;
            }
          }
        }
        send_packet(ni, index_.at(dest), pr->packet, -1);

        for (std::size_t a = 0; a < nodes_.size(); ++a) {
          const auto& atk = nodes_[a].spec.attack;
          if (!atk || !atk->active_at(t)) continue;
          bool observes = false;
          if (const auto* sp = std::get_if<SpoofedReply>(&atk->variant)) {
            observes = sp->observes_requests && sp->target == n.spec.id;
          } else if (const auto* sd = std::get_if<SlowDrift>(&atk->variant)) {
            observes = sd->observes_requests && sd->target == n.spec.id;
          }
          if (observes) {
            Event ev{now_us_ + us_of(atk->observe_latency_s), 0, EvKind::Observe,
                     static_cast<int>(a)};
            ev.pkt.frame = pr->packet;
            ev.pkt.src = ni;  // the victim the forged reply goes back to
            push(std::move(ev));
          }
        }
      }
      std::int64_t next = now_us_ + us_of(n.sync->policy().poll_interval_s);
      if (next <= duration_us_) push({next, 0, EvKind::Poll, ni});
    }
  }

  void on_deliver(const SimPacket& pkt) {
    ++report_.totals.delivered;
    NodeRt& d = nodes_[pkt.dst];
    double t = s_of(now_us_);

    switch (pkt.frame.mode) {
      case NtpMode::Client:
        if (d.spec.role == NodeRole::DomainController ||
            d.spec.role == NodeRole::ExternalServer) {
          SntpPacket r;
          r.version = pkt.frame.version;
          r.mode = NtpMode::Server;
          r.stratum = d.spec.role == NodeRole::ExternalServer ? 1 : 2;
          r.poll_exponent = pkt.frame.poll_exponent;
          r.precision_exponent = -20;
          r.reference_id = d.spec.role == NodeRole::ExternalServer
                               ? std::array<std::uint8_t, 4>{'G', 'P', 'S', ' '}
                               : std::array<std::uint8_t, 4>{'L', 'O', 'C', 'L'};
          r.originate_ts = pkt.frame.transmit_ts;
          NtpTimestamp ts = NtpTimestamp::from_seconds(d.clock.read(t));
          r.receive_ts = ts;
          r.transmit_ts = ts;
          r.reference_ts = ts;
          send_packet(pkt.dst, pkt.src, r, -1);
        }
        break;

      case NtpMode::Server:
        if (d.sync) {
          auto& m = metrics(pkt.dst);
          ++m.replies_delivered;
          if (pkt.attacker >= 0) ++metrics(pkt.attacker).attack_replies_delivered;
          double arrival = d.clock.read(t);
          auto outcome = d.sync->handle_reply(pkt.frame, arrival);
          if (const auto* acc = std::get_if<ReplyAccepted>(&outcome)) {
            ++m.replies_accepted;
            apply_correction(pkt.dst, acc->correction_s, t, "step");
          } else {
            const auto& rej = std::get<ReplyRejected>(outcome);
            ++m.replies_rejected[to_string(rej.reason)];
          }
        }
        break;

      case NtpMode::Broadcast:
        if (d.sync) {
          auto& m = metrics(pkt.dst);
          auto outcome = d.sync->on_broadcast(pkt.frame, d.clock.read(t));
          if (const auto* acc = std::get_if<BroadcastAccepted>(&outcome)) {
            ++m.broadcasts_accepted;
            apply_correction(pkt.dst, acc->implied_offset_s, t, "broadcast_step");
          } else {
            ++m.broadcasts_ignored;
          }
        }
        break;
    }
  }

  void apply_correction(int ni, double offset_s, double t, const char* label) {
    NodeRt& n = nodes_[ni];
    auto& m = metrics(ni);
    double before = n.clock.read(t);
    n.clock = n.clock.with_correction(offset_s, t);
    double after = n.clock.read(t);
    m.total_correction_s += offset_s;
    m.max_abs_correction_s = std::max(m.max_abs_correction_s, std::fabs(offset_s));
    report_.corrections.push_back({t, n.spec.id, label, offset_s});
    if (n.irm && n.irm->health() == Health::Healthy) {
      if (n.irm->observe_time_change(before, after) == Health::Crashed) {
        m.crashed = true;
        m.crashed_at_s = t;
        TEMPEST_LOG_INFO("%s crashed at %.6f (step %.3f)", n.spec.id.c_str(), t, offset_s);
      }
    }
  }

  void on_filter_transit(const SimPacket& pkt, std::int64_t remaining_us) {
    int fi = links_[pkt.link].filter_node;
    NodeRt& f = nodes_[fi];
    double t = s_of(now_us_);
    double filter_now = f.clock.read(t);

    auto forward = [&] {
      Event ev{now_us_ + remaining_us, 0, EvKind::Deliver};
      ev.pkt = pkt;
      push(std::move(ev));
    };
    auto record = [&](const FilterDecision& d) {
      report_.filter_decisions.push_back(
          {t, f.spec.id, std::string(to_string(d.verdict)) + ':' + to_string(d.reason),
           d.combined_s});
    };

    switch (pkt.frame.mode) {
      case NtpMode::Client:
        f.filter->note_request(pkt.frame, nodes_[pkt.src].spec.id, filter_now);
        forward();
        break;
      case NtpMode::Server: {
        auto ev = f.filter->evaluate_reply(pkt.frame, filter_now);
        record(ev.decision);
        if (ev.decision.verdict == Verdict::Pass) {
          forward();
        } else {
          ++report_.totals.dropped_by_filter;
          if (pkt.attacker >= 0) ++metrics(pkt.attacker).attack_replies_dropped;
        }
        break;
      }
      case NtpMode::Broadcast: {
        auto decision = f.filter->evaluate_unsolicited(pkt.frame);
        record(decision);
        if (decision.verdict == Verdict::Pass) {
          forward();
        } else {
          ++report_.totals.dropped_by_filter;
          if (pkt.attacker >= 0) ++metrics(pkt.attacker).attack_replies_dropped;
        }
        break;
      }
    }
  }

  void on_observe(int ai, const SimPacket& observed) {
    NodeRt& a = nodes_[ai];
    if (!a.spec.attack) return;
    double x = 0, implied = 0, rtt = 0;
    if (const auto* sp = std::get_if<SpoofedReply>(&a.spec.attack->variant)) {
      x = sp->per_reply_offset_s;
      implied = sp->implied_delay_s;
      rtt = sp->assumed_rtt_s;
    } else if (const auto* sd = std::get_if<SlowDrift>(&a.spec.attack->variant)) {
      x = sd->per_interval_offset_s;
      implied = sd->implied_delay_s;
      rtt = sd->assumed_rtt_s;
    } else {
      return;
    }
    SntpPacket reply = make_spoofed_reply(observed.frame, x, implied, rtt);
    auto& m = metrics(ai);
    ++m.packets_injected;
    ++m.attack_replies_emitted;
    send_packet(ai, observed.src, reply, ai);
  }

  void on_flood_tick(int ai) {
    NodeRt& a = nodes_[ai];
    const auto& atk = a.spec.attack;
    const auto* flood = std::get_if<BroadcastFlood>(&atk->variant);
    if (!flood) return;
    double t = s_of(now_us_);

    if (atk->active_at(t)) {
      auto frames = flood_tick(*flood, flood->tick_s, a.clock.read(t), attacker_rng_[ai]);
      metrics(ai).packets_injected += frames.size();
      for (const auto& frame : frames) {
        for (std::size_t li = 0; li < links_.size(); ++li) {
          if (links_[li].from == ai) send_packet(ai, links_[li].to, frame, ai);
        }
      }
    }

    std::int64_t next = now_us_ + us_of(flood->tick_s);
    if (next <= duration_us_ && s_of(next) < atk->stop_s) {
      push({next, 0, EvKind::FloodTick, ai});
    }
  }

  void on_kerb_probe(int ni) {
    NodeRt& n = nodes_[ni];
    double t = s_of(now_us_);
    double self_read = n.clock.read(t);
    double auth_read = nodes_[n.kerb_authority].clock.read(t);
    bool ok = kerberos_gate(self_read, auth_read);
    auto& m = metrics(ni);
    if (ok) {
      ++m.kerberos_accepts;
    } else {
      ++m.kerberos_rejects;
      if (m.first_kerberos_reject_s < 0) m.first_kerberos_reject_s = t;
    }
    report_.kerberos_checks.push_back({t, n.spec.id, ok ? "accept" : "reject",
                                       self_read - auth_read});
    std::int64_t next = now_us_ + us_of(n.spec.kerberos->interval_s);
    if (next <= duration_us_) push({next, 0, EvKind::KerbProbe, ni});
  }

  void on_acquire(int ni, int k) {
    NodeRt& n = nodes_[ni];
    const auto& spec = n.spec.irm->acquire[static_cast<std::size_t>(k)];
    double t = s_of(now_us_);
    auto res = n.irm->acquire_license(spec.doc_id, cfg_.documents,
                                      n.spec.irm->server_online, n.clock.read(t));
    auto& m = metrics(ni);
    if (res.ok()) {
      ++m.licenses_acquired;
      report_.access_checks.push_back({t, n.spec.id, "acquire:ok", 0});
    } else {
      report_.access_checks.push_back(
          {t, n.spec.id, std::string("acquire:") + to_string(res.error()), 0});
    }
  }

  void on_irm_probe(int ni, int k) {
    NodeRt& n = nodes_[ni];
    const auto& probe = n.spec.irm->probes[static_cast<std::size_t>(k)];
    double t = s_of(now_us_);
    auto outcome = n.irm->open_document(probe.doc_id, n.clock.read(t));
    auto& m = metrics(ni);
    if (std::holds_alternative<OpenAllowed>(outcome)) {
      ++m.opens_allowed;
      report_.access_checks.push_back({t, n.spec.id, "allowed", 0});
    } else {
      const auto& denied = std::get<OpenDenied>(outcome);
      ++m.opens_denied[to_string(denied.reason)];
      report_.access_checks.push_back(
          {t, n.spec.id, std::string("denied:") + to_string(denied.reason), 0});
    }
    if (probe.interval_s > 0) {
      std::int64_t next = now_us_ + us_of(probe.interval_s);
      if (next <= duration_us_) push({next, 0, EvKind::IrmProbe, ni, k});
    }
  }

  void on_sample() {
    double t = s_of(now_us_);
    for (auto& n : nodes_) {
      report_.clock_samples.push_back({t, n.spec.id, n.clock.read(t) - t});
    }
    std::int64_t next = now_us_ + us_of(cfg_.sample_interval_s);
    if (next <= duration_us_) push({next, 0, EvKind::Sample});
  }

  void finish() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      NodeRt& n = nodes_[i];
      auto& m = report_.nodes[n.spec.id];
      m.clock_offset_at_end_s = n.clock.read(cfg_.duration_s) - cfg_.duration_s;
      if (n.filter) {
        FilterStats st = n.filter->stats();
        m.filter_requests_noted = st.requests_noted;
        m.filter_replies_passed = st.replies_passed;
        m.filter_replies_dropped = st.replies_dropped_over_threshold;
        m.filter_broadcasts_dropped = st.dropped_broadcast;
        m.filter_no_exchange_drops = st.dropped_no_exchange;
      }
    }
  }

  ScenarioConfig cfg_;
  MetricsReport report_;
  std::vector<NodeRt> nodes_;
  std::vector<LinkRt> links_;
  std::map<std::string, int> index_;
  std::map<std::pair<int, int>, int> link_by_pair_;
  std::map<int, std::mt19937_64> attacker_rng_;
  std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
  std::uint64_t next_seq_ = 0;
  std::int64_t now_us_ = 0;
  std::int64_t duration_us_ = 0;
};

inline Result<MetricsReport, InvalidScenario> run_scenario(ScenarioConfig cfg) {
  Simulation sim(std::move(cfg));
  return sim.run();
}

}  // namespace tempest
