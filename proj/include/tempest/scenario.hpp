// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#pragma once

// Scenario configuration: topology, clocks, policies, attacks and documents,
// loaded from JSON. validate() returns every violated constraint, not just
// the first.

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tempest/attacker.hpp"
#include "tempest/defense.hpp"
#include "tempest/irm_model.hpp"
#include "tempest/result.hpp"
#include "tempest/sync_client.hpp"
#include "tempest/timekeeping.hpp"

namespace tempest {

enum class NodeRole { Client, DomainController, ExternalServer, Attacker, Filter };

inline const char* to_string(NodeRole r) {
  switch (r) {
    case NodeRole::Client: return "client";
    case NodeRole::DomainController: return "domain_controller";
    case NodeRole::ExternalServer: return "external_server";
    case NodeRole::Attacker: return "attacker";
    case NodeRole::Filter: return "filter";
  }
  return "unknown";
}

struct ClockSpec {
  double base_offset_s = 0;
  double drift_ppm = 0;
  ClockDiscipline discipline = ClockDiscipline::Step;
  double max_slew_ppm = 500;
};

struct SyncSpec {
  SyncPolicy policy;
  double first_poll_at_s = 0;  // 0 means one poll interval after start
  std::map<ServerRole, std::string> servers;
};

struct AcquireSpec {
  std::string doc_id;
  double at_s = 0;
};

struct ProbeSpec {
  std::string doc_id;
  double first_at_s = 0;
  double interval_s = 0;  // 0 means a single probe
};

struct IrmSpec {
  double crash_threshold_s = kDefaultCrashThresholdSeconds;
  bool server_online = true;
  std::vector<AcquireSpec> acquire;
  std::vector<ProbeSpec> probes;
};

struct KerberosSpec {
  std::string authority;
  double interval_s = 256;
  double first_at_s = 128;
};

struct NodeSpec {
  std::string id;
  NodeRole role = NodeRole::Client;
  ClockSpec clock;
  std::optional<SyncSpec> sync;
  std::optional<IrmSpec> irm;
  std::optional<KerberosSpec> kerberos;
  std::optional<AttackSpec> attack;
  std::optional<FilterConfig> filter;
};

struct LinkSpec {
  std::string from;
  std::string to;
  double latency_min_s = 0.001;
  double latency_max_s = 0.001;  // equal bounds mean a fixed latency
  double loss_rate = 0;
  bool via_filter = false;
  std::string filter_id;            // optional when only one filter exists
  double filter_offset_s = -1;      // <0 means half the drawn latency

  bool fixed_latency() const { return latency_min_s == latency_max_s; }
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  double duration_s = 0;
  double sample_interval_s = 0;  // 0 disables the periodic offset series
  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;
  std::vector<DocumentPolicy> documents;
};

struct ScenarioParseError {
  std::string message;
};

namespace detail {

inline Result<NodeRole, std::string> parse_role(const std::string& s) {
  if (s == "client") return NodeRole::Client;
  if (s == "domain_controller") return NodeRole::DomainController;
  if (s == "external_server") return NodeRole::ExternalServer;
  if (s == "attacker") return NodeRole::Attacker;
  if (s == "filter") return NodeRole::Filter;
  return "unknown role '" + s + "'";
}

inline Result<ServerRole, std::string> parse_server_role(const std::string& s) {
  if (s == "domain_controller") return ServerRole::DomainController;
  if (s == "dns_server") return ServerRole::DnsServer;
  if (s == "external_server") return ServerRole::ExternalServer;
  return "unknown server role '" + s + "'";
}

inline Result<RightsSet, std::string> parse_rights(const nlohmann::json& j) {
  RightsSet r;
  for (const auto& item : j) {
    std::string s = item.get<std::string>();
    if (s == "read") {
      r.add(Right::Read);
    } else if (s == "copy") {
      r.add(Right::Copy);
    } else if (s == "edit") {
      r.add(Right::Edit);
    } else {
      return "unknown right '" + s + "'";
    }
  }
  return r;
}

}  // namespace detail

inline Result<ScenarioConfig, ScenarioParseError> parse_scenario(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    return ScenarioParseError{e.what()};
  }

  try {
    ScenarioConfig cfg;
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.duration_s = j.value("duration_s", 0.0);
    cfg.sample_interval_s = j.value("sample_interval_s", 0.0);

    for (const auto& jn : j.value("nodes", json::array())) {
      NodeSpec node;
      node.id = jn.value("id", "");
      auto role = detail::parse_role(jn.value("role", "client"));
      if (!role.ok()) return ScenarioParseError{"node '" + node.id + "': " + role.error()};
      node.role = role.value();

      if (jn.contains("clock")) {
        const auto& jc = jn["clock"];
        node.clock.base_offset_s = jc.value("base_offset_s", 0.0);
        node.clock.drift_ppm = jc.value("drift_ppm", 0.0);
        std::string disc = jc.value("discipline", "step");
        if (disc == "step") {
          node.clock.discipline = ClockDiscipline::Step;
        } else if (disc == "slew") {
          node.clock.discipline = ClockDiscipline::Slew;
        } else {
          return ScenarioParseError{"node '" + node.id + "': unknown discipline '" + disc + "'"};
        }
        node.clock.max_slew_ppm = jc.value("max_slew_ppm", 500.0);
      }

      if (jn.contains("sync")) {
        const auto& js = jn["sync"];
        SyncSpec sync;
        sync.policy.poll_interval_s = js.value("poll_interval_s", 604800.0);
        sync.policy.listen_window_s = js.value("listen_window_s", 5.0);
        sync.policy.require_originate_match = js.value("require_originate_match", true);
        sync.policy.accept_broadcast = js.value("accept_broadcast", false);
        sync.policy.originate_match_ms = js.value("originate_match_ms", false);
        sync.policy.expect_signed = js.value("expect_signed", false);
        sync.first_poll_at_s = js.value("first_poll_at_s", 0.0);
        if (js.contains("server_preference")) {
          sync.policy.server_preference.clear();
          for (const auto& item : js["server_preference"]) {
            auto sr = detail::parse_server_role(item.get<std::string>());
            if (!sr.ok()) return ScenarioParseError{"node '" + node.id + "': " + sr.error()};
            sync.policy.server_preference.push_back(sr.value());
          }
        }
        if (js.contains("servers")) {
          // Iterate the node in place; items() over a temporary copy would
          // leave the proxy dangling once the copy is destroyed.
          for (const auto& [key, value] : js["servers"].items()) {
            auto sr = detail::parse_server_role(key);
            if (!sr.ok()) return ScenarioParseError{"node '" + node.id + "': " + sr.error()};
            sync.servers[sr.value()] = value.get<std::string>();
          }
        }
        node.sync = std::move(sync);
      }

      if (jn.contains("irm")) {
        const auto& ji = jn["irm"];
        IrmSpec irm;
        irm.crash_threshold_s = ji.value("crash_threshold_s", kDefaultCrashThresholdSeconds);
        irm.server_online = ji.value("server_online", true);
        for (const auto& ja : ji.value("acquire", json::array())) {
          irm.acquire.push_back({ja.value("doc_id", ""), ja.value("at_s", 0.0)});
        }
        for (const auto& jp : ji.value("probes", json::array())) {
          irm.probes.push_back({jp.value("doc_id", ""), jp.value("first_at_s", 0.0),
                                jp.value("interval_s", 0.0)});
        }
        node.irm = std::move(irm);
      }

      if (jn.contains("kerberos")) {
        const auto& jk = jn["kerberos"];
        KerberosSpec kerb;
        kerb.authority = jk.value("authority", "");
        kerb.interval_s = jk.value("interval_s", 256.0);
        kerb.first_at_s = jk.value("first_at_s", 128.0);
        node.kerberos = kerb;
      }

      if (jn.contains("attack")) {
        const auto& ja = jn["attack"];
        AttackSpec attack;
        std::string variant = ja.value("variant", "");
        if (variant == "broadcast_flood") {
          BroadcastFlood f;
          f.packets_per_second = ja.value("packets_per_second", 1000.0);
          f.claimed_offset_s = ja.value("claimed_offset_s", 240.0);
          f.tick_s = ja.value("tick_s", 1.0);
          attack.variant = f;
        } else if (variant == "spoofed_reply" || variant == "slow_drift") {
          double default_offset = variant == "spoofed_reply" ? 240.0 : 30.0;
          double offset = ja.value(
              variant == "spoofed_reply" ? "per_reply_offset_s" : "per_interval_offset_s",
              default_offset);
          bool observes = ja.value("observes_requests", true);
          bool spoof_src = ja.value("spoof_source", true);
          double implied = ja.value("implied_delay_s", 0.0);
          double rtt = ja.value("assumed_rtt_s", 0.0);
          std::string target = ja.value("target", "");
          if (variant == "spoofed_reply") {
            attack.variant = SpoofedReply{target, offset, observes, spoof_src, implied, rtt};
          } else {
            attack.variant = SlowDrift{target, offset, observes, spoof_src, implied, rtt};
          }
        } else if (variant == "dns_redirect") {
          attack.variant = DnsRedirect{ja.value("victim", ""), ja.value("attacker_server", "")};
        } else {
          return ScenarioParseError{"node '" + node.id + "': unknown attack variant '" +
                                    variant + "'"};
        }
        attack.start_s = ja.value("start_s", 0.0);
        attack.stop_s = ja.value("stop_s", std::numeric_limits<double>::infinity());
        attack.observe_latency_s = ja.value("observe_latency_s", 0.002);
        node.attack = std::move(attack);
      }

      if (jn.contains("filter")) {
        const auto& jf = jn["filter"];
        FilterConfig fc;
        fc.threshold_s = jf.value("threshold_s", 240.0);
        fc.proxy_port = jf.value("proxy_port", std::uint16_t{2100});
        fc.record_ttl_s = jf.value("record_ttl_s", 16.0);
        std::string mode = jf.value("mode", "inline");
        if (mode == "inline") {
          fc.mode = FilterMode::Inline;
        } else if (mode == "mirror") {
          fc.mode = FilterMode::Mirror;
        } else {
          return ScenarioParseError{"node '" + node.id + "': unknown filter mode '" + mode +
                                    "'"};
        }
        node.filter = fc;
      }

      cfg.nodes.push_back(std::move(node));
    }

    for (const auto& jl : j.value("links", json::array())) {
      LinkSpec link;
      link.from = jl.value("from", "");
      link.to = jl.value("to", "");
      if (jl.contains("latency_s")) {
        const auto& lat = jl["latency_s"];
        if (lat.is_object()) {
          link.latency_min_s = lat.value("min", 0.0);
          link.latency_max_s = lat.value("max", 0.0);
        } else {
          link.latency_min_s = link.latency_max_s = lat.get<double>();
        }
      }
      link.loss_rate = jl.value("loss_rate", 0.0);
      link.via_filter = jl.value("via_filter", false);
      link.filter_id = jl.value("filter_id", "");
      link.filter_offset_s = jl.value("filter_offset_s", -1.0);
      cfg.links.push_back(std::move(link));
    }

    for (const auto& jd : j.value("documents", json::array())) {
      DocumentPolicy doc;
      doc.doc_id = jd.value("doc_id", "");
      doc.not_before = jd.value("not_before_s", 0.0);
      doc.not_after = jd.value("not_after_s", 0.0);
      if (jd.contains("rights")) {
        auto rights = detail::parse_rights(jd["rights"]);
        if (!rights.ok()) {
          return ScenarioParseError{"document '" + doc.doc_id + "': " + rights.error()};
        }
        doc.rights = rights.value();
      } else {
        doc.rights.add(Right::Read);
      }
      cfg.documents.push_back(std::move(doc));
    }

    return cfg;
  } catch (const json::exception& e) {
    return ScenarioParseError{e.what()};
  }
}

inline Result<ScenarioConfig, ScenarioParseError> load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) return ScenarioParseError{"not found: " + path};
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

// Returns every violated constraint; an empty list means runnable.
inline std::vector<std::string> validate(const ScenarioConfig& cfg) {
  std::vector<std::string> out;
  auto fail = [&](const std::string& msg) { out.push_back(msg); };

  if (cfg.nodes.empty()) fail("nodes: list is empty");
  if (!(cfg.duration_s > 0)) fail("duration_s: must be positive");
  if (cfg.sample_interval_s < 0) fail("sample_interval_s: must be non-negative");

  std::set<std::string> ids;
  std::set<std::string> filters;
  for (const auto& n : cfg.nodes) {
    if (n.id.empty()) fail("node: empty id");
    if (!ids.insert(n.id).second) fail("node '" + n.id + "': duplicate id");
    if (n.role == NodeRole::Filter) {
      filters.insert(n.id);
      if (!n.filter) fail("node '" + n.id + "': filter role without filter config");
    }
    if (n.filter && n.role != NodeRole::Filter) {
      fail("node '" + n.id + "': filter config on non-filter role");
    }
    if (n.attack && n.role != NodeRole::Attacker) {
      fail("node '" + n.id + "': attack on non-attacker role");
    }
    if (n.role == NodeRole::Attacker && !n.attack) {
      fail("node '" + n.id + "': attacker role without attack");
    }
  }
  auto known = [&](const std::string& id) { return ids.count(id) > 0; };

  std::set<std::string> doc_ids;
  for (const auto& d : cfg.documents) {
    if (d.doc_id.empty()) fail("document: empty doc_id");
    if (!doc_ids.insert(d.doc_id).second) fail("document '" + d.doc_id + "': duplicate id");
    if (d.not_before > d.not_after) {
      fail("document '" + d.doc_id + "': not_before after not_after");
    }
  }

  for (const auto& n : cfg.nodes) {
    if (n.clock.max_slew_ppm <= 0) fail("node '" + n.id + "': max_slew_ppm must be positive");
    if (n.sync) {
      const auto& p = n.sync->policy;
      if (!(p.poll_interval_s > 0)) fail("node '" + n.id + "': poll_interval_s must be positive");
      if (!(p.listen_window_s > 0)) fail("node '" + n.id + "': listen_window_s must be positive");
      if (p.listen_window_s >= p.poll_interval_s) {
        fail("node '" + n.id + "': listen window must be shorter than the poll interval");
      }
      if (n.sync->first_poll_at_s < 0) fail("node '" + n.id + "': first_poll_at_s negative");
      if (p.server_preference.empty()) fail("node '" + n.id + "': empty server_preference");
      for (const auto& [role, id] : n.sync->servers) {
        if (!known(id)) {
          fail("node '" + n.id + "': server '" + id + "' (" + to_string(role) +
               ") is not a node");
        }
      }
    }
    if (n.irm) {
      if (!(n.irm->crash_threshold_s > 0)) {
        fail("node '" + n.id + "': crash_threshold_s must be positive");
      }
      for (const auto& a : n.irm->acquire) {
        if (!doc_ids.count(a.doc_id)) {
          fail("node '" + n.id + "': acquire of unknown document '" + a.doc_id + "'");
        }
      }
      for (const auto& p : n.irm->probes) {
        if (!doc_ids.count(p.doc_id)) {
          fail("node '" + n.id + "': probe of unknown document '" + p.doc_id + "'");
        }
        if (p.interval_s < 0) fail("node '" + n.id + "': probe interval negative");
      }
    }
    if (n.kerberos) {
      if (!known(n.kerberos->authority)) {
        fail("node '" + n.id + "': kerberos authority '" + n.kerberos->authority +
             "' is not a node");
      } else if (n.kerberos->authority == n.id) {
        fail("node '" + n.id + "': kerberos authority is the node itself");
      }
      if (!(n.kerberos->interval_s > 0)) fail("node '" + n.id + "': kerberos interval");
    }
    if (n.filter) {
      if (!(n.filter->threshold_s > 0)) fail("node '" + n.id + "': threshold_s must be positive");
      if (!(n.filter->record_ttl_s > 0)) fail("node '" + n.id + "': record_ttl_s must be positive");
    }
    if (n.attack) {
      if (n.attack->stop_s < n.attack->start_s) fail("node '" + n.id + "': attack stops before it starts");
      if (n.attack->observe_latency_s < 0) fail("node '" + n.id + "': observe_latency_s negative");
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, BroadcastFlood>) {
              if (v.packets_per_second < 0) fail("node '" + n.id + "': negative flood rate");
              if (!(v.tick_s > 0)) fail("node '" + n.id + "': flood tick_s must be positive");
            } else if constexpr (std::is_same_v<T, SpoofedReply> || std::is_same_v<T, SlowDrift>) {
              if (!known(v.target)) fail("node '" + n.id + "': attack target is not a node");
              if (v.assumed_rtt_s < 0) fail("node '" + n.id + "': assumed_rtt_s negative");
              if (v.implied_delay_s < 0) fail("node '" + n.id + "': implied_delay_s negative");
            } else if constexpr (std::is_same_v<T, DnsRedirect>) {
              if (!known(v.victim)) fail("node '" + n.id + "': redirect victim is not a node");
              if (!known(v.attacker_server)) {
                fail("node '" + n.id + "': redirect attacker_server is not a node");
              }
            }
          },
          n.attack->variant);
    }
  }

  for (std::size_t i = 0; i < cfg.links.size(); ++i) {
    const auto& l = cfg.links[i];
    std::string where = "link[" + std::to_string(i) + "] " + l.from + "->" + l.to;
    if (!known(l.from)) fail(where + ": unknown 'from'");
    if (!known(l.to)) fail(where + ": unknown 'to'");
    if (l.from == l.to) fail(where + ": self loop");
    if (l.latency_min_s < 0 || l.latency_max_s < l.latency_min_s) {
      fail(where + ": bad latency bounds");
    }
    if (l.loss_rate < 0 || l.loss_rate > 1) fail(where + ": loss_rate outside [0,1]");
    if (l.via_filter) {
      if (filters.empty()) {
        fail(where + ": via_filter with no filter node");
      } else if (l.filter_id.empty()) {
        if (filters.size() > 1) fail(where + ": via_filter needs filter_id (several filters)");
      } else if (!filters.count(l.filter_id)) {
        fail(where + ": filter_id '" + l.filter_id + "' is not a filter node");
      }
      if (l.filter_offset_s >= 0 && l.filter_offset_s > l.latency_min_s) {
        fail(where + ": filter_offset_s beyond the latency lower bound");
      }
    }
  }

  return out;
}

}  // namespace tempest
