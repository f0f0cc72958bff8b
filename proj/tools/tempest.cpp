// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

// Command-line front end: scenario runs and validation, the live UDP
// filtering proxy, and a frame inspector.
//
// Exit codes: 0 success, 1 usage, 2 validation, 3 runtime.

#include <cctype>
#include <cinttypes>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tempest/log.hpp"
#include "tempest/ntp_codec.hpp"
#include "tempest/proxy.hpp"
#include "tempest/report.hpp"
#include "tempest/scenario.hpp"
#include "tempest/sim_engine.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

tempest::UdpProxy* g_proxy = nullptr;

void handle_signal(int) {
  if (g_proxy) g_proxy->stop();
}

bool split_endpoint(const std::string& text, std::string& host, std::uint16_t& port) {
  auto pos = text.rfind(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 >= text.size()) return false;
  host = text.substr(0, pos);
  try {
    unsigned long p = std::stoul(text.substr(pos + 1));
    if (p == 0 || p > 65535) return false;
    port = static_cast<std::uint16_t>(p);
  } catch (...) {
    return false;
  }
  return true;
}

int load_scenario_or_fail(const std::string& path, tempest::ScenarioConfig& out) {
  if (!std::filesystem::exists(path)) {
    std::fprintf(stderr, "error: scenario file not found: %s\n", path.c_str());
    return kExitRuntime;
  }
  auto loaded = tempest::load_scenario_file(path);
  if (!loaded.ok()) {
    std::fprintf(stderr, "error: %s: %s\n", path.c_str(), loaded.error().message.c_str());
    return kExitValidation;
  }
  out = loaded.value();
  return kExitOk;
}

int cmd_sim_run(const std::string& path, std::optional<std::uint64_t> seed,
                const std::string& out_path, const std::string& format) {
  tempest::ScenarioConfig cfg;
  if (int rc = load_scenario_or_fail(path, cfg); rc != kExitOk) return rc;
  if (seed) cfg.seed = *seed;

  auto result = tempest::run_scenario(cfg);
  if (!result.ok()) {
    std::fprintf(stderr, "error: invalid scenario:\n");
    for (const auto& v : result.error().violations) {
      std::fprintf(stderr, "  - %s\n", v.c_str());
    }
    return kExitValidation;
  }

  const tempest::MetricsReport& report = result.value();
  std::string payload =
      format == "csv" ? report.to_csv() : report.to_json().dump(2) + "\n";

  if (out_path.empty()) {
    std::fwrite(payload.data(), 1, payload.size(), stdout);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
      std::fprintf(stderr, "error: cannot write %s\n", out_path.c_str());
      return kExitRuntime;
    }
    out << payload;
  }
  return kExitOk;
}

int cmd_sim_validate(const std::string& path) {
  tempest::ScenarioConfig cfg;
  if (int rc = load_scenario_or_fail(path, cfg); rc != kExitOk) return rc;
  auto violations = tempest::validate(cfg);
  if (violations.empty()) {
    std::printf("ok: %s\n", path.c_str());
    return kExitOk;
  }
  for (const auto& v : violations) {
    std::printf("violation: %s\n", v.c_str());
  }
  return kExitValidation;
}

int cmd_proxy(const tempest::ProxyRuntimeConfig& cfg) {
  auto violations = tempest::validate(cfg);
  if (!violations.empty()) {
    for (const auto& v : violations) std::fprintf(stderr, "error: %s\n", v.c_str());
    return kExitValidation;
  }
  tempest::UdpProxy proxy(cfg);
  auto started = proxy.start();
  if (!started.ok()) {
    std::fprintf(stderr, "error: %s\n", started.error().c_str());
    return kExitRuntime;
  }
  g_proxy = &proxy;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  auto ran = proxy.run();
  g_proxy = nullptr;
  if (!ran.ok()) {
    std::fprintf(stderr, "error: %s\n", ran.error().c_str());
    return kExitRuntime;
  }
  return kExitOk;
}

bool parse_hex(const std::string& text, std::vector<std::uint8_t>& out) {
  std::string clean;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',') continue;
    clean.push_back(c);
  }
  if (clean.rfind("0x", 0) == 0 || clean.rfind("0X", 0) == 0) clean.erase(0, 2);
  if (clean.empty() || clean.size() % 2 != 0) return false;
  out.clear();
  for (std::size_t i = 0; i < clean.size(); i += 2) {
    auto nibble = [](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      return -1;
    };
    int hi = nibble(clean[i]);
    int lo = nibble(clean[i + 1]);
    if (hi < 0 || lo < 0) return false;
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return true;
}

void print_timestamp(const char* name, const tempest::NtpTimestamp& ts) {
  double ntp_s = ts.to_seconds();
  std::printf("%s=%.9f", name, ntp_s);
  if (ts.is_zero()) {
    std::printf(" (zero)\n");
    return;
  }
  double unix_s = tempest::ts_to_unix(ts);
  std::printf(" (unix %.9f", unix_s);
  auto tt = static_cast<std::time_t>(std::floor(unix_s));
  std::tm tm_utc{};
  if (gmtime_r(&tt, &tm_utc) != nullptr) {
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    std::printf(", %s", buf);
  }
  std::printf(")\n");
}

int cmd_codec_inspect(const std::string& arg) {
  std::vector<std::uint8_t> bytes;
  if (std::filesystem::exists(arg)) {
    std::ifstream in(arg, std::ios::binary);
    std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
    // A frame file may hold raw bytes or hex text; try hex first for text.
    std::string text(raw.begin(), raw.end());
    if (!parse_hex(text, bytes)) {
      bytes.assign(raw.begin(), raw.end());
    }
  } else if (!parse_hex(arg, bytes)) {
    std::fprintf(stderr, "error: argument is neither a file nor a hex string\n");
    return kExitUsage;
  }

  auto decoded = tempest::decode(bytes);
  if (!decoded.ok()) {
    std::fprintf(stderr, "error: decode failed: %s (%zu bytes)\n",
                 tempest::to_string(decoded.error()), bytes.size());
    return kExitValidation;
  }
  const tempest::SntpPacket& p = decoded.value();

  const char* mode = p.mode == tempest::NtpMode::Client    ? "client"
                     : p.mode == tempest::NtpMode::Server  ? "server"
                                                           : "broadcast";
  std::printf("LI=%d VN=%d Mode=%s\n", static_cast<int>(p.leap),
              static_cast<int>(p.version), mode);
  std::printf("stratum=%d\n", static_cast<int>(p.stratum));
  std::printf("poll=%d (%.0f s)\n", static_cast<int>(p.poll_exponent),
              std::pow(2.0, p.poll_exponent));
  std::printf("precision=%d (%.3g s)\n", static_cast<int>(p.precision_exponent),
              std::pow(2.0, p.precision_exponent));
  std::printf("root_delay_raw=0x%08" PRIx32 " (%.6f s)\n", p.root_delay,
              p.root_delay / 65536.0);
  std::printf("root_dispersion_raw=0x%08" PRIx32 " (%.6f s)\n", p.root_dispersion,
              p.root_dispersion / 65536.0);
  std::printf("reference_id=%02x %02x %02x %02x \"", p.reference_id[0], p.reference_id[1],
              p.reference_id[2], p.reference_id[3]);
  for (std::uint8_t b : p.reference_id) {
    std::putchar(std::isprint(b) ? static_cast<char>(b) : '.');
  }
  std::printf("\"\n");
  print_timestamp("reference_ts", p.reference_ts);
  print_timestamp("originate_ts", p.originate_ts);
  print_timestamp("receive_ts", p.receive_ts);
  print_timestamp("transmit_ts", p.transmit_ts);
  if (p.has_authenticator) {
    std::printf("authenticator=");
    for (std::uint8_t b : p.authenticator) std::printf("%02x", b);
    std::printf("\n");
  } else {
    std::printf("authenticator=absent\n");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-sync attack simulator and NTP filtering proxy"};
  app.require_subcommand(1);

  std::string log_level;
  app.add_option("--log-level", log_level, "error|warn|info|debug|trace (or TEMPEST_LOG)");

  // sim run / sim validate
  auto* sim = app.add_subcommand("sim", "scenario simulation");
  sim->require_subcommand(1);

  std::string scenario_path;
  std::uint64_t seed_value = 0;
  std::string out_path;
  std::string format = "json";

  auto* run = sim->add_subcommand("run", "run a scenario and write the report");
  run->add_option("scenario", scenario_path, "scenario JSON file")->required();
  auto* seed_opt = run->add_option("--seed", seed_value, "override the scenario seed");
  run->add_option("--out", out_path, "output path (default stdout)");
  run->add_option("--format", format, "json|csv")
      ->check(CLI::IsMember({"json", "csv"}));

  auto* validate_cmd = sim->add_subcommand("validate", "check a scenario file");
  validate_cmd->add_option("scenario", scenario_path, "scenario JSON file")->required();

  // proxy
  auto* proxy = app.add_subcommand("proxy", "inline UDP filtering proxy");
  std::string listen = "0.0.0.0:2100";
  std::string upstream;
  tempest::ProxyRuntimeConfig pcfg;
  proxy->add_option("--listen", listen, "listen endpoint host:port (default 0.0.0.0:2100)");
  proxy->add_option("--upstream", upstream, "upstream server host:port")->required();
  proxy->add_option("--threshold-s", pcfg.threshold_s, "drop threshold in seconds");
  proxy->add_option("--log", pcfg.log_path, "decision/stats log file (default stderr)");
  proxy->add_option("--stats-interval-s", pcfg.stats_interval_s, "stats flush period");

  // codec inspect
  auto* codec = app.add_subcommand("codec", "frame utilities");
  codec->require_subcommand(1);
  std::string frame_arg;
  auto* inspect = codec->add_subcommand("inspect", "dump the fields of one frame");
  inspect->add_option("frame", frame_arg, "hex string or file with one frame")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (!log_level.empty()) {
    tempest::set_log_level(tempest::parse_log_level(log_level));
  }

  if (run->parsed()) {
    std::optional<std::uint64_t> seed;
    if (seed_opt->count() > 0) seed = seed_value;
    return cmd_sim_run(scenario_path, seed, out_path, format);
  }
  if (validate_cmd->parsed()) {
    return cmd_sim_validate(scenario_path);
  }
  if (proxy->parsed()) {
    if (!split_endpoint(listen, pcfg.listen_host, pcfg.listen_port)) {
      std::fprintf(stderr, "error: bad --listen endpoint: %s\n", listen.c_str());
      return kExitUsage;
    }
    if (!split_endpoint(upstream, pcfg.upstream_host, pcfg.upstream_port)) {
      std::fprintf(stderr, "error: bad --upstream endpoint: %s\n", upstream.c_str());
      return kExitUsage;
    }
    return cmd_proxy(pcfg);
  }
  if (inspect->parsed()) {
    return cmd_codec_inspect(frame_arg);
  }
  return kExitUsage;
}
