// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "tempest/irm_model.hpp"

using namespace tempest;

namespace {

RightsSet read_only() {
  RightsSet r;
  r.add(Right::Read);
  return r;
}

std::vector<DocumentPolicy> one_doc(double not_before = 0, double not_after = 3600) {
  return {DocumentPolicy{"d1", not_before, not_after, read_only()}};
}

}  // namespace

TEST_CASE("license acquisition copies the policy window and renews the cert", "[irm]") {
  RmsClient client(0);
  REQUIRE(client.cert_valid_until() == kCertValiditySeconds);
  REQUIRE(kCertValiditySeconds == 2678400.0);  // 31 days

  auto lic = client.acquire_license("d1", one_doc(), true, 10.0);
  REQUIRE(lic.ok());
  REQUIRE(lic.value().doc_id == "d1");
  REQUIRE(lic.value().not_before == 0.0);
  REQUIRE(lic.value().not_after == 3600.0);
  REQUIRE(lic.value().acquired_at == 10.0);
  REQUIRE(lic.value().rights.contains(Right::Read));
  REQUIRE(client.cert_valid_until() == 10.0 + kCertValiditySeconds);

  auto denied = client.acquire_license("unknown", one_doc(), true, 10.0);
  REQUIRE(!denied.ok());
  REQUIRE(denied.error() == AcquireError::PolicyDenied);
}

TEST_CASE("offline acquisition serves from cache, gated by cert validity", "[irm]") {
  RmsClient client(0);
  REQUIRE(client.acquire_license("d1", one_doc(), true, 10.0).ok());

  auto cached = client.acquire_license("d1", one_doc(), false, 20.0);
  REQUIRE(cached.ok());

  auto missing = client.acquire_license("d2", one_doc(), false, 20.0);
  REQUIRE(!missing.ok());
  REQUIRE(missing.error() == AcquireError::ServerUnreachable);

  auto stale = client.acquire_license("d1", one_doc(), false, 10.0 + kCertValiditySeconds + 1);
  REQUIRE(!stale.ok());
  REQUIRE(stale.error() == AcquireError::CertificateExpired);
}

TEST_CASE("document open judges validity by the client clock alone", "[irm]") {
  RmsClient client(0);
  REQUIRE(client.acquire_license("d1", one_doc(0, 3600), true, 1.0).ok());

  REQUIRE(std::holds_alternative<OpenAllowed>(client.open_document("d1", 3599.0)));
  REQUIRE(std::holds_alternative<OpenAllowed>(client.open_document("d1", 3600.0)));

  auto after = client.open_document("d1", 3601.0);
  auto* denied = std::get_if<OpenDenied>(&after);
  REQUIRE(denied != nullptr);
  REQUIRE(denied->reason == DenyReason::Expired);

  auto none = client.open_document("d9", 100.0);
  REQUIRE(std::get_if<OpenDenied>(&none)->reason == DenyReason::NoLicense);
}

TEST_CASE("not-yet-valid window and missing read right deny the open", "[irm]") {
  RmsClient client(0);
  REQUIRE(client.acquire_license("d1", one_doc(1000, 3600), true, 1.0).ok());
  auto early = client.open_document("d1", 500.0);
  REQUIRE(std::get_if<OpenDenied>(&early)->reason == DenyReason::NotYetValid);

  RightsSet copy_only;
  copy_only.add(Right::Copy);
  RmsClient c2(0);
  REQUIRE(c2.acquire_license("d2", {DocumentPolicy{"d2", 0, 3600, copy_only}}, true, 1.0).ok());
  auto no_read = c2.open_document("d2", 100.0);
  REQUIRE(std::get_if<OpenDenied>(&no_read)->reason == DenyReason::NoRight);
}

TEST_CASE("a frozen clock keeps an expired license usable", "[irm]") {
  // The client clock never moves past 3599 while true time runs for a month.
  RmsClient client(0);
  REQUIRE(client.acquire_license("d1", one_doc(0, 3600), true, 3599.0).ok());
  for (int day = 1; day <= 30; ++day) {
    auto outcome = client.open_document("d1", 3599.0);
    INFO("day " << day);
    REQUIRE(std::holds_alternative<OpenAllowed>(outcome));
  }
}

TEST_CASE("honest forward trajectories below the expiry never see a denial", "[irm]") {
  std::mt19937_64 rng(0x5eed3001);
  std::uniform_real_distribution<double> step(0.0, 100.0);
  for (int run = 0; run < 50; ++run) {
    RmsClient client(0);
    REQUIRE(client.acquire_license("d1", one_doc(0, 3600), true, 0.0).ok());
    double clock = 0.0;
    while (true) {
      double next = clock + step(rng);
      if (next > 3600.0) break;
      clock = next;
      REQUIRE(std::holds_alternative<OpenAllowed>(client.open_document("d1", clock)));
    }
  }
}

TEST_CASE("forward jump at the threshold crashes, below or backward does not", "[irm]") {
  RmsClient client(0);
  REQUIRE(client.observe_time_change(1000.0, 1240.0) == Health::Healthy);

  RmsClient c2(0);
  REQUIRE(c2.observe_time_change(1000.0, 8200.0) == Health::Crashed);

  RmsClient c3(0);
  REQUIRE(c3.observe_time_change(10000.0, 2800.0) == Health::Healthy);  // backward
  REQUIRE(c3.observe_time_change(2800.0, 9999.0) == Health::Healthy);   // net forward < 7200

  RmsClient c4(0);
  REQUIRE(c4.observe_time_change(0.0, kDefaultCrashThresholdSeconds) == Health::Crashed);
}

TEST_CASE("repeated sub-threshold forward steps crash once the net reaches the threshold",
          "[irm]") {
  RmsClient client(0);
  for (int i = 1; i <= 29; ++i) {
    INFO("step " << i);
    REQUIRE(client.observe_time_change(0.0, 240.0) == Health::Healthy);
  }
  REQUIRE(client.observe_time_change(0.0, 240.0) == Health::Crashed);
  REQUIRE_THAT(client.tamper_accumulator_s(), Catch::Matchers::WithinAbs(7200.0, 1e-9));
}

TEST_CASE("the crash is deterministic across 25 repetitions", "[irm]") {
  for (int rep = 0; rep < 25; ++rep) {
    RmsClient client(0);
    INFO("repetition " << rep);
    REQUIRE(client.observe_time_change(5000.0, 5000.0 + 7200.0) == Health::Crashed);
    auto open = client.open_document("d1", 5000.0);
    REQUIRE(std::get_if<OpenDenied>(&open)->reason == DenyReason::Crashed);
    auto acq = client.acquire_license("d1", one_doc(), true, 5000.0);
    REQUIRE(!acq.ok());
    REQUIRE(acq.error() == AcquireError::ClientCrashed);
  }
}

TEST_CASE("crashed state persists until reinstall resets everything", "[irm]") {
  RmsClient client(0);
  REQUIRE(client.acquire_license("d1", one_doc(), true, 1.0).ok());
  client.observe_time_change(0.0, 8000.0);
  REQUIRE(client.health() == Health::Crashed);
  client.observe_time_change(8000.0, 0.0);  // no recovery by stepping back
  REQUIRE(client.health() == Health::Crashed);

  client.reinstall(9000.0);
  REQUIRE(client.health() == Health::Healthy);
  REQUIRE(client.cache().empty());
  REQUIRE(client.tamper_accumulator_s() == 0.0);
  REQUIRE(client.cert_valid_until() == 9000.0 + kCertValiditySeconds);
  auto open = client.open_document("d1", 9000.0);
  REQUIRE(std::get_if<OpenDenied>(&open)->reason == DenyReason::NoLicense);
}

TEST_CASE("kerberos gate accepts up to five minutes of skew inclusive", "[irm]") {
  REQUIRE(kerberos_gate(1000.0, 1000.0));
  REQUIRE(kerberos_gate(1299.0, 1000.0));
  REQUIRE(kerberos_gate(1300.0, 1000.0));        // exactly 300 accepts
  REQUIRE_FALSE(kerberos_gate(1301.0, 1000.0));  // beyond rejects
  REQUIRE(kerberos_gate(1000.0, 1300.0));        // symmetric
  REQUIRE_FALSE(kerberos_gate(1000.0, 1301.0));
  // Nanosecond noise on the boundary does not flip the verdict.
  REQUIRE(kerberos_gate(1300.0 + 1e-9, 1000.0));
}
