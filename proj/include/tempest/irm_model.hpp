// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#pragma once

// Rights-management client model: cached use licenses judged against the
// client's own clock, a tamper watchdog that crashes the client on forward
// clock jumps, and the Kerberos skew gate.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tempest/result.hpp"
#include "tempest/timekeeping.hpp"

namespace tempest {

// 31 days.
inline constexpr double kCertValiditySeconds = 2678400.0;
inline constexpr double kDefaultCrashThresholdSeconds = 7200.0;
inline constexpr double kKerberosMaxSkewSeconds = 300.0;

enum class Right : std::uint8_t { Read = 1, Copy = 2, Edit = 4 };

struct RightsSet {
  std::uint8_t bits = 0;

  bool operator==(const RightsSet&) const = default;
  bool contains(Right r) const { return bits & static_cast<std::uint8_t>(r); }
  void add(Right r) { bits |= static_cast<std::uint8_t>(r); }
};

struct UseLicense {
  std::string doc_id;
  std::string key_token;  // opaque handle, never interpreted
  RightsSet rights;
  double not_before = 0;
  double not_after = 0;
  double acquired_at = 0;
};

struct DocumentPolicy {
  std::string doc_id;
  double not_before = 0;
  double not_after = 0;
  RightsSet rights;
};

enum class Health { Healthy, Crashed };

enum class AcquireError { ServerUnreachable, PolicyDenied, ClientCrashed, CertificateExpired };

inline const char* to_string(AcquireError e) {
  switch (e) {
    case AcquireError::ServerUnreachable: return "server_unreachable";
    case AcquireError::PolicyDenied: return "policy_denied";
    case AcquireError::ClientCrashed: return "client_crashed";
    case AcquireError::CertificateExpired: return "certificate_expired";
  }
  return "unknown";
}

enum class DenyReason { Expired, NotYetValid, NoLicense, NoRight, Crashed };

inline const char* to_string(DenyReason r) {
  switch (r) {
    case DenyReason::Expired: return "expired";
    case DenyReason::NotYetValid: return "not_yet_valid";
    case DenyReason::NoLicense: return "no_license";
    case DenyReason::NoRight: return "no_right";
    case DenyReason::Crashed: return "crashed";
  }
  return "unknown";
}

struct OpenAllowed {
  RightsSet rights;
};

struct OpenDenied {
  DenyReason reason;
};

using OpenOutcome = std::variant<OpenAllowed, OpenDenied>;

inline bool kerberos_gate(double client_clock_now, double authority_clock_now) {
  std::int64_t skew_us = micros_of(client_clock_now - authority_clock_now);
  if (skew_us < 0) skew_us = -skew_us;
  return skew_us <= micros_of(kKerberosMaxSkewSeconds);
}

class RmsClient {
 public:
  explicit RmsClient(double installed_at_clock = 0,
                     double crash_threshold_s = kDefaultCrashThresholdSeconds)
      : crash_threshold_s_(crash_threshold_s),
        cert_valid_until_(installed_at_clock + kCertValiditySeconds) {}

  Health health() const { return health_; }
  double cert_valid_until() const { return cert_valid_until_; }
  double tamper_accumulator_s() const { return tamper_accumulator_s_; }
  const std::map<std::string, UseLicense>& cache() const { return cache_; }

  // Issues (or re-serves) a use license. Online acquisition renews the
  // device cert; offline falls back to the cache, gated by cert validity.
  Result<UseLicense, AcquireError> acquire_license(const std::string& doc_id,
                                                   const std::vector<DocumentPolicy>& policies,
                                                   bool server_reachable, double now_clock) {
    if (health_ == Health::Crashed) return AcquireError::ClientCrashed;
    if (!server_reachable) {
      auto it = cache_.find(doc_id);
      if (it == cache_.end()) return AcquireError::ServerUnreachable;
      if (now_clock > cert_valid_until_) return AcquireError::CertificateExpired;
      return it->second;
    }
    const DocumentPolicy* policy = nullptr;
    for (const auto& p : policies) {
      if (p.doc_id == doc_id) {
        policy = &p;
        break;
      }
    }
    if (!policy) return AcquireError::PolicyDenied;
    cert_valid_until_ = now_clock + kCertValiditySeconds;
    UseLicense lic;
    lic.doc_id = doc_id;
    lic.key_token = "tok-" + doc_id + "-" + std::to_string(++issue_counter_);
    lic.rights = policy->rights;
    lic.not_before = policy->not_before;
    lic.not_after = policy->not_after;
    lic.acquired_at = now_clock;
    cache_[doc_id] = lic;
    return lic;
  }

  // Validity is judged against the client clock reading, nothing else.
  OpenOutcome open_document(const std::string& doc_id, double now_clock) const {
    if (health_ == Health::Crashed) return OpenDenied{DenyReason::Crashed};
    auto it = cache_.find(doc_id);
    if (it == cache_.end()) return OpenDenied{DenyReason::NoLicense};
    const UseLicense& lic = it->second;
    if (micros_of(now_clock) < micros_of(lic.not_before)) {
      return OpenDenied{DenyReason::NotYetValid};
    }
    if (micros_of(now_clock) > micros_of(lic.not_after)) {
      return OpenDenied{DenyReason::Expired};
    }
    if (!lic.rights.contains(Right::Read)) return OpenDenied{DenyReason::NoRight};
    return OpenAllowed{lic.rights};
  }

  // Watchdog for clock discontinuities. A single forward jump at or past the
  // threshold crashes; smaller forward jumps accumulate (net of backward
  // ones) and crash once the running discrepancy reaches the threshold.
  Health observe_time_change(double old_reading, double new_reading) {
    if (health_ == Health::Crashed) return health_;
    double delta = new_reading - old_reading;
    tamper_accumulator_s_ += delta;
    std::int64_t threshold_us = micros_of(crash_threshold_s_);
    if (micros_of(delta) >= threshold_us || micros_of(tamper_accumulator_s_) >= threshold_us) {
      health_ = Health::Crashed;
    }
    return health_;
  }

  void reinstall(double now_clock) {
    health_ = Health::Healthy;
    cache_.clear();
    tamper_accumulator_s_ = 0;
    cert_valid_until_ = now_clock + kCertValiditySeconds;
  }

 private:
  Health health_ = Health::Healthy;
  double crash_threshold_s_;
  double cert_valid_until_;
  double tamper_accumulator_s_ = 0;
  std::map<std::string, UseLicense> cache_;
  std::uint64_t issue_counter_ = 0;
};

}  // namespace tempest
