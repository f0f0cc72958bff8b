// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#pragma once

// SNTP wire codec: 48-byte big-endian frames, 64-bit fixed-point timestamps.
// An optional 20-byte authenticator trailer (key id + digest) is carried as an
// opaque suffix and never validated.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "tempest/result.hpp"

namespace tempest {

inline constexpr std::size_t kSntpFrameSize = 48;
inline constexpr std::size_t kAuthenticatorSize = 20;

// Seconds between the 1900 timestamp epoch and the 1970 civil epoch.
inline constexpr std::uint32_t kNtpUnixEpochOffset = 2208988800u;

// 64-bit timestamp: whole seconds since 1900 plus a 2^-32 s binary fraction.
struct NtpTimestamp {
  std::uint32_t seconds = 0;
  std::uint32_t fraction = 0;

  bool operator==(const NtpTimestamp&) const = default;

  bool is_zero() const { return seconds == 0 && fraction == 0; }

  double to_seconds() const {
    return static_cast<double>(seconds) + static_cast<double>(fraction) / 4294967296.0;
  }

  // Truncates toward zero; requires 0 <= s < 2^32.
  static NtpTimestamp from_seconds(double s) {
    if (s <= 0.0) return {0, 0};
    double whole = std::floor(s);
    if (whole >= 4294967296.0) return {0xffffffffu, 0xffffffffu};
    // s - whole is exact in binary floating point, the 2^32 scale is too.
    double frac = (s - whole) * 4294967296.0;
    return {static_cast<std::uint32_t>(whole), static_cast<std::uint32_t>(frac)};
  }
};

enum class NtpMode : std::uint8_t {
  Client = 3,
  Server = 4,
  Broadcast = 5,
};

enum class LeapIndicator : std::uint8_t {
  NoWarning = 0,
  AddSecond = 1,
  DeleteSecond = 2,
  Unsynchronized = 3,
};

struct SntpPacket {
  LeapIndicator leap = LeapIndicator::NoWarning;
  std::uint8_t version = 3;
  NtpMode mode = NtpMode::Client;
  std::uint8_t stratum = 0;
  std::int8_t poll_exponent = 0;
  std::int8_t precision_exponent = 0;
  std::uint32_t root_delay = 0;       // raw 16.16 field
  std::uint32_t root_dispersion = 0;  // raw 16.16 field
  std::array<std::uint8_t, 4> reference_id{};
  NtpTimestamp reference_ts;
  NtpTimestamp originate_ts;
  NtpTimestamp receive_ts;
  NtpTimestamp transmit_ts;
  bool has_authenticator = false;
  std::array<std::uint8_t, kAuthenticatorSize> authenticator{};

  bool operator==(const SntpPacket&) const = default;
};

enum class DecodeError {
  WrongLength,
  InvalidVersion,
  InvalidMode,
};

inline const char* to_string(DecodeError e) {
  switch (e) {
    case DecodeError::WrongLength: return "wrong_length";
    case DecodeError::InvalidVersion: return "invalid_version";
    case DecodeError::InvalidMode: return "invalid_mode";
  }
  return "unknown";
}

namespace detail {

inline void put_u32(std::uint8_t* p, std::uint32_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 24);
  p[1] = static_cast<std::uint8_t>(v >> 16);
  p[2] = static_cast<std::uint8_t>(v >> 8);
  p[3] = static_cast<std::uint8_t>(v);
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void put_ts(std::uint8_t* p, const NtpTimestamp& ts) {
  put_u32(p, ts.seconds);
  put_u32(p + 4, ts.fraction);
}

inline NtpTimestamp get_ts(const std::uint8_t* p) {
  return {get_u32(p), get_u32(p + 4)};
}

}  // namespace detail

inline std::array<std::uint8_t, kSntpFrameSize> encode(const SntpPacket& p) {
  std::array<std::uint8_t, kSntpFrameSize> out{};
  out[0] = static_cast<std::uint8_t>((static_cast<std::uint8_t>(p.leap) << 6) |
                                     ((p.version & 0x7u) << 3) |
                                     (static_cast<std::uint8_t>(p.mode) & 0x7u));
  out[1] = p.stratum;
  out[2] = static_cast<std::uint8_t>(p.poll_exponent);
  out[3] = static_cast<std::uint8_t>(p.precision_exponent);
  detail::put_u32(&out[4], p.root_delay);
  detail::put_u32(&out[8], p.root_dispersion);
  std::memcpy(&out[12], p.reference_id.data(), 4);
  detail::put_ts(&out[16], p.reference_ts);
  detail::put_ts(&out[24], p.originate_ts);
  detail::put_ts(&out[32], p.receive_ts);
  detail::put_ts(&out[40], p.transmit_ts);
  return out;
}

inline Result<SntpPacket, DecodeError> decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kSntpFrameSize && bytes.size() != kSntpFrameSize + kAuthenticatorSize) {
    return DecodeError::WrongLength;
  }
  SntpPacket p;
  std::uint8_t first = bytes[0];
  p.leap = static_cast<LeapIndicator>(first >> 6);
  p.version = (first >> 3) & 0x7u;
  std::uint8_t mode = first & 0x7u;
  if (p.version != 3 && p.version != 4) return DecodeError::InvalidVersion;
  if (mode != 3 && mode != 4 && mode != 5) return DecodeError::InvalidMode;
  p.mode = static_cast<NtpMode>(mode);
  p.stratum = bytes[1];
  p.poll_exponent = static_cast<std::int8_t>(bytes[2]);
  p.precision_exponent = static_cast<std::int8_t>(bytes[3]);
  p.root_delay = detail::get_u32(&bytes[4]);
  p.root_dispersion = detail::get_u32(&bytes[8]);
  std::memcpy(p.reference_id.data(), &bytes[12], 4);
  p.reference_ts = detail::get_ts(&bytes[16]);
  p.originate_ts = detail::get_ts(&bytes[24]);
  p.receive_ts = detail::get_ts(&bytes[32]);
  p.transmit_ts = detail::get_ts(&bytes[40]);
  if (bytes.size() == kSntpFrameSize + kAuthenticatorSize) {
    p.has_authenticator = true;
    std::memcpy(p.authenticator.data(), &bytes[kSntpFrameSize], kAuthenticatorSize);
  }
  return p;
}

enum class ConvertError { OutOfRange };

// Civil seconds since 1970. Loses sub-2^-32 precision only when the integer
// part is large; exact whenever (seconds - epoch offset) fits 20 bits.
inline double ts_to_unix(const NtpTimestamp& ts) {
  return (static_cast<double>(ts.seconds) - static_cast<double>(kNtpUnixEpochOffset)) +
         static_cast<double>(ts.fraction) / 4294967296.0;
}

inline Result<NtpTimestamp, ConvertError> ts_from_unix(double unix_seconds) {
  // Split before shifting epochs: adding ~2.2e9 to the double first would
  // round away sub-2^-32 detail that the fraction field can still hold.
  double whole = std::floor(unix_seconds);
  double frac = unix_seconds - whole;  // exact for |unix_seconds| < 2^52
  std::int64_t sec = static_cast<std::int64_t>(whole) + kNtpUnixEpochOffset;
  if (sec < 0 || sec > 0xffffffffll) return ConvertError::OutOfRange;
  auto fraction = static_cast<std::uint64_t>(frac * 4294967296.0);
  if (fraction > 0xffffffffull) fraction = 0xffffffffull;
  return NtpTimestamp{static_cast<std::uint32_t>(sec), static_cast<std::uint32_t>(fraction)};
}

}  // namespace tempest
