// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "tempest/ntp_codec.hpp"

using namespace tempest;

namespace {

SntpPacket random_packet(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> u32(0, 0xffffffffu);
  std::uniform_int_distribution<int> leap(0, 3);
  std::uniform_int_distribution<int> version(3, 4);
  std::uniform_int_distribution<int> mode_pick(0, 2);
  std::uniform_int_distribution<int> byte(0, 255);
  constexpr NtpMode kModes[] = {NtpMode::Client, NtpMode::Server, NtpMode::Broadcast};
  SntpPacket p;
  p.leap = static_cast<LeapIndicator>(leap(rng));
  p.version = static_cast<std::uint8_t>(version(rng));
  p.mode = kModes[mode_pick(rng)];
  p.stratum = static_cast<std::uint8_t>(byte(rng));
  p.poll_exponent = static_cast<std::int8_t>(byte(rng));
  p.precision_exponent = static_cast<std::int8_t>(byte(rng));
  p.root_delay = u32(rng);
  p.root_dispersion = u32(rng);
  for (auto& b : p.reference_id) b = static_cast<std::uint8_t>(byte(rng));
  p.reference_ts = {u32(rng), u32(rng)};
  p.originate_ts = {u32(rng), u32(rng)};
  p.receive_ts = {u32(rng), u32(rng)};
  p.transmit_ts = {u32(rng), u32(rng)};
  return p;
}

}  // namespace

TEST_CASE("decode inverts encode for structurally valid frames", "[codec]") {
  std::mt19937_64 rng(0x5eed0001);
  for (int i = 0; i < 2000; ++i) {
    SntpPacket p = random_packet(rng);
    auto bytes = encode(p);
    auto back = decode(bytes);
    REQUIRE(back.ok());
    REQUIRE(back.value() == p);
  }
}

TEST_CASE("first header byte packs leap, version and mode", "[codec]") {
  SntpPacket p;
  p.leap = LeapIndicator::NoWarning;
  p.version = 4;
  p.mode = NtpMode::Client;
  auto bytes = encode(p);
  REQUIRE(bytes[0] == 0x23);

  p.version = 3;
  p.mode = NtpMode::Server;
  REQUIRE(encode(p)[0] == ((3 << 3) | 4));

  p.leap = LeapIndicator::Unsynchronized;
  REQUIRE((encode(p)[0] >> 6) == 3);
}

TEST_CASE("zero transmit timestamp encodes as eight zero bytes", "[codec]") {
  SntpPacket p;
  p.transmit_ts = {0, 0};
  auto bytes = encode(p);
  for (std::size_t i = 40; i < 48; ++i) {
    INFO("byte " << i);
    REQUIRE(bytes[i] == 0x00);
  }
}

TEST_CASE("fraction 0x80000000 is exactly half a second", "[codec]") {
  NtpTimestamp ts{kNtpUnixEpochOffset, 0x80000000u};
  REQUIRE(ts_to_unix(ts) == 0.5);
  REQUIRE(ts.to_seconds() == static_cast<double>(kNtpUnixEpochOffset) + 0.5);

  SntpPacket p;
  p.transmit_ts = ts;
  auto bytes = encode(p);
  REQUIRE(bytes[44] == 0x80);
  REQUIRE(bytes[45] == 0x00);
  REQUIRE(bytes[46] == 0x00);
  REQUIRE(bytes[47] == 0x00);
}

TEST_CASE("decode rejects bad lengths, versions and modes", "[codec]") {
  SntpPacket p;
  auto bytes = encode(p);

  SECTION("short or long frames") {
    auto r = decode(std::span(bytes.data(), 47));
    REQUIRE(!r.ok());
    REQUIRE(r.error() == DecodeError::WrongLength);
    std::vector<std::uint8_t> long_frame(bytes.begin(), bytes.end());
    long_frame.resize(49, 0);
    auto r2 = decode(long_frame);
    REQUIRE(!r2.ok());
    REQUIRE(r2.error() == DecodeError::WrongLength);
  }

  SECTION("version 2 and version 5") {
    for (std::uint8_t vn : {2, 5}) {
      bytes[0] = static_cast<std::uint8_t>((vn << 3) | 3);
      auto r = decode(bytes);
      REQUIRE(!r.ok());
      REQUIRE(r.error() == DecodeError::InvalidVersion);
    }
  }

  SECTION("reserved modes") {
    for (std::uint8_t mode : {0, 1, 2, 6, 7}) {
      bytes[0] = static_cast<std::uint8_t>((3 << 3) | mode);
      auto r = decode(bytes);
      REQUIRE(!r.ok());
      REQUIRE(r.error() == DecodeError::InvalidMode);
    }
  }
}

TEST_CASE("authenticator trailer is tolerated and flagged, never validated", "[codec]") {
  SntpPacket p;
  p.mode = NtpMode::Server;
  p.version = 3;
  auto frame = encode(p);
  std::vector<std::uint8_t> with_mac(frame.begin(), frame.end());
  for (int i = 0; i < 20; ++i) with_mac.push_back(static_cast<std::uint8_t>(0xa0 + i));

  auto r = decode(with_mac);
  REQUIRE(r.ok());
  REQUIRE(r.value().has_authenticator);
  REQUIRE(r.value().authenticator[0] == 0xa0);
  REQUIRE(r.value().authenticator[19] == 0xb3);
  // Same header fields either way.
  SntpPacket bare = decode(frame).value();
  SntpPacket mac = r.value();
  mac.has_authenticator = false;
  mac.authenticator = {};
  REQUIRE(mac == bare);
}

TEST_CASE("epoch conversions use the 1900 to 1970 offset", "[codec]") {
  REQUIRE(kNtpUnixEpochOffset == 2208988800u);
  REQUIRE(ts_to_unix({kNtpUnixEpochOffset, 0}) == 0.0);

  auto at_unix_epoch = ts_from_unix(0.0);
  REQUIRE(at_unix_epoch.ok());
  REQUIRE(at_unix_epoch.value() == NtpTimestamp{kNtpUnixEpochOffset, 0});

  auto before_1900 = ts_from_unix(-2208988801.0);
  REQUIRE(!before_1900.ok());
  REQUIRE(before_1900.error() == ConvertError::OutOfRange);
}

TEST_CASE("unix round trip is the identity near the epoch", "[codec]") {
  std::mt19937_64 rng(0x5eed0002);
  std::uniform_int_distribution<std::int64_t> sec(-(1 << 20), 1 << 20);
  std::uniform_int_distribution<std::uint32_t> frac(0, 0xffffffffu);
  for (int i = 0; i < 2000; ++i) {
    NtpTimestamp ts{static_cast<std::uint32_t>(static_cast<std::int64_t>(kNtpUnixEpochOffset) +
                                               sec(rng)),
                    frac(rng)};
    auto back = ts_from_unix(ts_to_unix(ts));
    REQUIRE(back.ok());
    REQUIRE(back.value() == ts);
  }
}

TEST_CASE("from_seconds truncates toward zero", "[codec]") {
  REQUIRE(NtpTimestamp::from_seconds(1.0) == NtpTimestamp{1, 0});
  REQUIRE(NtpTimestamp::from_seconds(0.5) == NtpTimestamp{0, 0x80000000u});
  // 2^-33 rounds down to zero fraction, 3 * 2^-33 truncates to 2^-32.
  REQUIRE(NtpTimestamp::from_seconds(std::ldexp(1.0, -33)) == NtpTimestamp{0, 0});
  REQUIRE(NtpTimestamp::from_seconds(3 * std::ldexp(1.0, -33)) == NtpTimestamp{0, 1});
  // Exact grid values survive a round trip.
  std::mt19937_64 rng(0x5eed0003);
  std::uniform_int_distribution<std::uint32_t> sec(0, 1 << 21);
  std::uniform_int_distribution<std::uint32_t> frac(0, 0xffffffffu);
  for (int i = 0; i < 2000; ++i) {
    NtpTimestamp ts{sec(rng), frac(rng)};
    REQUIRE(NtpTimestamp::from_seconds(ts.to_seconds()) == ts);
  }
}
