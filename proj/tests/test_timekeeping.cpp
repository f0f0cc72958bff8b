// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "tempest/timekeeping.hpp"

using namespace tempest;

TEST_CASE("offset and delay from the four-timestamp exchange", "[timekeeping]") {
  auto z = compute_offset_delay(0, 0, 0, 0);
  REQUIRE(z.offset_s == 0.0);
  REQUIRE(z.delay_s == 0.0);

  // Server one hundred seconds ahead, instantaneous network.
  auto ahead = compute_offset_delay(0, 100, 100, 0);
  REQUIRE(ahead.offset_s == 100.0);
  REQUIRE(ahead.delay_s == 0.0);

  auto mixed = compute_offset_delay(0, 242, 242, 2);
  REQUIRE(mixed.offset_s == 241.0);
  REQUIRE(mixed.delay_s == 2.0);
}

// Independent two-party replay: walk the exchange on a true timeline with
// explicit clock offsets and per-leg latencies, then check recovery.
TEST_CASE("exchange arithmetic recovers the clock difference", "[timekeeping]") {
  std::mt19937_64 rng(0x5eed1001);
  std::uniform_real_distribution<double> offset(-500.0, 500.0);
  std::uniform_real_distribution<double> latency(1e-4, 0.05);
  std::uniform_real_distribution<double> hold(0.0, 0.01);
  std::uniform_real_distribution<double> when(0.0, 1e5);

  for (int i = 0; i < 1000; ++i) {
    double oc = offset(rng), os = offset(rng);
    double d = latency(rng), h = hold(rng), t = when(rng);
    double t1 = t + oc;
    double t2 = (t + d) + os;
    double t3 = (t + d + h) + os;
    double t4 = (t + d + h + d) + oc;
    auto od = compute_offset_delay(t1, t2, t3, t4);
    REQUIRE_THAT(od.offset_s, Catch::Matchers::WithinAbs(os - oc, 1e-9));
    REQUIRE_THAT(od.delay_s, Catch::Matchers::WithinAbs(2 * d, 1e-9));
  }
}

TEST_CASE("swapping the two parties negates the offset", "[timekeeping]") {
  std::mt19937_64 rng(0x5eed1002);
  std::uniform_real_distribution<double> offset(-500.0, 500.0);
  std::uniform_real_distribution<double> latency(1e-4, 0.05);
  for (int i = 0; i < 1000; ++i) {
    double oa = offset(rng), ob = offset(rng), d = latency(rng), t = 1000.0;
    auto ab = compute_offset_delay(t + oa, (t + d) + ob, (t + d) + ob, (t + 2 * d) + oa);
    auto ba = compute_offset_delay(t + ob, (t + d) + oa, (t + d) + oa, (t + 2 * d) + ob);
    REQUIRE_THAT(ab.offset_s + ba.offset_s, Catch::Matchers::WithinAbs(0.0, 1e-9));
    REQUIRE_THAT(ab.delay_s, Catch::Matchers::WithinAbs(ba.delay_s, 1e-9));
  }
}

TEST_CASE("clock reading combines base offset and drift", "[timekeeping]") {
  SimClock c;
  c.base_offset_s = 1.5;
  c.drift_ppm = 100;
  REQUIRE_THAT(c.read(1000.0), Catch::Matchers::WithinAbs(1001.6, 1e-12));
  REQUIRE(c.read(0.0) == 1.5);

  SimClock frozen;
  frozen.base_offset_s = 3599;
  frozen.drift_ppm = -1e6;  // cancels true-time advance entirely
  REQUIRE(frozen.read(0.0) == 3599.0);
  REQUIRE(frozen.read(86400.0) == 3599.0);
}

TEST_CASE("step corrections apply instantly, negative steps included", "[timekeeping]") {
  SimClock c;
  c = c.with_correction(7200.0, 10.0);
  REQUIRE(c.read(10.0) == 7210.0);
  c = c.with_correction(-240.0, 20.0);
  REQUIRE(c.read(20.0) == 6980.0);
}

TEST_CASE("a 500 ppm slew spreads one second over 2000 seconds", "[timekeeping]") {
  SimClock c;
  c.discipline = ClockDiscipline::Slew;
  c.max_slew_ppm = 500;
  c = c.with_correction(1.0, 100.0);

  REQUIRE(c.slew_complete_at() == 100.0 + 2000.0);
  REQUIRE(c.slew_active(1000.0));
  REQUIRE_FALSE(c.slew_active(2100.0));

  // Step-by-step integration: the reading advances at most max_slew above
  // the true rate, and lands exactly one second ahead at completion.
  double prev = c.read(100.0);
  for (int t = 101; t <= 2200; ++t) {
    double now = c.read(static_cast<double>(t));
    double rate = now - prev;
    REQUIRE(rate <= 1.0 + 500e-6 + 1e-12);
    REQUIRE(rate >= 1.0 - 1e-12);
    prev = now;
  }
  REQUIRE_THAT(c.read(2100.0) - 2100.0, Catch::Matchers::WithinAbs(1.0, 1e-12));
  REQUIRE_THAT(c.read(1100.0) - 1100.0, Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("readings never run backwards while slewing a negative correction",
          "[timekeeping]") {
  std::mt19937_64 rng(0x5eed1003);
  std::uniform_real_distribution<double> corr(-100.0, -0.1);
  std::uniform_real_distribution<double> slew(1.0, 5e5);  // below one second per second
  for (int i = 0; i < 200; ++i) {
    SimClock c;
    c.discipline = ClockDiscipline::Slew;
    c.max_slew_ppm = slew(rng);
    c = c.with_correction(corr(rng), 0.0);
    double prev = c.read(0.0);
    for (double t = 0.5; t < 50.0; t += 0.5) {
      double now = c.read(t);
      REQUIRE(now >= prev);
      prev = now;
    }
  }
}

TEST_CASE("a new slew folds in progress already applied", "[timekeeping]") {
  SimClock c;
  c.discipline = ClockDiscipline::Slew;
  c.max_slew_ppm = 500;
  c = c.with_correction(1.0, 0.0);
  // Half way through, redirect with a fresh correction.
  c = c.with_correction(0.25, 1000.0);
  REQUIRE_THAT(c.base_offset_s, Catch::Matchers::WithinAbs(0.5, 1e-12));
  REQUIRE(c.slew_complete_at() == 1000.0 + 500.0);
  REQUIRE_THAT(c.read(1500.0) - 1500.0, Catch::Matchers::WithinAbs(0.75, 1e-12));
}

TEST_CASE("microsecond quantization for threshold comparisons", "[timekeeping]") {
  REQUIRE(micros_of(7200.0) == 7200000000);
  REQUIRE(micros_of(7200.0 - 3e-9) == 7200000000);
  REQUIRE(micros_of(7199.999999) == 7199999999);
  REQUIRE(micros_of(-1.5e-6) == -2);  // llround, ties away from zero
}
