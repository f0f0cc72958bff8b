// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#pragma once

// Simulated clocks and the four-timestamp exchange arithmetic.

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace tempest {

// Quantize to whole microseconds for threshold comparisons, so sub-nanosecond
// timestamp truncation noise cannot flip a boundary case.
inline std::int64_t micros_of(double seconds) {
  return std::llround(seconds * 1e6);
}

struct OffsetDelay {
  double offset_s = 0;
  double delay_s = 0;
};

// t1 request sent (client clock), t2 request received (server clock),
// t3 reply sent (server clock), t4 reply received (client clock).
inline OffsetDelay compute_offset_delay(double t1, double t2, double t3, double t4) {
  return {((t2 - t1) + (t3 - t4)) / 2.0, (t4 - t1) - (t3 - t2)};
}

struct SyncSample {
  double t1 = 0;
  double t2 = 0;
  double t3 = 0;
  double t4 = 0;
  double offset_s = 0;
  double delay_s = 0;
};

enum class ClockDiscipline { Step, Slew };

// A clock is a pure function of true time; corrections return a new value.
// read(t) = t + base_offset + drift_ppm * 1e-6 * (t - origin) + slew progress.
struct SimClock {
  double base_offset_s = 0;
  double drift_ppm = 0;
  ClockDiscipline discipline = ClockDiscipline::Step;
  double max_slew_ppm = 500;
  double origin_true_time_s = 0;

  // Active slew segment; magnitude still to apply and its sign.
  double slew_total_s = 0;
  double slew_started_at_s = 0;

  double slew_rate() const { return max_slew_ppm * 1e-6; }

  double slew_progress(double true_time_s) const {
    if (slew_total_s == 0) return 0;
    double run = std::max(0.0, true_time_s - slew_started_at_s) * slew_rate();
    double mag = std::min(run, std::fabs(slew_total_s));
    return std::copysign(mag, slew_total_s);
  }

  bool slew_active(double true_time_s) const {
    return slew_total_s != 0 && slew_progress(true_time_s) != slew_total_s;
  }

  double slew_complete_at() const {
    if (slew_total_s == 0) return slew_started_at_s;
    return slew_started_at_s + std::fabs(slew_total_s) / slew_rate();
  }

  double read(double true_time_s) const {
    return true_time_s + base_offset_s + drift_ppm * 1e-6 * (true_time_s - origin_true_time_s) +
           slew_progress(true_time_s);
  }

  SimClock with_correction(double offset_s, double now_true_s) const {
    SimClock next = *this;
    if (discipline == ClockDiscipline::Step) {
      next.base_offset_s += offset_s;
      return next;
    }
    // Fold whatever has already slewed into the base before starting over.
    next.base_offset_s += slew_progress(now_true_s);
    next.slew_total_s = offset_s;
    next.slew_started_at_s = now_true_s;
    return next;
  }
};

}  // namespace tempest
