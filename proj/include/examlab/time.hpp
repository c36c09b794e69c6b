#pragma once

#include <chrono>
#include <cstdint>

namespace examlab {

// Simulation time. Timestamps are seconds since the origin of the virtual
// clock, which never advances on its own.
struct VirtualClock {
  using rep = std::int64_t;
  using period = std::ratio<1>;
  using duration = std::chrono::seconds;
  using time_point = std::chrono::time_point<VirtualClock>;
  static constexpr bool is_steady = true;
};

using Timestamp = VirtualClock::time_point;
using Duration = std::chrono::seconds;

constexpr Timestamp at_second(std::int64_t s) { return Timestamp{Duration{s}}; }
constexpr std::int64_t seconds_of(Timestamp t) { return t.time_since_epoch().count(); }

}  // namespace examlab
