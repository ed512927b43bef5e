#pragma once

// Piecewise-constant discharge profiles expressed in C-rate.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "rde/csv.hpp"
#include "rde/error.hpp"

namespace rde {

struct Segment {
  double duration;  ///< s
  double c_rate;    ///< dimensionless, >= 0 (discharge)
};

struct CurrentProfile {
  std::vector<Segment> segments;
  double sample_interval = 1.0;  ///< s

  double duration() const {
    double t = 0;
    for (const auto& s : segments) t += s.duration;
    return t;
  }

  /// C-rate in effect at time t (right-continuous); 0 after the end.
  double c_rate_at(double t) const {
    double start = 0;
    for (const auto& s : segments) {
      if (t < start + s.duration) return s.c_rate;
      start += s.duration;
    }
    return 0.0;
  }

  double max_rate() const {
    double m = 0;
    for (const auto& s : segments) m = std::max(m, s.c_rate);
    return m;
  }

  void validate(double z_max = std::numeric_limits<double>::infinity()) const {
    if (!(sample_interval > 0)) throw ArgumentError("CurrentProfile: sample interval must be positive");
    for (const auto& s : segments) {
      if (!(s.duration > 0)) throw ArgumentError("CurrentProfile: segment durations must be positive");
      if (!(s.c_rate >= 0) || s.c_rate > z_max) {
        throw ArgumentError("CurrentProfile: c_rate " + std::to_string(s.c_rate) + " outside [0, z_max]");
      }
    }
  }
};

inline CurrentProfile constant_profile(double z, double duration, double sample_interval = 1.0) {
  return {{{duration, z}}, sample_interval};
}

/// Seeded random drive cycle: integer segment lengths uniform in [5, 60] s;
/// rates from a rest / cruise / burst mixture capped at z_max.
inline CurrentProfile synth_drive_cycle(std::uint64_t seed, double duration, double z_max,
                                        double sample_interval = 1.0) {
  if (!(duration > 0)) throw ArgumentError("synth_drive_cycle: duration must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> length(5, 60);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CurrentProfile p;
  p.sample_interval = sample_interval;
  double t = 0;
  while (t < duration) {
    double d = std::min<double>(length(rng), duration - t);
    const double pick = unit(rng);
    double z;
    if (pick < 0.15) {
      z = 0.0;
    } else if (pick < 0.75) {
      z = z_max * (0.05 + 0.35 * unit(rng));
    } else {
      z = z_max * (0.4 + 0.6 * unit(rng));
    }
    p.segments.push_back({d, z});
    t += d;
  }
  return p;
}

/// Notional eVTOL flight: take-off, cruise, landing.
inline CurrentProfile evtol_profile(double takeoff_s = 90, double cruise_s = 900, double landing_s = 90) {
  return {{{takeoff_s, 5.0}, {cruise_s, 1.48}, {landing_s, 5.0}}, 1.0};
}

inline void save_profile_csv(const CurrentProfile& p, const std::string& path) {
  csv::Writer w(path, {"duration_s", "c_rate"});
  for (const auto& s : p.segments) {
    const double row[] = {s.duration, s.c_rate};
    w.row(row);
  }
}

inline CurrentProfile load_profile_csv(const std::string& path, double sample_interval = 1.0) {
  const auto t = csv::read(path, {"duration_s", "c_rate"});
  CurrentProfile p;
  p.sample_interval = sample_interval;
  for (std::size_t r = 0; r < t.rows; ++r) p.segments.push_back({t.at(r, 0), t.at(r, 1)});
  p.validate();
  return p;
}

}  // namespace rde
