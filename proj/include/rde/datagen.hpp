#pragma once

// Branch-out dataset generation for the RDT and energy networks: run NDCTNet
// along a parent profile and, at every stride point and every C-rate of the
// grid, discharge at constant C-rate to Vmin.

#include <cmath>
#include <string>
#include <vector>

#include "rde/csv.hpp"
#include "rde/episode.hpp"
#include "rde/parallel.hpp"

namespace rde {

struct RdtSample {
  CellState state;
  double z;
  double tamb;
  double rdt_vmin;  ///< s
};

struct EnergySample {
  CellState state;
  double z;
  double tamb;
  double rdt_vmin;  ///< of the parent episode, s
  double dt;        ///< s
  double energy;    ///< Wh
};

/// n log-spaced C-rates from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, int n) {
  if (!(lo > 0 && hi > lo) || n < 2) throw ArgumentError("log_grid: need 0 < lo < hi and n >= 2");
  std::vector<double> z(n);
  for (int k = 0; k < n; ++k) z[k] = lo * std::pow(hi / lo, static_cast<double>(k) / (n - 1));
  z.front() = lo;
  z.back() = hi;
  return z;
}

struct BranchOptions {
  double resolution = 0.1;        ///< rdt refinement, s
  double episode_grid = 1;        ///< s
  int energy_points = 48;         ///< per episode, including dt = 0 and dt = rdt
  unsigned threads = 1;
};

struct BranchOutput {
  std::vector<RdtSample> rdt;
  std::vector<EnergySample> energy;
  std::size_t branches = 0;   ///< stride points visited
  std::size_t skipped = 0;    ///< (t, z) pairs already below Vmin or never reaching it
  double parent_end = 0;      ///< s
  StopReason parent_stop = StopReason::HorizonReached;
};

/// Episode horizon: generous multiple of the nominal time to empty.
inline double episode_horizon(double z) { return 3.0 * 3600.0 / z + 3600.0; }

inline BranchOutput branch_out_generate(const Ndctnet& net, const CurrentProfile& profile,
                                        const std::vector<double>& z_grid, double t_stride, double Tamb,
                                        const OperatingLimits& limits, const BranchOptions& opt = {}) {
  if (!(t_stride > 0)) throw ArgumentError("branch_out_generate: stride must be positive");
  if (opt.energy_points < 2) throw ArgumentError("branch_out_generate: need at least 2 energy points per episode");
  for (double z : z_grid) {
    if (!(z > 0)) throw ArgumentError("branch_out_generate: C-rates must be positive");
  }
  const Trajectory parent = hybrid_simulate(net, profile, CellState::rested(1.0, Tamb), Tamb, limits);
  BranchOutput out;
  out.parent_end = parent.end_time();
  out.parent_stop = parent.stop_reason;

  const long every = std::lround(t_stride / profile.sample_interval);
  if (every < 1 || std::abs(static_cast<double>(every) * profile.sample_interval - t_stride) > 1e-9 * t_stride) {
    throw ArgumentError("branch_out_generate: stride must be a multiple of the sample interval");
  }
  std::vector<std::size_t> branch_index;
  for (std::size_t k = 0; k < parent.size(); k += static_cast<std::size_t>(every)) branch_index.push_back(k);
  out.branches = branch_index.size();

  struct Slot {
    std::vector<RdtSample> rdt;
    std::vector<EnergySample> energy;
    std::size_t skipped = 0;
  };
  std::vector<Slot> slots(branch_index.size());
  parallel_for(branch_index.size(), opt.threads, [&](std::size_t b) {
    const CellState& s = parent.states[branch_index[b]];
    Slot& slot = slots[b];
    for (double z : z_grid) {
      EpisodeSpec spec;
      spec.z = z;
      spec.tamb = Tamb;
      spec.vmin = limits.Vmin;
      spec.grid = opt.episode_grid;
      spec.resolution = opt.resolution;
      spec.horizon = episode_horizon(z);
      const Episode ep = run_episode(net, s, spec);
      if (ep.reason != StopReason::VoltageCutoff || ep.end <= 0) {
        ++slot.skipped;
        continue;
      }
      slot.rdt.push_back({s, z, Tamb, ep.end});
      // Uniform decimation over the grid, always keeping dt = 0 and dt = rdt.
      const std::size_t K = ep.energy.size();
      const std::size_t n = static_cast<std::size_t>(opt.energy_points);
      if (K + 1 <= n) {
        for (std::size_t k = 0; k < K; ++k) {
          slot.energy.push_back({s, z, Tamb, ep.end, static_cast<double>(k) * spec.grid, ep.energy[k]});
        }
      } else {
        std::size_t last = K;
        for (std::size_t i = 0; i + 1 < n; ++i) {
          const std::size_t k = static_cast<std::size_t>(
              std::llround(static_cast<double>(i) * static_cast<double>(K - 1) / static_cast<double>(n - 2)));
          if (k == last) continue;
          last = k;
          slot.energy.push_back({s, z, Tamb, ep.end, static_cast<double>(k) * spec.grid, ep.energy[k]});
        }
      }
      slot.energy.push_back({s, z, Tamb, ep.end, ep.end, ep.end_energy});
    }
  });
  for (auto& slot : slots) {
    out.rdt.insert(out.rdt.end(), slot.rdt.begin(), slot.rdt.end());
    out.energy.insert(out.energy.end(), slot.energy.begin(), slot.energy.end());
    out.skipped += slot.skipped;
  }
  return out;
}

// Network inputs

inline constexpr int kRdtInputs = 7;     // x, z, Tamb
inline constexpr int kEnergyInputs = 8;  // x, z, Tamb, dt

inline std::array<double, kRdtInputs> rdt_features(const CellState& s, double z, double tamb) {
  return {s.Vb, s.Vs, s.V1, s.Tcore, s.Tsurf, z, tamb};
}
inline std::array<double, kEnergyInputs> energy_features(const CellState& s, double z, double tamb, double dt) {
  return {s.Vb, s.Vs, s.V1, s.Tcore, s.Tsurf, z, tamb, dt};
}

inline Dataset rdt_dataset(const std::vector<RdtSample>& samples) {
  Dataset d{Eigen::MatrixXd(kRdtInputs, samples.size()), Eigen::MatrixXd(1, samples.size())};
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto f = rdt_features(samples[k].state, samples[k].z, samples[k].tamb);
    for (int i = 0; i < kRdtInputs; ++i) d.inputs(i, k) = f[i];
    d.targets(0, k) = samples[k].rdt_vmin;
  }
  return d;
}

// FNN_E target is the mean power 3600 E / dt in W. E(0) = 0 holds by
// construction, so dt = 0 samples carry nothing and are dropped.
inline Dataset energy_dataset(const std::vector<EnergySample>& samples) {
  std::vector<const EnergySample*> kept;
  kept.reserve(samples.size());
  for (const auto& e : samples) {
    if (e.dt > 0) kept.push_back(&e);
  }
  Dataset d{Eigen::MatrixXd(kEnergyInputs, kept.size()), Eigen::MatrixXd(1, kept.size())};
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto& e = *kept[k];
    const auto f = energy_features(e.state, e.z, e.tamb, e.dt);
    for (int i = 0; i < kEnergyInputs; ++i) d.inputs(i, k) = f[i];
    d.targets(0, k) = 3600.0 * e.energy / e.dt;
  }
  return d;
}

// CSV files

inline const std::vector<std::string>& rdt_columns() {
  static const std::vector<std::string> c = {"vb", "vs", "v1", "tcore", "tsurf", "z", "tamb", "rdt_s"};
  return c;
}
inline const std::vector<std::string>& energy_columns() {
  static const std::vector<std::string> c = {"vb", "vs", "v1",   "tcore", "tsurf",
                                              "z",  "tamb", "rdt_s", "dt_s", "energy_wh"};
  return c;
}

inline void save_rdt_csv(const std::vector<RdtSample>& samples, const std::string& path) {
  csv::Writer w(path, rdt_columns());
  for (const auto& r : samples) {
    const double row[] = {r.state.Vb, r.state.Vs, r.state.V1, r.state.Tcore, r.state.Tsurf, r.z, r.tamb, r.rdt_vmin};
    w.row(row);
  }
}

inline void save_energy_csv(const std::vector<EnergySample>& samples, const std::string& path) {
  csv::Writer w(path, energy_columns());
  for (const auto& e : samples) {
    const double row[] = {e.state.Vb, e.state.Vs, e.state.V1, e.state.Tcore, e.state.Tsurf,
                          e.z,        e.tamb,     e.rdt_vmin, e.dt,          e.energy};
    w.row(row);
  }
}

inline std::vector<RdtSample> load_rdt_csv(const std::string& path) {
  const auto t = csv::read(path, rdt_columns());
  std::vector<RdtSample> out(t.rows);
  for (std::size_t r = 0; r < t.rows; ++r) {
    const auto v = t.row(r);
    out[r] = {{v[0], v[1], v[2], v[3], v[4]}, v[5], v[6], v[7]};
  }
  return out;
}

inline std::vector<EnergySample> load_energy_csv(const std::string& path) {
  const auto t = csv::read(path, energy_columns());
  std::vector<EnergySample> out(t.rows);
  for (std::size_t r = 0; r < t.rows; ++r) {
    const auto v = t.row(r);
    out[r] = {{v[0], v[1], v[2], v[3], v[4]}, v[5], v[6], v[7], v[8], v[9]};
  }
  return out;
}

}  // namespace rde
