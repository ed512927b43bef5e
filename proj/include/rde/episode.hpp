#pragma once

// Constant-C-rate discharge episodes on NDCTNet: closed-form stepping on a
// fixed grid, head evaluation in batches, bisection-refined stop time, and
// the trapezoidal energy curve of z*c_o*V_hybrid.

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "rde/hybrid.hpp"

namespace rde {

struct EpisodeSpec {
  double z = 1;
  double tamb = 25;
  double vmin = 3;
  double tmax = std::numeric_limits<double>::infinity();  ///< infinite: voltage limit only
  double grid = 1;           ///< s
  double resolution = 0.1;   ///< stop-time bracket width, s
  double horizon = 1e6;      ///< s
  Eigen::Index chunk = 64;   ///< grid points evaluated per batch
};

struct Episode {
  std::vector<double> energy;  ///< Wh at k*grid for every grid point before the stop
  double end = 0;              ///< stop time, s
  double end_energy = 0;       ///< Wh at the stop time
  StopReason reason = StopReason::HorizonReached;
  int refine_iters = 0;
};

namespace detail {

/// Bisects [0, width], where crossed(0) is false and crossed(width) true, down
/// to `resolution` and returns the final bracket midpoint.
template <class Pred>
double refine_crossing(Pred&& crossed, double width, double resolution, int& iters) {
  double lo = 0, hi = width;
  while (hi - lo > resolution) {
    const double mid = 0.5 * (lo + hi);
    (crossed(mid) ? hi : lo) = mid;
    ++iters;
  }
  return 0.5 * (lo + hi);
}

inline void head_batch(const Ndctnet& net, const std::vector<CellState>& states, double current, bool need_t,
                       Eigen::VectorXd& v, Eigen::VectorXd& t) {
  const Eigen::Index n = static_cast<Eigen::Index>(states.size());
  Eigen::MatrixXd fv(kHvInputs, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto f = hv_features(states[k], current);
    for (int i = 0; i < kHvInputs; ++i) fv(i, k) = f[i];
  }
  v = net.h_v().forward_batch(fv).row(0).transpose();
  for (Eigen::Index k = 0; k < n; ++k) v[k] += net.voltage_offset(states[k], current);
  if (need_t) {
    Eigen::MatrixXd ft(kHtInputs, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto f = ht_features(states[k]);
      for (int i = 0; i < kHtInputs; ++i) ft(i, k) = f[i];
    }
    t = net.h_t().forward_batch(ft).row(0).transpose();
  }
}

}  // namespace detail

inline Episode run_episode(const Ndctnet& net, const CellState& s0, const EpisodeSpec& spec) {
  if (!(spec.z > 0)) throw ArgumentError("run_episode: C-rate must be positive");
  if (!(spec.grid > 0 && spec.resolution > 0 && spec.chunk >= 1)) throw ArgumentError("run_episode: bad grid");
  const bool use_t = std::isfinite(spec.tmax);
  const double current = -spec.z * net.c_o();
  const double power = spec.z * net.c_o() / 3600.0;  // Wh per (V s)
  Episode ep;

  const double v0 = net.voltage(s0, current);
  if (use_t && net.temperature(s0) >= spec.tmax) {
    ep.reason = StopReason::TemperatureCutoff;
    return ep;
  }
  if (v0 < spec.vmin) {
    ep.reason = StopReason::VoltageCutoff;
    return ep;
  }

  const LinearStep step = net.cache().step(spec.z, spec.tamb, spec.grid);
  ep.energy.push_back(0.0);
  CellState prev = s0;
  double v_prev = v0;
  double t_prev = 0;
  std::vector<CellState> states;
  Eigen::VectorXd v, temp;
  while (true) {
    states.clear();
    CellState s = prev;
    for (Eigen::Index k = 0; k < spec.chunk; ++k) {
      s = step.apply(s);
      states.push_back(s);
    }
    detail::head_batch(net, states, current, use_t, v, temp);
    for (std::size_t k = 0; k < states.size(); ++k) {
      const double t = t_prev + spec.grid;
      const bool v_cross = v[k] < spec.vmin;
      const bool t_cross = use_t && temp[k] >= spec.tmax;
      if (v_cross || t_cross) {
        double tau_v = std::numeric_limits<double>::infinity();
        double tau_t = tau_v;
        if (v_cross) {
          tau_v = detail::refine_crossing(
              [&](double tau) { return hv_phi(net, prev, spec.z, spec.tamb, tau) < spec.vmin; }, spec.grid,
              spec.resolution, ep.refine_iters);
        }
        if (t_cross) {
          tau_t = detail::refine_crossing(
              [&](double tau) { return ht_phi(net, prev, spec.z, spec.tamb, tau) >= spec.tmax; }, spec.grid,
              spec.resolution, ep.refine_iters);
        }
        const double tau = std::min(tau_v, tau_t);
        ep.reason = tau_t < tau_v ? StopReason::TemperatureCutoff : StopReason::VoltageCutoff;
        const double v_end = hv_phi(net, prev, spec.z, spec.tamb, tau);
        ep.end = t_prev + tau;
        ep.end_energy = ep.energy.back() + power * 0.5 * (v_prev + v_end) * tau;
        return ep;
      }
      ep.energy.push_back(ep.energy.back() + power * 0.5 * (v_prev + v[k]) * spec.grid);
      prev = states[k];
      v_prev = v[k];
      t_prev = t;
      if (t_prev >= spec.horizon) {
        ep.reason = StopReason::HorizonReached;
        ep.end = t_prev;
        ep.end_energy = ep.energy.back();
        return ep;
      }
    }
  }
}

}  // namespace rde
