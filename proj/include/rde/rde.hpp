#pragma once

// Remaining-discharge-energy prediction: FNN_RDT gives the time to Vmin, a
// checkpoint scan plus bisection on the propagated temperature head gives the
// time to Tmax, and FNN_E turns the earlier of the two into energy.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include "rde/datagen.hpp"
#include "rde/episode.hpp"

namespace rde {

enum class Limiting { Voltage, Temperature };

inline const char* to_string(Limiting l) { return l == Limiting::Voltage ? "voltage" : "temperature"; }

struct RdeResult {
  double rdt = 0;     ///< s
  double energy = 0;  ///< Wh
  Limiting limiting = Limiting::Voltage;
  double rdt_vmin = 0;                ///< s; NaN when an oracle run stopped on temperature first
  std::optional<double> rdt_tmax;     ///< s
  int bisect_iters = 0;
  bool extrapolated = false;          ///< z outside the trained C-rate range
};

struct RdePredictor {
  Mlp fnn_rdt;  ///< x, z, Tamb -> time to Vmin
  Mlp fnn_e;    ///< x, z, Tamb, dt -> energy
  Ndctnet model;
  OperatingLimits limits;
  int m = 20;
  double eps = 0.01;  ///< degC
  int max_bisect = 60;
  double z_min = 0.2;
  double z_max = 8;

  void validate() const {
    if (fnn_rdt.inputs() != kRdtInputs || fnn_rdt.outputs() != 1) throw ArgumentError("RdePredictor: FNN_RDT must map 7 -> 1");
    if (fnn_e.inputs() != kEnergyInputs || fnn_e.outputs() != 1) throw ArgumentError("RdePredictor: FNN_E must map 8 -> 1");
    if (m < 2) throw ArgumentError("RdePredictor: m must be >= 2");
    if (!(eps > 0)) throw ArgumentError("RdePredictor: eps must be > 0");
    if (max_bisect < 1) throw ArgumentError("RdePredictor: max_bisect must be >= 1");
    limits.validate();
  }

  bool in_envelope(double z) const { return z >= z_min * (1 - 1e-12) && z <= z_max * (1 + 1e-12); }
};

inline double predict_rdt_vmin(const RdePredictor& p, const CellState& s, double z, double Tamb) {
  return std::max(0.0, p.fnn_rdt.forward1(rdt_features(s, z, Tamb)));
}

inline double predict_energy(const RdePredictor& p, const CellState& s, double z, double Tamb, double dt) {
  if (!(dt >= 0)) throw ArgumentError("predict_energy: dt must be >= 0");
  if (dt == 0) return 0.0;
  return std::max(0.0, p.fnn_e.forward1(energy_features(s, z, Tamb, dt))) * dt / 3600.0;
}

/// (delta_{i*-1}, delta_{i*}) for the first checkpoint i* whose propagated
/// temperature reaches Tmax, or nothing when all m stay below.
inline std::optional<std::pair<double, double>> checkpoint_scan(const RdePredictor& p, const CellState& s, double z,
                                                               double Tamb, double rdt_vmin) {
  if (!(rdt_vmin > 0)) throw ArgumentError("checkpoint_scan: rdt_vmin must be positive");
  const double delta = rdt_vmin / p.m;
  Eigen::MatrixXd features(kHtInputs, p.m);
  for (int i = 1; i <= p.m; ++i) {
    const auto f = ht_features(propagate(s, z, Tamb, i * delta, p.model.cache()));
    for (int k = 0; k < kHtInputs; ++k) features(k, i - 1) = f[k];
  }
  const Eigen::MatrixXd t = p.model.h_t().forward_batch(features);
  for (int i = 1; i <= p.m; ++i) {
    if (t(0, i - 1) >= p.limits.Tmax) return std::make_pair((i - 1) * delta, i * delta);
  }
  return std::nullopt;
}

struct BisectResult {
  double root;
  int iters;
  double residual;
};

/// Midpoint bisection of an increasing-through-zero function: stops as soon as
/// |f(tau)| < eps. Requires f(lo) < 0 <= f(hi).
template <class F>
BisectResult bisect_root(F&& f, double lo, double hi, double eps, int max_iter) {
  const double f_lo = f(lo);
  const double f_hi = f(hi);
  if (!(f_lo < 0 && f_hi >= 0)) {
    throw BracketError("bisection: bracket does not straddle the root (f(lo) = " + std::to_string(f_lo) +
                       ", f(hi) = " + std::to_string(f_hi) + ")");
  }
  double r = f_hi;
  for (int it = 1; it <= max_iter; ++it) {
    const double tau = 0.5 * (lo + hi);
    r = f(tau);
    if (std::abs(r) < eps) return {tau, it, r};
    (r < 0 ? lo : hi) = tau;
  }
  throw ConvergenceError("bisection: iteration cap reached", r);
}

inline BisectResult bisection_tmax(const RdePredictor& p, const CellState& s, double z, double Tamb,
                                   std::pair<double, double> bracket) {
  return bisect_root([&](double tau) { return ht_phi(p.model, s, z, Tamb, tau) - p.limits.Tmax; }, bracket.first,
                     bracket.second, p.eps, p.max_bisect);
}

inline RdeResult predict_rde(const RdePredictor& p, const CellState& s, double z, double Tamb) {
  RdeResult r;
  r.extrapolated = !p.in_envelope(z);
  if (s.Tcore >= p.limits.Tmax || p.model.temperature(s) >= p.limits.Tmax) {
    r.limiting = Limiting::Temperature;
    r.rdt_vmin = predict_rdt_vmin(p, s, z, Tamb);
    r.rdt_tmax = 0.0;
    return r;
  }
  r.rdt_vmin = predict_rdt_vmin(p, s, z, Tamb);
  r.rdt = r.rdt_vmin;
  if (r.rdt_vmin > 0) {
    if (auto bracket = checkpoint_scan(p, s, z, Tamb, r.rdt_vmin)) {
      const BisectResult b = bisection_tmax(p, s, z, Tamb, *bracket);
      r.rdt_tmax = b.root;
      r.bisect_iters = b.iters;
      if (b.root < r.rdt_vmin) {
        r.rdt = b.root;
        r.limiting = Limiting::Temperature;
      }
    }
  }
  r.energy = r.rdt > 0 ? predict_energy(p, s, z, Tamb, r.rdt) : 0.0;
  return r;
}

struct OracleOptions {
  double grid = 1;            ///< s
  double resolution = 0.01;   ///< s
  bool resolve_both = false;  ///< also find the time to Vmin when temperature stops first
};

/// Ground truth by dense closed-form stepping of NDCTNet until the first limit.
inline RdeResult oracle_rde(const Ndctnet& net, const CellState& s, double z, double Tamb,
                            const OperatingLimits& limits, const OracleOptions& opt = {}) {
  if (!(z > 0)) throw ArgumentError("oracle_rde: C-rate must be positive");
  RdeResult r;
  if (s.Tcore >= limits.Tmax || net.temperature(s) >= limits.Tmax) {
    r.limiting = Limiting::Temperature;
    r.rdt_vmin = std::numeric_limits<double>::quiet_NaN();
    r.rdt_tmax = 0.0;
    return r;
  }
  EpisodeSpec spec;
  spec.z = z;
  spec.tamb = Tamb;
  spec.vmin = limits.Vmin;
  spec.tmax = limits.Tmax;
  spec.grid = opt.grid;
  spec.resolution = opt.resolution;
  spec.horizon = episode_horizon(z);
  const Episode ep = run_episode(net, s, spec);
  if (ep.reason == StopReason::HorizonReached) {
    throw NumericalError("oracle_rde: no limit reached within " + std::to_string(spec.horizon) + " s");
  }
  r.rdt = ep.end;
  r.energy = ep.end_energy;
  r.bisect_iters = ep.refine_iters;
  if (ep.reason == StopReason::TemperatureCutoff) {
    r.limiting = Limiting::Temperature;
    r.rdt_tmax = ep.end;
    r.rdt_vmin = std::numeric_limits<double>::quiet_NaN();
    if (opt.resolve_both) {
      spec.tmax = std::numeric_limits<double>::infinity();
      r.rdt_vmin = run_episode(net, s, spec).end;
    }
  } else {
    r.rdt_vmin = ep.end;
  }
  return r;
}

/// Adaptive Simpson quadrature.
template <class F>
double adaptive_simpson(F&& f, double a, double b, double tol, int depth = 50) {
  auto simpson = [&](double fa, double fm, double fb, double h) { return h / 6.0 * (fa + 4 * fm + fb); };
  auto rec = [&](auto&& self, double lo, double hi, double flo, double fmid, double fhi, double whole, double eps,
                 int d) -> double {
    const double mid = 0.5 * (lo + hi);
    const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(flo, flm, fmid, mid - lo);
    const double right = simpson(fmid, frm, fhi, hi - mid);
    if (d <= 0 || std::abs(left + right - whole) <= 15 * eps) return left + right + (left + right - whole) / 15;
    return self(self, lo, mid, flo, flm, fmid, left, eps / 2, d - 1) +
           self(self, mid, hi, fmid, frm, fhi, right, eps / 2, d - 1);
  };
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(rec, a, b, fa, fm, fb, simpson(fa, fm, fb, b - a), tol, depth);
}

/// Qa * integral_0^soc U_OCV(u) du, in Wh.
inline double traditional_rde(const CellState& s, const ElectricalParams& p, const OcvCurve& ocv, double Qa) {
  if (!(Qa > 0)) throw ArgumentError("traditional_rde: Qa must be positive");
  const double u = soc(s, p);
  if (u <= 0) return 0.0;
  // Integrate piecewise so every cubic piece is smooth; the tolerance is in V.
  const auto& knots = ocv.u();
  double total = 0;
  double a = 0;
  for (std::size_t k = 1; k < knots.size() && a < u; ++k) {
    const double b = std::min(knots[k], u);
    if (b > a) total += adaptive_simpson([&](double x) { return ocv.eval(x).volts; }, a, b, 1e-10);
    a = b;
  }
  return Qa * total;
}

/// |truth - pred| / |truth| in percent.
inline double relative_error(double truth, double pred) {
  if (truth == 0) throw DomainError("relative_error: undefined for zero truth");
  return std::abs(truth - pred) / std::abs(truth) * 100.0;
}

}  // namespace rde
