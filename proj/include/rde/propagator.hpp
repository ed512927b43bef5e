#pragma once

// Closed-form propagation of the linear hybrid state under constant C-rate
// and ambient temperature, plus a fixed-step RK4 integrator used both as an
// oracle for the closed form and as the virtual-cell simulator.
//
// For a block with distinct eigenvalues l_i, Cayley-Hamilton gives
//   exp(A t)            = [V^-1 psi(t)]      (+) A
//   int_0^t exp(A s) ds = [V^-1 int psi]     (+) A
// with V the Vandermonde matrix of the eigenvalues, psi(t) = [exp(l_i t)],
// and a (+) A = sum_i a_i A^(i-1). The NDC block has a zero eigenvalue, so the
// integral is evaluated as expm1(l t)/l with a series branch near l t = 0.

#include <array>
#include <cmath>
#include <concepts>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rde/cell.hpp"
#include "rde/error.hpp"
#include "rde/profile.hpp"

namespace rde {

struct EigenSet {
  std::array<double, 3> ndc;    ///< {0, diffusion, polarization}
  std::array<double, 2> therm;  ///< {fast, slow}
};

namespace detail {
inline bool nearly_equal(double a, double b, double rel = 1e-9) {
  return std::abs(a - b) < rel * std::max(std::abs(a), std::abs(b));
}
}  // namespace detail

inline std::array<double, 3> eigenvalues_ndc(const ElectricalParams& p) {
  const std::array<double, 3> l = {0.0, p.diffusion_rate(), p.polarization_rate()};
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (detail::nearly_equal(l[i], l[j])) throw DomainError("eigenvalues_ndc: degenerate spectrum");
    }
  }
  // Cross-check against det(A - l I) = -l^3 + tr l^2 - c2 l + det.
  const Mat3 A = ndc_matrices(p).A;
  const double tr = A.trace();
  const double c2 = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0) + A(0, 0) * A(2, 2) + A(1, 1) * A(2, 2);
  const double det = A.determinant();
  for (double x : l) {
    const double value = -x * x * x + tr * x * x - c2 * x + det;
    const double scale = std::abs(x * x * x) + std::abs(tr * x * x) + std::abs(c2 * x) + std::abs(det) +
                         std::pow(A.cwiseAbs().maxCoeff(), 3);
    if (std::abs(value) > 1e-10 * scale) {
      throw DomainError("eigenvalues_ndc: eigenvalue fails the characteristic polynomial check");
    }
  }
  return l;
}

inline std::array<double, 2> eigenvalues_therm(const ThermalParams& tp, double R0) {
  const Mat2 A = thermal_matrices(tp, R0).A;
  const double tr = A.trace();
  const double det = A.determinant();
  const double gap = A(0, 0) - A(1, 1);
  const double disc = gap * gap + 4 * A(0, 1) * A(1, 0);
  if (!(disc > 0)) throw DomainError("eigenvalues_therm: spectrum not real and distinct");
  const double fast = 0.5 * (tr - std::sqrt(disc));  // no cancellation, tr < 0
  const double slow = det / fast;
  if (!(fast < 0 && slow < 0) || detail::nearly_equal(fast, slow)) {
    throw DomainError("eigenvalues_therm: eigenvalues must be negative and distinct");
  }
  return {fast, slow};
}

/// psi(dt) = [exp(l_i dt)].
template <std::size_t N>
std::array<double, N> phi_exp_vector(const std::array<double, N>& lambdas, double dt) {
  if (!(dt >= 0)) throw ArgumentError("phi_exp_vector: dt must be >= 0");
  std::array<double, N> out;
  for (std::size_t i = 0; i < N; ++i) out[i] = dt == 0 ? 1.0 : std::exp(lambdas[i] * dt);
  return out;
}

namespace detail {
inline constexpr double kSeriesThreshold = 1e-6;

/// Four-term Taylor series of int_0^dt exp(l s) ds.
inline double int_exp_series(double lambda, double dt) {
  const double x = lambda * dt;
  return dt * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0);
}
}  // namespace detail

/// Elementwise int_0^dt exp(l s) ds; exactly dt for l = 0.
inline double int_exp(double lambda, double dt) {
  if (std::abs(lambda * dt) < detail::kSeriesThreshold) return detail::int_exp_series(lambda, dt);
  return std::expm1(lambda * dt) / lambda;
}

template <std::size_t N>
std::array<double, N> phi_int_exp_vector(const std::array<double, N>& lambdas, double dt) {
  if (!(dt >= 0)) throw ArgumentError("phi_int_exp_vector: dt must be >= 0");
  std::array<double, N> out;
  for (std::size_t i = 0; i < N; ++i) out[i] = int_exp(lambdas[i], dt);
  return out;
}

/// x' = E x + g for a fixed (z, Tamb, dt); block-diagonal.
struct LinearStep {
  Mat3 E1;
  Vec3 g1;
  Mat2 E2;
  Vec2 g2;

  CellState apply(const CellState& s) const {
    const Vec3 x1 = E1 * Vec3(s.Vb, s.Vs, s.V1) + g1;
    const Vec2 x2 = E2 * Vec2(s.Tcore, s.Tsurf) + g2;
    return {x1[0], x1[1], x1[2], x2[0], x2[1]};
  }
};

/// Everything needed to evaluate the closed-form propagator for one cell.
/// Immutable after construction.
class PropagatorCache {
 public:
  PropagatorCache() = default;
  PropagatorCache(const ElectricalParams& ep, const ThermalParams& tp) : c_o_(ep.c_o) {
    ep.validate();
    tp.validate();
    const auto ndc = ndc_matrices(ep);
    const auto th = thermal_matrices(tp, ep.R0);
    eig_ = {eigenvalues_ndc(ep), eigenvalues_therm(tp, ep.R0)};
    a_ndc_ = ndc.A;
    a_ndc2_ = ndc.A * ndc.A;
    b_ndc_ = ndc.B;
    a_th_ = th.A;
    b_th_ = th.B;
    Mat3 v1;
    for (int i = 0; i < 3; ++i) v1.row(i) << 1.0, eig_.ndc[i], eig_.ndc[i] * eig_.ndc[i];
    Mat2 v2;
    for (int i = 0; i < 2; ++i) v2.row(i) << 1.0, eig_.therm[i];
    psi1_inv_ = v1.inverse();
    psi2_inv_ = v2.inverse();
  }

  const EigenSet& eigenvalues() const { return eig_; }
  const Mat3& vandermonde_ndc_inverse() const { return psi1_inv_; }
  const Mat2& vandermonde_therm_inverse() const { return psi2_inv_; }
  const Mat3& a_ndc() const { return a_ndc_; }
  const Vec3& b_ndc() const { return b_ndc_; }
  const Mat2& a_therm() const { return a_th_; }
  const Mat2& b_therm() const { return b_th_; }
  double c_o() const { return c_o_; }

  /// a (+) A_NDC
  Mat3 combine_ndc(const std::array<double, 3>& psi) const {
    const Vec3 a = psi1_inv_ * Vec3(psi[0], psi[1], psi[2]);
    return a[0] * Mat3::Identity() + a[1] * a_ndc_ + a[2] * a_ndc2_;
  }
  Mat2 combine_therm(const std::array<double, 2>& psi) const {
    const Vec2 a = psi2_inv_ * Vec2(psi[0], psi[1]);
    return a[0] * Mat2::Identity() + a[1] * a_th_;
  }

  Mat3 exp_ndc(double dt) const {
    if (dt == 0) return Mat3::Identity();
    return combine_ndc(phi_exp_vector(eig_.ndc, dt));
  }
  Mat3 int_exp_ndc(double dt) const {
    if (dt == 0) return Mat3::Zero();
    return combine_ndc(phi_int_exp_vector(eig_.ndc, dt));
  }
  Mat2 exp_therm(double dt) const {
    if (dt == 0) return Mat2::Identity();
    return combine_therm(phi_exp_vector(eig_.therm, dt));
  }
  Mat2 int_exp_therm(double dt) const {
    if (dt == 0) return Mat2::Zero();
    return combine_therm(phi_int_exp_vector(eig_.therm, dt));
  }

  /// Transition over dt at constant C-rate z >= 0 (current -z*c_o).
  LinearStep step(double z, double Tamb, double dt) const {
    if (!(dt >= 0)) throw ArgumentError("propagate: dt must be >= 0");
    if (!(z >= 0)) throw ArgumentError("propagate: C-rate must be >= 0 (discharge only)");
    const double current = -z * c_o_;
    LinearStep s;
    s.E1 = exp_ndc(dt);
    s.g1 = int_exp_ndc(dt) * (b_ndc_ * current);
    s.E2 = exp_therm(dt);
    s.g2 = int_exp_therm(dt) * (b_th_ * Vec2(current * current, Tamb));
    return s;
  }

 private:
  EigenSet eig_{};
  Mat3 a_ndc_, a_ndc2_, psi1_inv_;
  Vec3 b_ndc_;
  Mat2 a_th_, b_th_, psi2_inv_;
  double c_o_ = 0;
};

/// phi(x, z*c_o, Tamb; dt). Identity (bitwise) at dt = 0.
inline CellState propagate(const CellState& s, double z, double Tamb, double dt, const PropagatorCache& cache) {
  if (!(dt >= 0)) throw ArgumentError("propagate: dt must be >= 0");
  if (dt == 0) return s;
  return cache.step(z, Tamb, dt).apply(s);
}

enum class StopReason { HorizonReached, VoltageCutoff, TemperatureCutoff };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::HorizonReached: return "horizon";
    case StopReason::VoltageCutoff: return "voltage";
    case StopReason::TemperatureCutoff: return "temperature";
  }
  return "?";
}

struct Trajectory {
  std::vector<double> times;
  std::vector<CellState> states;
  std::vector<double> currents;  ///< A, signed; the current applied over the interval ending at each sample
  std::vector<double> voltages;
  std::vector<double> temperatures;  ///< the model's limit-channel temperature
  StopReason stop_reason = StopReason::HorizonReached;

  std::size_t size() const { return times.size(); }
  double end_time() const { return times.empty() ? 0.0 : times.back(); }
};

/// Anything rk4_simulate can integrate: state derivative, terminal voltage,
/// and the temperature channel checked against Tmax.
template <class M>
concept DynamicsModel = requires(const M& m, const Vec5& x, double current) {
  { m.derivative(x, current) } -> std::convertible_to<Vec5>;
  { m.voltage(x, current) } -> std::convertible_to<double>;
  { m.limit_temperature(x) } -> std::convertible_to<double>;
  { m.c_o() } -> std::convertible_to<double>;
};

/// The unmodified linear physics (NDC + lumped thermal) with the NDC output
/// equation; surface temperature is the limit channel.
struct PhysicsModel {
  ElectricalParams electrical;
  ThermalParams thermal;
  OcvCurve ocv;
  double tamb = 25;

  Vec5 derivative(const Vec5& x, double current) const {
    return f_phy(CellState::from(x), current, tamb, electrical, thermal);
  }
  double voltage(const Vec5& x, double current) const {
    return terminal_voltage_ndc(CellState::from(x), current, electrical, ocv).volts;
  }
  double limit_temperature(const Vec5& x) const { return x[4]; }
  double c_o() const { return electrical.c_o; }
};

namespace detail {
inline long aligned_count(double span, double step, const char* what) {
  const double n = span / step;
  const double r = std::round(n);
  if (r < 1 || std::abs(n - r) > 1e-9 * std::max(1.0, n)) {
    throw ArgumentError(std::string("rk4_simulate: ") + what + " not aligned to the step grid");
  }
  return static_cast<long>(r);
}
}  // namespace detail

/// Classic fixed-step RK4 over a piecewise-constant profile. Samples are
/// recorded every profile.sample_interval. With limits, integration stops at
/// the first step where V < Vmin or the limit temperature >= Tmax; the stop
/// point is refined by linear interpolation between the last two steps.
template <DynamicsModel Model>
Trajectory rk4_simulate(const Model& model, const CellState& s0, const CurrentProfile& profile, double step,
                        const std::optional<OperatingLimits>& limits = std::nullopt) {
  if (!(step > 0)) throw ArgumentError("rk4_simulate: step must be positive");
  profile.validate();
  const long record_every = detail::aligned_count(profile.sample_interval, step, "sample interval");
  Trajectory tr;
  auto record = [&](double t, const Vec5& x, double current, double v, double temp) {
    tr.times.push_back(t);
    tr.states.push_back(CellState::from(x));
    tr.currents.push_back(current);
    tr.voltages.push_back(v);
    tr.temperatures.push_back(temp);
  };
  auto crossed = [&](double v, double temp) -> std::optional<StopReason> {
    if (!limits) return std::nullopt;
    if (v < limits->Vmin) return StopReason::VoltageCutoff;
    if (temp >= limits->Tmax) return StopReason::TemperatureCutoff;
    return std::nullopt;
  };

  Vec5 x = s0.vector();
  const double i0 = profile.segments.empty() ? 0.0 : -profile.segments.front().c_rate * model.c_o();
  double v_prev = model.voltage(x, i0);
  double t_prev = model.limit_temperature(x);
  record(0.0, x, i0, v_prev, t_prev);
  if (auto r = crossed(v_prev, t_prev)) {
    tr.stop_reason = *r;
    return tr;
  }

  long k = 0;
  double t0 = 0;
  for (const auto& seg : profile.segments) {
    const long n = detail::aligned_count(seg.duration, step, "segment duration");
    const double current = -seg.c_rate * model.c_o();
    for (long j = 1; j <= n; ++j) {
      const Vec5 k1 = model.derivative(x, current);
      const Vec5 k2 = model.derivative(x + 0.5 * step * k1, current);
      const Vec5 k3 = model.derivative(x + 0.5 * step * k2, current);
      const Vec5 k4 = model.derivative(x + step * k3, current);
      const Vec5 xn = x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!xn.allFinite()) throw NumericalError("rk4_simulate: non-finite state encountered");
      ++k;
      const double t = t0 + static_cast<double>(j) * step;
      const double v = model.voltage(xn, current);
      const double temp = model.limit_temperature(xn);
      if (auto r = crossed(v, temp)) {
        double fv = 2, ft = 2;
        if (v < limits->Vmin) fv = (v_prev - limits->Vmin) / (v_prev - v);
        if (temp >= limits->Tmax) ft = temp > t_prev ? (limits->Tmax - t_prev) / (temp - t_prev) : 1.0;
        const double f = std::clamp(std::min(fv, ft), 0.0, 1.0);
        tr.stop_reason = fv <= ft ? StopReason::VoltageCutoff : StopReason::TemperatureCutoff;
        record(t - step + f * step, x + f * (xn - x), current, v_prev + f * (v - v_prev),
               t_prev + f * (temp - t_prev));
        return tr;
      }
      x = xn;
      v_prev = v;
      t_prev = temp;
      if (k % record_every == 0) record(t, x, current, v, temp);
    }
    t0 += static_cast<double>(n) * step;
  }
  if (tr.times.back() < t0) record(t0, x, tr.currents.back(), v_prev, t_prev);
  tr.stop_reason = StopReason::HorizonReached;
  return tr;
}

}  // namespace rde
