#pragma once

// Cell parameters, state, and the two linear physics sub-models: the
// nonlinear double-capacitor (NDC) electrical circuit and the two-node
// lumped thermal network.
//
// Sign convention: internal dynamics take a signed current I with I < 0 for
// discharge. RDE-facing code works with a positive C-rate z and converts via
// I = -z * c_o.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "rde/error.hpp"

namespace rde {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Constants of the NDC circuit. Vb and Vs are normalized charge-state
/// voltages, so Cb + Cs is the cell capacity in ampere-seconds.
struct ElectricalParams {
  double Cb = 0;
  double Cs = 0;
  double Rb = 0;
  double R0 = 0;
  double R1 = 0;
  double C1 = 0;
  double c_o = 0;  ///< current magnitude of 1 C, A

  /// Nonzero eigenvalue of the bulk/surface diffusion block.
  double diffusion_rate() const { return -(Cb + Cs) / (Cb * Cs * Rb); }
  double polarization_rate() const { return -1.0 / (R1 * C1); }
  double capacity_ah() const { return (Cb + Cs) / 3600.0; }

  void validate() const {
    for (double v : {Cb, Cs, Rb, R0, R1, C1, c_o}) {
      if (!(v > 0) || !std::isfinite(v)) {
        throw ArgumentError("ElectricalParams: all fields must be finite and strictly positive");
      }
    }
    const double a = diffusion_rate();
    const double b = polarization_rate();
    if (std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b))) {
      throw ArgumentError("ElectricalParams: degenerate spectrum (diffusion and polarization rates coincide)");
    }
  }
};

struct ThermalParams {
  double C_core = 0;  ///< J/K
  double C_surf = 0;  ///< J/K
  double R_core = 0;  ///< K/W, core-to-surface conduction
  double R_surf = 0;  ///< K/W, surface-to-ambient convection

  void validate() const {
    for (double v : {C_core, C_surf, R_core, R_surf}) {
      if (!(v > 0) || !std::isfinite(v)) {
        throw ArgumentError("ThermalParams: all fields must be finite and strictly positive");
      }
    }
  }
};

struct OperatingLimits {
  double Vmin = 0;  ///< cut-off voltage, V
  double Tmax = 0;  ///< maximum allowed temperature, degC
  double Tamb = 25; ///< ambient temperature, degC

  void validate() const {
    if (!std::isfinite(Vmin) || !std::isfinite(Tamb)) throw ArgumentError("OperatingLimits: non-finite field");
    if (!(Tmax > Tamb)) throw ArgumentError("OperatingLimits: Tmax must exceed Tamb");
  }
};

/// Hybrid state x = [Vb, Vs, V1, Tcore, Tsurf].
struct CellState {
  double Vb = 1;
  double Vs = 1;
  double V1 = 0;
  double Tcore = 25;
  double Tsurf = 25;

  static CellState rested(double charge, double temperature) {
    return {charge, charge, 0.0, temperature, temperature};
  }
  Vec5 vector() const {
    Vec5 v;
    v << Vb, Vs, V1, Tcore, Tsurf;
    return v;
  }
  static CellState from(const Vec5& v) { return {v[0], v[1], v[2], v[3], v[4]}; }
  bool operator==(const CellState&) const = default;
};

/// Open-circuit voltage as a function of normalized charge state u, evaluated
/// by monotone piecewise-cubic Hermite interpolation (Fritsch-Carlson slopes).
class OcvCurve {
 public:
  struct Reading {
    double volts;
    bool clamped;  ///< u was outside the breakpoint domain; the endpoint value was used
  };

  OcvCurve() = default;
  OcvCurve(std::vector<double> u, std::vector<double> v) : u_(std::move(u)), v_(std::move(v)) {
    if (u_.size() != v_.size() || u_.size() < 2) {
      throw ArgumentError("OcvCurve: need at least two (u, v) breakpoints of equal count");
    }
    for (std::size_t k = 1; k < u_.size(); ++k) {
      if (!(u_[k] > u_[k - 1])) throw ArgumentError("OcvCurve: u breakpoints must be strictly increasing");
      if (!(v_[k] > v_[k - 1])) throw ArgumentError("OcvCurve: voltage must be strictly increasing in u");
    }
    compute_slopes();
  }

  const std::vector<double>& u() const { return u_; }
  const std::vector<double>& v() const { return v_; }
  double u_min() const { return u_.front(); }
  double u_max() const { return u_.back(); }
  double v_min() const { return v_.front(); }
  double v_max() const { return v_.back(); }
  bool empty() const { return u_.empty(); }

  /// Evaluation with clamping outside the domain; the flag reports it.
  Reading eval(double u) const {
    if (u < u_.front()) return {v_.front(), true};
    if (u > u_.back()) return {v_.back(), true};
    return {interpolate(u), false};
  }

  /// Strict evaluation; throws DomainError outside [u_min, u_max].
  double operator()(double u) const {
    if (u < u_.front() || u > u_.back() || std::isnan(u)) {
      throw DomainError("OcvCurve: u = " + std::to_string(u) + " outside breakpoint domain");
    }
    return interpolate(u);
  }

  double derivative(double u) const {
    const std::size_t k = segment(u);
    const double h = u_[k + 1] - u_[k];
    const double t = (u - u_[k]) / h;
    const double t2 = t * t;
    const double dh00 = 6 * t2 - 6 * t;
    const double dh10 = 3 * t2 - 4 * t + 1;
    const double dh01 = -6 * t2 + 6 * t;
    const double dh11 = 3 * t2 - 2 * t;
    return (dh00 * v_[k] + dh01 * v_[k + 1]) / h + dh10 * d_[k] + dh11 * d_[k + 1];
  }

  const std::vector<double>& slopes() const { return d_; }

 private:
  std::size_t segment(double u) const {
    auto it = std::upper_bound(u_.begin(), u_.end(), u);
    std::size_t k = it == u_.begin() ? 0 : static_cast<std::size_t>(it - u_.begin()) - 1;
    return std::min(k, u_.size() - 2);
  }

  double interpolate(double u) const {
    const std::size_t k = segment(u);
    const double h = u_[k + 1] - u_[k];
    const double t = (u - u_[k]) / h;
    const double t2 = t * t;
    const double t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1;
    const double h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2;
    const double h11 = t3 - t2;
    return h00 * v_[k] + h10 * h * d_[k] + h01 * v_[k + 1] + h11 * h * d_[k + 1];
  }

  void compute_slopes() {
    const std::size_t n = u_.size();
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      h[k] = u_[k + 1] - u_[k];
      delta[k] = (v_[k + 1] - v_[k]) / h[k];
    }
    d_.assign(n, 0.0);
    if (n == 2) {
      d_[0] = d_[1] = delta[0];
      return;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (delta[k - 1] * delta[k] <= 0) continue;
      const double w1 = 2 * h[k] + h[k - 1];
      const double w2 = h[k] + 2 * h[k - 1];
      d_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
    auto end_slope = [](double h0, double h1, double m0, double m1) {
      double d = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
      if (std::signbit(d) != std::signbit(m0)) return 0.0;
      if (std::signbit(m0) != std::signbit(m1) && std::abs(d) > 3 * std::abs(m0)) return 3 * m0;
      return d;
    };
    d_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  std::vector<double> u_, v_, d_;
};

struct NdcMatrices {
  Mat3 A;
  Vec3 B;
};

inline NdcMatrices ndc_matrices(const ElectricalParams& p) {
  const double kb = 1.0 / (p.Cb * p.Rb);
  const double ks = 1.0 / (p.Cs * p.Rb);
  NdcMatrices m;
  m.A << -kb, kb, 0,
         ks, -ks, 0,
         0, 0, -1.0 / (p.R1 * p.C1);
  m.B << 0, 1.0 / p.Cs, 1.0 / p.C1;
  return m;
}

struct ThermalMatrices {
  Mat2 A;
  Mat2 B;  ///< acts on [I^2, Tamb]
};

inline ThermalMatrices thermal_matrices(const ThermalParams& p, double R0) {
  if (!(R0 > 0)) throw ArgumentError("thermal_matrices: R0 must be positive");
  ThermalMatrices m;
  m.A << -1.0 / (p.R_core * p.C_core), 1.0 / (p.R_core * p.C_core),
         1.0 / (p.R_core * p.C_surf), -1.0 / (p.R_surf * p.C_surf) - 1.0 / (p.R_core * p.C_surf);
  m.B << R0 / p.C_core, 0,
         0, 1.0 / (p.R_surf * p.C_surf);
  return m;
}

/// V = h(Vs) + V1 + R0*I; the flag is set when Vs falls outside the OCV domain.
inline OcvCurve::Reading terminal_voltage_ndc(const CellState& s, double I, const ElectricalParams& p,
                                              const OcvCurve& ocv) {
  auto r = ocv.eval(s.Vs);
  return {r.volts + s.V1 + p.R0 * I, r.clamped};
}

/// Right-hand side of the combined linear state dynamics.
inline Vec5 f_phy(const CellState& s, double I, double Tamb, const ElectricalParams& ep,
                  const ThermalParams& tp) {
  const auto ndc = ndc_matrices(ep);
  const auto th = thermal_matrices(tp, ep.R0);
  const Vec3 x1(s.Vb, s.Vs, s.V1);
  const Vec2 x2(s.Tcore, s.Tsurf);
  const Vec3 d1 = ndc.A * x1 + ndc.B * I;
  const Vec2 d2 = th.A * x2 + th.B * Vec2(I * I, Tamb);
  Vec5 d;
  d << d1, d2;
  return d;
}

/// Capacitor-weighted charge proxy, clamped to [0, 1].
inline double soc(const CellState& s, const ElectricalParams& p) {
  return std::clamp((p.Cb * s.Vb + p.Cs * s.Vs) / (p.Cb + p.Cs), 0.0, 1.0);
}

enum class CellClass { nca_like, lfp_like };

inline std::string to_string(CellClass c) { return c == CellClass::nca_like ? "nca-like" : "lfp-like"; }

inline CellClass parse_cell_class(std::string_view s) {
  if (s == "nca-like") return CellClass::nca_like;
  if (s == "lfp-like") return CellClass::lfp_like;
  throw ConfigError("unknown cell_class '" + std::string(s) + "' (expected nca-like or lfp-like)");
}

/// Everything a parameter file holds.
struct CellParams {
  ElectricalParams electrical;
  ThermalParams thermal;
  OcvCurve ocv;
  OperatingLimits limits;

  void validate() const {
    electrical.validate();
    thermal.validate();
    limits.validate();
    if (ocv.empty()) throw ArgumentError("CellParams: missing OCV curve");
    if (limits.Vmin < ocv.v_min() || limits.Vmin > ocv.v_max()) {
      throw ArgumentError("OperatingLimits: Vmin outside the OCV range");
    }
  }
};

namespace detail {
inline std::vector<double> unit_grid(std::size_t n) {
  std::vector<double> u(n);
  for (std::size_t k = 0; k < n; ++k) u[k] = static_cast<double>(k) / static_cast<double>(n - 1);
  return u;
}

inline ElectricalParams sized_electrical(double c_o, double diffusion_tau, double R0, double R1,
                                         double polarization_tau) {
  ElectricalParams p;
  p.c_o = c_o;
  const double capacity = 3600.0 * c_o;
  p.Cb = 0.8 * capacity;
  p.Cs = 0.2 * capacity;
  p.Rb = diffusion_tau * (p.Cb + p.Cs) / (p.Cb * p.Cs);
  p.R0 = R0;
  p.R1 = R1;
  p.C1 = polarization_tau / R1;
  return p;
}
}  // namespace detail

/// Built-in OCV curves, 21 breakpoints on u = 0, 0.05, ..., 1.
inline OcvCurve default_ocv(CellClass c) {
  if (c == CellClass::nca_like) {
    return OcvCurve(detail::unit_grid(21),
                    {3.00, 3.30, 3.42, 3.49, 3.54, 3.58, 3.61, 3.64, 3.67, 3.71, 3.75,
                     3.79, 3.83, 3.87, 3.91, 3.95, 3.99, 4.04, 4.09, 4.14, 4.20});
  }
  return OcvCurve(detail::unit_grid(21),
                  {2.70, 3.05, 3.17, 3.22, 3.25, 3.27, 3.285, 3.29, 3.295, 3.30, 3.305,
                   3.31, 3.315, 3.32, 3.325, 3.33, 3.335, 3.34, 3.36, 3.40, 3.50});
}

inline CellParams default_cell_params(CellClass c) {
  CellParams p;
  p.ocv = default_ocv(c);
  if (c == CellClass::nca_like) {
    // 18650-format NCA analogue, 2.5 Ah.
    p.electrical = detail::sized_electrical(2.5, 15.0, 0.012, 0.004, 30.0);
    p.thermal = {35.0, 4.0, 3.0, 10.0};
    p.limits = {3.0, 50.0, 25.0};
  } else {
    // 26650-format LFP analogue, 2.5 Ah.
    p.electrical = detail::sized_electrical(2.5, 15.0, 0.006, 0.002, 30.0);
    p.thermal = {45.0, 4.0, 2.0, 9.0};
    p.limits = {2.7, 45.0, 25.0};
  }
  return p;
}

/// Top of the operating C-rate range for a cell class.
inline double default_z_max(CellClass c) { return c == CellClass::nca_like ? 8.0 : 15.0; }

// JSON parameter files use the struct field names verbatim.

inline void to_json(nlohmann::json& j, const ElectricalParams& p) {
  j = {{"Cb", p.Cb}, {"Cs", p.Cs}, {"Rb", p.Rb}, {"R0", p.R0}, {"R1", p.R1}, {"C1", p.C1}, {"c_o", p.c_o}};
}
inline void to_json(nlohmann::json& j, const ThermalParams& p) {
  j = {{"C_core", p.C_core}, {"C_surf", p.C_surf}, {"R_core", p.R_core}, {"R_surf", p.R_surf}};
}
inline void to_json(nlohmann::json& j, const OperatingLimits& p) {
  j = {{"Vmin", p.Vmin}, {"Tmax", p.Tmax}, {"Tamb", p.Tamb}};
}
inline void to_json(nlohmann::json& j, const OcvCurve& c) {
  nlohmann::json bp = nlohmann::json::array();
  for (std::size_t k = 0; k < c.u().size(); ++k) bp.push_back({c.u()[k], c.v()[k]});
  j = {{"breakpoints", bp}};
}
inline void to_json(nlohmann::json& j, const CellParams& p) {
  j = {{"ElectricalParams", p.electrical},
       {"ThermalParams", p.thermal},
       {"OcvCurve", p.ocv},
       {"OperatingLimits", p.limits}};
}

namespace detail {
inline double field(const nlohmann::json& j, const char* name, const std::string& where) {
  if (!j.is_object() || !j.contains(name) || !j.at(name).is_number()) {
    throw ParseError(where + ": missing or non-numeric field '" + name + "'");
  }
  return j.at(name).get<double>();
}
inline const nlohmann::json& member(const nlohmann::json& j, const char* name, const std::string& where) {
  if (!j.is_object() || !j.contains(name)) throw ParseError(where + ": missing field '" + name + "'");
  return j.at(name);
}
}  // namespace detail

inline void from_json(const nlohmann::json& j, ElectricalParams& p) {
  const std::string w = "ElectricalParams";
  p = {detail::field(j, "Cb", w), detail::field(j, "Cs", w), detail::field(j, "Rb", w),
       detail::field(j, "R0", w), detail::field(j, "R1", w), detail::field(j, "C1", w),
       detail::field(j, "c_o", w)};
}
inline void from_json(const nlohmann::json& j, ThermalParams& p) {
  const std::string w = "ThermalParams";
  p = {detail::field(j, "C_core", w), detail::field(j, "C_surf", w), detail::field(j, "R_core", w),
       detail::field(j, "R_surf", w)};
}
inline void from_json(const nlohmann::json& j, OperatingLimits& p) {
  const std::string w = "OperatingLimits";
  p = {detail::field(j, "Vmin", w), detail::field(j, "Tmax", w), detail::field(j, "Tamb", w)};
}
inline void from_json(const nlohmann::json& j, OcvCurve& c) {
  const auto& bp = detail::member(j, "breakpoints", "OcvCurve");
  if (!bp.is_array()) throw ParseError("OcvCurve: 'breakpoints' must be an array of [u, v] pairs");
  std::vector<double> u, v;
  for (const auto& e : bp) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
      throw ParseError("OcvCurve: malformed breakpoint (expected [u, v])");
    }
    u.push_back(e[0].get<double>());
    v.push_back(e[1].get<double>());
  }
  c = OcvCurve(std::move(u), std::move(v));
}
inline void from_json(const nlohmann::json& j, CellParams& p) {
  const std::string w = "CellParams";
  detail::member(j, "ElectricalParams", w).get_to(p.electrical);
  detail::member(j, "ThermalParams", w).get_to(p.thermal);
  detail::member(j, "OcvCurve", w).get_to(p.ocv);
  detail::member(j, "OperatingLimits", w).get_to(p.limits);
  p.validate();
}

}  // namespace rde
