#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rde/cell.hpp"
#include "rde/propagator.hpp"

using namespace rde;

namespace {

ElectricalParams unit_electrical() { return {1, 1, 1, 0.02, 1, 1, 1}; }

OcvCurve flat_ocv(double v) {
  // OcvCurve requires strictly increasing voltage; a 1e-12 V rise is flat for our purposes.
  return OcvCurve({0.0, 1.0}, {v, v + 1e-12});
}

}  // namespace

TEST(NdcMatrices, UnitParameters) {
  const auto m = ndc_matrices(unit_electrical());
  Mat3 A;
  A << -1, 1, 0, 1, -1, 0, 0, 0, -1;
  EXPECT_EQ(m.A, A);
  EXPECT_EQ(m.B, Vec3(0, 1, 1));
}

TEST(NdcMatrices, AsymmetricParameters) {
  ElectricalParams p{2, 1, 0.5, 0.02, 1, 2, 1};
  const auto m = ndc_matrices(p);
  Mat3 A;
  A << -1, 1, 0, 2, -2, 0, 0, 0, -0.5;
  EXPECT_EQ(m.A, A);
  EXPECT_EQ(m.B, Vec3(0, 1, 0.5));
}

TEST(NdcMatrices, DiffusionRowsSumToZero) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 100);
  for (int k = 0; k < 50; ++k) {
    ElectricalParams p{u(rng), u(rng), u(rng), 0.01, u(rng), u(rng), 2.5};
    const auto m = ndc_matrices(p);
    EXPECT_NEAR(m.A.row(0).sum(), 0.0, 1e-15 * m.A.row(0).cwiseAbs().sum());
    EXPECT_NEAR(m.A.row(1).sum(), 0.0, 1e-15 * m.A.row(1).cwiseAbs().sum());
  }
}

TEST(ThermalMatrices, UnitParameters) {
  const auto m = thermal_matrices({1, 1, 1, 1}, 1);
  Mat2 A, B;
  A << -1, 1, 1, -2;
  B << 1, 0, 0, 1;
  EXPECT_EQ(m.A, A);
  EXPECT_EQ(m.B, B);
}

TEST(ThermalMatrices, NonUnitParameters) {
  // The surface diagonal is -1/(R_surf*C_surf) - 1/(R_core*C_surf) = -1/15 - 0.1.
  const auto m = thermal_matrices({10, 5, 2, 3}, 0.02);
  EXPECT_DOUBLE_EQ(m.A(0, 0), -0.05);
  EXPECT_DOUBLE_EQ(m.A(0, 1), 0.05);
  EXPECT_DOUBLE_EQ(m.A(1, 0), 0.1);
  EXPECT_DOUBLE_EQ(m.A(1, 1), -1.0 / 15 - 0.1);
  EXPECT_DOUBLE_EQ(m.B(0, 0), 0.002);
  EXPECT_DOUBLE_EQ(m.B(1, 1), 1.0 / 15);
  EXPECT_EQ(m.B(0, 1), 0.0);
  EXPECT_EQ(m.B(1, 0), 0.0);
}

TEST(ThermalMatrices, EigenvaluesNegative) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 200);
  for (int k = 0; k < 100; ++k) {
    const auto m = thermal_matrices({u(rng), u(rng), u(rng), u(rng)}, 0.01);
    const Eigen::Vector2cd ev = m.A.eigenvalues();
    for (int i = 0; i < 2; ++i) {
      EXPECT_LT(ev[i].real(), 0);
      EXPECT_NEAR(ev[i].imag(), 0, 1e-12);
    }
  }
}

TEST(ThermalMatrices, RejectsNonPositiveR0) { EXPECT_THROW(thermal_matrices({1, 1, 1, 1}, 0), ArgumentError); }

TEST(TerminalVoltage, Examples) {
  const OcvCurve ocv = flat_ocv(3.3);
  ElectricalParams p = unit_electrical();
  p.R0 = 0.02;
  EXPECT_NEAR(terminal_voltage_ndc({0.5, 0.5, 0, 25, 25}, 0, p, ocv).volts, 3.3, 1e-11);
  EXPECT_NEAR(terminal_voltage_ndc({0.5, 0.5, 0, 25, 25}, -5, p, ocv).volts, 3.2, 1e-11);
  EXPECT_NEAR(terminal_voltage_ndc({0.5, 0.5, -0.05, 25, 25}, 0, p, ocv).volts, 3.25, 1e-11);
}

TEST(TerminalVoltage, ClampFlagOutsideDomain) {
  const auto p = default_cell_params(CellClass::nca_like);
  const auto inside = terminal_voltage_ndc({0.5, 0.5, 0, 25, 25}, 0, p.electrical, p.ocv);
  EXPECT_FALSE(inside.clamped);
  const auto below = terminal_voltage_ndc({0.5, -0.1, 0, 25, 25}, 0, p.electrical, p.ocv);
  EXPECT_TRUE(below.clamped);
  EXPECT_DOUBLE_EQ(below.volts, p.ocv.v_min());
  EXPECT_THROW(p.ocv(-0.1), DomainError);
}

TEST(TerminalVoltage, StrictlyDecreasingInDischargeCurrent) {
  const auto p = default_cell_params(CellClass::lfp_like);
  const CellState s{0.6, 0.55, -0.01, 30, 28};
  double prev = terminal_voltage_ndc(s, 0, p.electrical, p.ocv).volts;
  for (double I = -0.5; I >= -40; I -= 0.5) {
    const double v = terminal_voltage_ndc(s, I, p.electrical, p.ocv).volts;
    EXPECT_LT(v, prev);
    EXPECT_NEAR(prev - v, 0.5 * p.electrical.R0, 1e-12);
    prev = v;
  }
}

TEST(Fphy, EquilibriumIsExactlyZero) {
  const auto p = default_cell_params(CellClass::nca_like);
  const Vec5 d = f_phy({0.7, 0.7, 0, 31.5, 31.5}, 0, 31.5, p.electrical, p.thermal);
  EXPECT_EQ(d, Vec5::Zero());
}

TEST(Fphy, DiffusionSubstitution) {
  const Vec5 d = f_phy({1, 0, 0, 25, 25}, 0, 25, unit_electrical(), {1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(d[0], -1);
  EXPECT_DOUBLE_EQ(d[1], 1);
}

TEST(Fphy, MatchesIndependentMatrixProduct) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  const auto p = default_cell_params(CellClass::nca_like);
  const auto& e = p.electrical;
  const auto& t = p.thermal;
  for (int k = 0; k < 50; ++k) {
    const CellState s{0.5 + 0.5 * u(rng), 0.5 + 0.5 * u(rng), 0.05 * u(rng), 30 + 10 * u(rng), 28 + 10 * u(rng)};
    const double I = 20 * u(rng);
    const double Tamb = 25 + 10 * u(rng);
    // Full 5x5 system written out from the component equations.
    Eigen::Matrix<double, 5, 5> A = Eigen::Matrix<double, 5, 5>::Zero();
    A(0, 0) = -1 / (e.Cb * e.Rb);
    A(0, 1) = 1 / (e.Cb * e.Rb);
    A(1, 0) = 1 / (e.Cs * e.Rb);
    A(1, 1) = -1 / (e.Cs * e.Rb);
    A(2, 2) = -1 / (e.R1 * e.C1);
    A(3, 3) = -1 / (t.R_core * t.C_core);
    A(3, 4) = 1 / (t.R_core * t.C_core);
    A(4, 3) = 1 / (t.R_core * t.C_surf);
    A(4, 4) = -1 / (t.R_surf * t.C_surf) - 1 / (t.R_core * t.C_surf);
    Vec5 b;
    b << 0, I / e.Cs, I / e.C1, e.R0 * I * I / t.C_core, Tamb / (t.R_surf * t.C_surf);
    const Vec5 expect = A * s.vector() + b;
    const Vec5 got = f_phy(s, I, Tamb, e, t);
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(got[i], expect[i], 1e-13 * (1 + std::abs(expect[i])));
  }
}

TEST(Fphy, ChargeDerivativeEqualsCurrent) {
  const auto p = default_cell_params(CellClass::lfp_like);
  const auto& e = p.electrical;
  for (double I : {-30.0, -2.5, 0.0, 4.0}) {
    const Vec5 d = f_phy({0.8, 0.6, 0.01, 30, 29}, I, 25, e, p.thermal);
    EXPECT_NEAR(e.Cb * d[0] + e.Cs * d[1], I, 1e-12 * (1 + std::abs(I)));
  }
}

TEST(Soc, Examples) {
  EXPECT_DOUBLE_EQ(soc({1, 1, 0, 25, 25}, unit_electrical()), 1.0);
  ElectricalParams p{3, 1, 1, 0.01, 1, 2, 1};
  EXPECT_DOUBLE_EQ(soc({1, 0, 0, 25, 25}, p), 0.75);
  EXPECT_EQ(soc({-0.2, -0.2, 0, 25, 25}, p), 0.0);
  EXPECT_EQ(soc({1.3, 1.2, 0, 25, 25}, p), 1.0);
}

TEST(Soc, ConservedUnderRelaxation) {
  const auto p = default_cell_params(CellClass::nca_like);
  const PropagatorCache cache(p.electrical, p.thermal);
  const CellState s{0.9, 0.4, 0.02, 40, 35};
  for (double dt : {1.0, 37.0, 600.0, 7200.0}) {
    EXPECT_NEAR(soc(propagate(s, 0, 25, dt, cache), p.electrical), soc(s, p.electrical), 1e-9);
  }
}

TEST(OcvCurve, MonotoneAndC1) {
  for (auto c : {CellClass::nca_like, CellClass::lfp_like}) {
    const OcvCurve ocv = default_ocv(c);
    double prev = ocv(0);
    for (int k = 1; k <= 2000; ++k) {
      const double u = k / 2000.0;
      const double v = ocv(u);
      EXPECT_GT(v, prev) << "u = " << u;
      prev = v;
    }
    // Continuity of the derivative across every interior knot.
    for (std::size_t k = 1; k + 1 < ocv.u().size(); ++k) {
      const double u = ocv.u()[k];
      EXPECT_NEAR(ocv.derivative(u - 1e-9), ocv.derivative(u + 1e-9), 1e-5);
    }
    EXPECT_DOUBLE_EQ(ocv(0), ocv.v_min());
    EXPECT_DOUBLE_EQ(ocv(1), ocv.v_max());
  }
}

TEST(OcvCurve, DefaultWindows) {
  const OcvCurve nca = default_ocv(CellClass::nca_like);
  EXPECT_DOUBLE_EQ(nca.v_min(), 3.0);
  EXPECT_DOUBLE_EQ(nca.v_max(), 4.2);
  const OcvCurve lfp = default_ocv(CellClass::lfp_like);
  EXPECT_DOUBLE_EQ(lfp.v_min(), 2.7);
  EXPECT_DOUBLE_EQ(lfp.v_max(), 3.5);
  EXPECT_EQ(nca.u().size(), 21u);
  EXPECT_NEAR(lfp(0.5), 3.305, 1e-12);
}

TEST(OcvCurve, RejectsNonMonotoneBreakpoints) {
  EXPECT_THROW(OcvCurve({0, 0.5, 1}, {3.0, 3.5, 3.4}), ArgumentError);
  EXPECT_THROW(OcvCurve({0, 0.5, 0.5}, {3.0, 3.5, 3.6}), ArgumentError);
  EXPECT_THROW(OcvCurve({0}, {3.0}), ArgumentError);
}

TEST(CellParams, DefaultsAreValidAndSized) {
  for (auto c : {CellClass::nca_like, CellClass::lfp_like}) {
    const auto p = default_cell_params(c);
    EXPECT_NO_THROW(p.validate());
    EXPECT_NEAR(p.electrical.Cb + p.electrical.Cs, 3600 * p.electrical.c_o, 1e-9);
    EXPECT_NEAR(p.electrical.Cb / p.electrical.Cs, 4.0, 1e-12);
  }
  EXPECT_DOUBLE_EQ(default_cell_params(CellClass::nca_like).limits.Vmin, 3.0);
  EXPECT_DOUBLE_EQ(default_cell_params(CellClass::nca_like).limits.Tmax, 50.0);
  EXPECT_DOUBLE_EQ(default_cell_params(CellClass::lfp_like).limits.Vmin, 2.7);
  EXPECT_DOUBLE_EQ(default_cell_params(CellClass::lfp_like).limits.Tmax, 45.0);
}

TEST(CellParams, InvalidValuesRejected) {
  ElectricalParams e = unit_electrical();
  e.Rb = 0;
  EXPECT_THROW(e.validate(), ArgumentError);
  // Diffusion rate -(Cb+Cs)/(Cb Cs Rb) = -2 equals polarization rate -1/(R1 C1).
  ElectricalParams d{1, 1, 1, 0.01, 0.5, 1, 1};
  EXPECT_THROW(d.validate(), ArgumentError);
  ThermalParams t{1, -1, 1, 1};
  EXPECT_THROW(t.validate(), ArgumentError);
  OperatingLimits l{3.0, 20, 25};
  EXPECT_THROW(l.validate(), ArgumentError);
  auto p = default_cell_params(CellClass::nca_like);
  p.limits.Vmin = 2.5;
  EXPECT_THROW(p.validate(), ArgumentError);
}

TEST(CellParams, JsonRoundTrip) {
  const auto p = default_cell_params(CellClass::lfp_like);
  const nlohmann::json j = p;
  EXPECT_TRUE(j.contains("ElectricalParams"));
  EXPECT_TRUE(j["ElectricalParams"].contains("c_o"));
  EXPECT_TRUE(j["ThermalParams"].contains("R_surf"));
  EXPECT_TRUE(j["OperatingLimits"].contains("Tmax"));
  const auto q = nlohmann::json::parse(j.dump()).get<CellParams>();
  EXPECT_EQ(q.electrical.Cb, p.electrical.Cb);
  EXPECT_EQ(q.thermal.C_core, p.thermal.C_core);
  EXPECT_EQ(q.ocv.v(), p.ocv.v());
  EXPECT_EQ(q.limits.Vmin, p.limits.Vmin);
}

TEST(CellParams, JsonMissingFieldNamed) {
  nlohmann::json j = default_cell_params(CellClass::nca_like);
  j["ElectricalParams"].erase("R0");
  try {
    j.get<CellParams>();
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("R0"), std::string::npos);
  }
}

TEST(CellClass, Parse) {
  EXPECT_EQ(parse_cell_class("nca-like"), CellClass::nca_like);
  EXPECT_EQ(parse_cell_class("lfp-like"), CellClass::lfp_like);
  EXPECT_THROW(parse_cell_class("nmc"), ConfigError);
}
