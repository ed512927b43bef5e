#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <random>

#include "rde/rde.hpp"
#include "test_support.hpp"

using namespace rde;
using rde::testing::constant_mlp;
using rde::testing::physics_ndctnet;

namespace {

OperatingLimits nca_limits() { return default_cell_params(CellClass::nca_like).limits; }

OperatingLimits voltage_only() {
  OperatingLimits l = nca_limits();
  l.Tmax = std::numeric_limits<double>::infinity();
  return l;
}

// Constant networks: time to Vmin in s, mean power in W.
RdePredictor physics_predictor(double rdt, double power) {
  RdePredictor p;
  p.fnn_rdt = constant_mlp(kRdtInputs, rdt);
  p.fnn_e = constant_mlp(kEnergyInputs, power);
  p.model = physics_ndctnet();
  p.limits = nca_limits();
  return p;
}

const CellState kHot{0.9, 0.9, 0.0, 42, 42};

}  // namespace

TEST(PredictRdtVmin, ClampedAtZero) {
  RdePredictor p = physics_predictor(-50, 1);
  EXPECT_EQ(predict_rdt_vmin(p, CellState::rested(1, 25), 1, 25), 0.0);
  p.fnn_rdt = Mlp::glorot({kRdtInputs, 16, 1}, 3);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1), z(0.2, 8), t(20, 45);
  for (int k = 0; k < 10000; ++k) {
    const CellState s{u(rng), u(rng), -0.05 * u(rng), t(rng), t(rng)};
    EXPECT_GE(predict_rdt_vmin(p, s, z(rng), 25), 0.0);
  }
  EXPECT_EQ(predict_energy(physics_predictor(1, -3), CellState::rested(1, 25), 1, 25, 10), 0.0);
}

TEST(PredictEnergy, MeanPowerTimesHorizon) {
  const RdePredictor p = physics_predictor(100, 36);
  const CellState s = CellState::rested(1, 25);
  EXPECT_DOUBLE_EQ(predict_energy(p, s, 1, 25, 100), 1.0);
  EXPECT_DOUBLE_EQ(predict_energy(p, s, 1, 25, 1800), 18.0);
  EXPECT_EQ(predict_energy(p, s, 1, 25, 0), 0.0);
  RdePredictor random = p;
  random.fnn_e = Mlp::glorot({kEnergyInputs, 8, 1}, 9);
  EXPECT_EQ(predict_energy(random, s, 3, 25, 0), 0.0);
}

TEST(PredictEnergy, RejectsNegativeDt) {
  const RdePredictor p = physics_predictor(100, 1);
  EXPECT_THROW(predict_energy(p, CellState::rested(1, 25), 1, 25, -1), ArgumentError);
}

TEST(CheckpointScan, MildRateStaysBelowTmax) {
  const RdePredictor p = physics_predictor(1, 1);
  const CellState s = CellState::rested(1, 25);
  const RdeResult truth = oracle_rde(p.model, s, 0.5, 25, nca_limits());
  ASSERT_EQ(truth.limiting, Limiting::Voltage);
  EXPECT_FALSE(checkpoint_scan(p, s, 0.5, 25, truth.rdt_vmin).has_value());
  EXPECT_THROW(checkpoint_scan(p, s, 0.5, 25, 0), ArgumentError);
}

TEST(CheckpointScan, AlreadyAboveTmaxIsFirstInterval) {
  const RdePredictor p = physics_predictor(1, 1);
  // A hotter core keeps the surface above Tmax through the first checkpoint.
  const CellState s{1, 1, 0, p.limits.Tmax + 10, p.limits.Tmax + 1};
  const auto bracket = checkpoint_scan(p, s, 8, 25, 200);
  ASSERT_TRUE(bracket.has_value());
  EXPECT_EQ(bracket->first, 0.0);
  EXPECT_DOUBLE_EQ(bracket->second, 200.0 / p.m);
}

TEST(CheckpointScan, BracketsSignChange) {
  const RdePredictor p = physics_predictor(1, 1);
  const RdeResult v = oracle_rde(p.model, kHot, 8, 25, voltage_only());
  const auto bracket = checkpoint_scan(p, kHot, 8, 25, v.rdt_vmin);
  ASSERT_TRUE(bracket.has_value());
  EXPECT_LT(ht_phi(p.model, kHot, 8, 25, bracket->first), p.limits.Tmax);
  EXPECT_GE(ht_phi(p.model, kHot, 8, 25, bracket->second), p.limits.Tmax);
  EXPECT_NEAR(bracket->second - bracket->first, v.rdt_vmin / p.m, 1e-9);
}

TEST(Bisection, LinearTrajectory) {
  const double root = 37.3, slope = 0.1;
  const auto f = [&](double tau) { return slope * (tau - root); };
  const BisectResult r = bisect_root(f, 0, 60, 0.01, 60);
  EXPECT_LE(std::abs(r.root - root), 60 / std::ldexp(1.0, r.iters));
  EXPECT_LT(std::abs(r.residual), 0.01);
  EXPECT_LE(r.iters, 20);
}

TEST(Bisection, MidpointRootInOneStep) {
  const BisectResult r = bisect_root([](double tau) { return tau - 30; }, 0, 60, 0.01, 60);
  EXPECT_EQ(r.iters, 1);
  EXPECT_EQ(r.root, 30);
}

TEST(Bisection, Errors) {
  EXPECT_THROW(bisect_root([](double tau) { return tau + 1; }, 0, 60, 0.01, 60), BracketError);
  EXPECT_THROW(bisect_root([](double tau) { return tau - 100; }, 0, 60, 0.01, 60), BracketError);
  try {
    bisect_root([](double tau) { return tau - 17.123; }, 0, 60, 1e-12, 5);
    FAIL();
  } catch (const ConvergenceError& e) {
    EXPECT_GT(std::abs(e.residual()), 1e-12);
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
  }
}

TEST(PredictRde, AlreadyAtTmax) {
  const RdePredictor p = physics_predictor(500, 3);
  const RdeResult r = predict_rde(p, CellState{0.8, 0.8, 0, p.limits.Tmax, 45}, 1, 25);
  EXPECT_EQ(r.rdt, 0);
  EXPECT_EQ(r.energy, 0);
  EXPECT_EQ(r.limiting, Limiting::Temperature);
  ASSERT_TRUE(r.rdt_tmax.has_value());
  EXPECT_EQ(*r.rdt_tmax, 0.0);
}

TEST(PredictRde, TemperatureLimitedConsistency) {
  RdePredictor p = physics_predictor(1, 1);
  const RdeResult v = oracle_rde(p.model, kHot, 8, 25, voltage_only());
  p.fnn_rdt = constant_mlp(kRdtInputs, v.rdt_vmin);
  p.fnn_e = constant_mlp(kEnergyInputs, 2.5);
  const RdeResult r = predict_rde(p, kHot, 8, 25);
  ASSERT_EQ(r.limiting, Limiting::Temperature);
  ASSERT_TRUE(r.rdt_tmax.has_value());
  EXPECT_EQ(r.rdt, std::min(r.rdt_vmin, *r.rdt_tmax));
  EXPECT_LT(*r.rdt_tmax, r.rdt_vmin);
  EXPECT_LT(std::abs(ht_phi(p.model, kHot, 8, 25, r.rdt) - p.limits.Tmax), p.eps);
  EXPECT_GE(r.bisect_iters, 1);
  EXPECT_NEAR(r.energy, 2.5 * r.rdt / 3600, 1e-15);

  const RdeResult truth = oracle_rde(p.model, kHot, 8, 25, p.limits);
  ASSERT_EQ(truth.limiting, Limiting::Temperature);
  EXPECT_NEAR(r.rdt, truth.rdt, 1.0);
  EXPECT_LT(truth.energy, v.energy);
}

TEST(PredictRde, VoltageLimitedAtLowRate) {
  RdePredictor p = physics_predictor(1, 1);
  const CellState s = CellState::rested(1, 25);
  const RdeResult v = oracle_rde(p.model, s, 0.2, 25, p.limits);
  p.fnn_rdt = constant_mlp(kRdtInputs, v.rdt_vmin);
  const RdeResult r = predict_rde(p, s, 0.2, 25);
  EXPECT_EQ(r.limiting, Limiting::Voltage);
  EXPECT_FALSE(r.rdt_tmax.has_value());
  EXPECT_EQ(r.rdt, r.rdt_vmin);
  EXPECT_FALSE(r.extrapolated);
  EXPECT_TRUE(predict_rde(p, s, 0.1, 25).extrapolated);
  EXPECT_TRUE(predict_rde(p, s, 9, 25).extrapolated);
}

TEST(PredictRde, ValidateParameters) {
  RdePredictor p = physics_predictor(1, 1);
  p.m = 1;
  EXPECT_THROW(p.validate(), ArgumentError);
  p = physics_predictor(1, 1);
  p.eps = 0;
  EXPECT_THROW(p.validate(), ArgumentError);
  p = physics_predictor(1, 1);
  p.fnn_rdt = constant_mlp(6, 1);
  EXPECT_THROW(p.validate(), ArgumentError);
}

TEST(Oracle, FlatVoltageIntegratesExactly) {
  const CellParams base = default_cell_params(CellClass::nca_like);
  Mlp h_t = Mlp::zeros({kHtInputs, 1});
  h_t.weights[0](0, 2) = 1;
  const double vbar = 3.6;
  const Ndctnet net(base, constant_mlp(kHvInputs, vbar), h_t, VoltageHead::direct);
  const double z = 6;
  const RdeResult r = oracle_rde(net, kHot, z, 25, base.limits);
  ASSERT_EQ(r.limiting, Limiting::Temperature);
  EXPECT_NEAR(r.energy, z * net.c_o() * vbar * r.rdt / 3600.0, 1e-12 * r.energy);
  EXPECT_TRUE(std::isnan(r.rdt_vmin));
  EXPECT_THROW(oracle_rde(net, kHot, z, 25, voltage_only()), NumericalError);
}

TEST(Oracle, GridHalving) {
  const Ndctnet net = physics_ndctnet();
  for (double z : {0.5, 2.0, 8.0}) {
    const RdeResult a = oracle_rde(net, CellState::rested(1, 25), z, 25, nca_limits());
    const RdeResult b = oracle_rde(net, CellState::rested(1, 25), z, 25, nca_limits(), {0.5, 0.01, false});
    EXPECT_LT(std::abs(a.energy - b.energy) / b.energy, 5e-4) << z;
  }
}

TEST(Oracle, NonIncreasingInRate) {
  const Ndctnet net = physics_ndctnet();
  const auto z = log_grid(0.2, 8, 20);
  const std::vector<CellState> states = {CellState::rested(1, 25), CellState{0.8, 0.7, -0.03, 30, 28},
                                         CellState{0.6, 0.6, 0, 25, 25}, CellState{0.45, 0.4, -0.02, 35, 33}, kHot};
  for (const auto& s : states) {
    double prev_e = std::numeric_limits<double>::infinity(), prev_t = prev_e;
    for (double zk : z) {
      const RdeResult r = oracle_rde(net, s, zk, 25, nca_limits());
      EXPECT_LE(r.energy, prev_e) << zk;
      EXPECT_LE(r.rdt, prev_t) << zk;
      prev_e = r.energy;
      prev_t = r.rdt;
    }
  }
}

TEST(Oracle, ResolveBoth) {
  const Ndctnet net = physics_ndctnet();
  OracleOptions opt;
  opt.resolve_both = true;
  const RdeResult r = oracle_rde(net, kHot, 8, 25, nca_limits(), opt);
  ASSERT_EQ(r.limiting, Limiting::Temperature);
  const RdeResult v = oracle_rde(net, kHot, 8, 25, voltage_only());
  EXPECT_EQ(r.rdt_vmin, v.rdt_vmin);
  EXPECT_GT(r.rdt_vmin, r.rdt);
  EXPECT_THROW(oracle_rde(net, kHot, 0, 25, nca_limits()), ArgumentError);
}

TEST(Traditional, FlatCurveRectangle) {
  ElectricalParams p = default_cell_params(CellClass::nca_like).electrical;
  const OcvCurve flat({0.0, 1.0}, {3.2, 3.2 + 1e-12});
  EXPECT_NEAR(traditional_rde(CellState::rested(0.5, 25), p, flat, 2.5), 4.0, 1e-9);
  EXPECT_EQ(traditional_rde(CellState::rested(0.0, 25), p, flat, 2.5), 0.0);
  EXPECT_THROW(traditional_rde(CellState::rested(0.5, 25), p, flat, 0), ArgumentError);
}

TEST(Traditional, MatchesIndependentQuadrature) {
  for (CellClass c : {CellClass::nca_like, CellClass::lfp_like}) {
    const CellParams base = default_cell_params(c);
    for (double u : {0.05, 0.33, 0.5, 0.77, 1.0}) {
      const double ref = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
          [&](double x) { return base.ocv.eval(x).volts; }, 0.0, u, 15, 1e-14);
      const double qa = 2.5;
      EXPECT_NEAR(traditional_rde(CellState::rested(u, 25), base.electrical, base.ocv, qa), qa * ref, 1e-6);
    }
  }
}

TEST(RelativeError, Examples) {
  EXPECT_NEAR(relative_error(221, 231), 4.52, 0.005);
  EXPECT_NEAR(relative_error(3.64, 3.56), 2.20, 0.005);
  EXPECT_EQ(relative_error(5, 5), 0);
  EXPECT_THROW(relative_error(0, 1), DomainError);
}
