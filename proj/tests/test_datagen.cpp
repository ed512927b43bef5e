#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <tuple>

#include "rde/datagen.hpp"
#include "rde/rde.hpp"
#include "test_support.hpp"

using namespace rde;
using rde::testing::physics_ndctnet;
using rde::testing::TempDir;

namespace {

OperatingLimits limits_nca() { return default_cell_params(CellClass::nca_like).limits; }

struct SmallPlan {
  Ndctnet net = physics_ndctnet();
  CurrentProfile profile = synth_drive_cycle(11, 300, 8);
  std::vector<double> z = log_grid(0.2, 8, 5);
  BranchOutput run(unsigned threads = 1, int energy_points = 16) const {
    BranchOptions opt;
    opt.threads = threads;
    opt.energy_points = energy_points;
    return branch_out_generate(net, profile, z, 50, 25, limits_nca(), opt);
  }
};

}  // namespace

TEST(DriveCycle, SeededAndInRange) {
  const CurrentProfile a = synth_drive_cycle(42, 3600, 8);
  const CurrentProfile b = synth_drive_cycle(42, 3600, 8);
  ASSERT_EQ(a.segments.size(), b.segments.size());
  for (std::size_t k = 0; k < a.segments.size(); ++k) {
    EXPECT_EQ(a.segments[k].duration, b.segments[k].duration);
    EXPECT_EQ(a.segments[k].c_rate, b.segments[k].c_rate);
  }
  EXPECT_DOUBLE_EQ(a.duration(), 3600);
  for (const auto& s : a.segments) {
    EXPECT_GE(s.c_rate, 0);
    EXPECT_LE(s.c_rate, 8);
  }
  EXPECT_NE(synth_drive_cycle(43, 3600, 8).segments.front().c_rate, a.segments.front().c_rate);
}

TEST(DriveCycle, MeanRateBand) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const CurrentProfile p = synth_drive_cycle(seed, 3600, 8);
    double charge = 0;
    for (const auto& s : p.segments) charge += s.c_rate * s.duration;
    const double mean = charge / p.duration();
    EXPECT_GE(mean, 0.15 * 8) << seed;
    EXPECT_LE(mean, 0.5 * 8) << seed;
  }
}

TEST(Evtol, Phases) {
  const CurrentProfile p = evtol_profile();
  ASSERT_EQ(p.segments.size(), 3u);
  EXPECT_EQ(p.segments[0].c_rate, 5);
  EXPECT_EQ(p.segments[1].c_rate, 1.48);
  EXPECT_EQ(p.segments[2].c_rate, 5);
  EXPECT_EQ(p.duration(), 1080);
}

TEST(Evtol, SocDecreasesOnVirtualCell) {
  const VirtualCell cell = VirtualCell::defaults(CellClass::nca_like);
  const Trajectory tr = virtual_cell_simulate(cell, evtol_profile(), CellState::rested(1, 25), 25);
  ASSERT_EQ(tr.size(), 1081u);
  for (std::size_t k = 1; k < tr.size(); ++k) {
    EXPECT_LT(soc(tr.states[k], cell.base.electrical), soc(tr.states[k - 1], cell.base.electrical)) << k;
  }
}

TEST(Profile, CsvRoundTrip) {
  TempDir dir("profile");
  const CurrentProfile p = synth_drive_cycle(5, 600, 8);
  const std::string path = (dir.path() / "p.csv").string();
  save_profile_csv(p, path);
  const CurrentProfile back = load_profile_csv(path);
  ASSERT_EQ(back.segments.size(), p.segments.size());
  for (std::size_t k = 0; k < p.segments.size(); ++k) {
    EXPECT_NEAR(back.segments[k].c_rate, p.segments[k].c_rate, 1e-8 * p.segments[k].c_rate);
    EXPECT_EQ(back.segments[k].duration, p.segments[k].duration);
  }
}

TEST(LogGrid, EndpointsAndRatio) {
  const auto z = log_grid(0.2, 8, 20);
  ASSERT_EQ(z.size(), 20u);
  EXPECT_EQ(z.front(), 0.2);
  EXPECT_EQ(z.back(), 8);
  const double r = std::pow(40.0, 1.0 / 19);
  for (std::size_t k = 1; k < z.size(); ++k) EXPECT_NEAR(z[k] / z[k - 1], r, 1e-12);
  EXPECT_THROW(log_grid(0, 8, 5), ArgumentError);
  EXPECT_THROW(log_grid(1, 8, 1), ArgumentError);
  EXPECT_THROW(log_grid(8, 1, 5), ArgumentError);
}

TEST(Episode, StartsBelowLimits) {
  const Ndctnet net = physics_ndctnet();
  EpisodeSpec spec;
  spec.z = 1;
  spec.vmin = 3.0;
  spec.tmax = 50;
  const Episode low = run_episode(net, CellState::rested(0.0, 25), spec);
  EXPECT_EQ(low.reason, StopReason::VoltageCutoff);
  EXPECT_EQ(low.end, 0);
  const Episode hot = run_episode(net, CellState{1, 1, 0, 60, 60}, spec);
  EXPECT_EQ(hot.reason, StopReason::TemperatureCutoff);
  EXPECT_EQ(hot.end, 0);
  spec.grid = 0;
  EXPECT_THROW(run_episode(net, CellState::rested(1, 25), spec), ArgumentError);
}

TEST(Episode, EnergyCurveShape) {
  const Ndctnet net = physics_ndctnet();
  EpisodeSpec spec;
  spec.z = 2;
  spec.vmin = 3.0;
  const Episode ep = run_episode(net, CellState::rested(0.8, 25), spec);
  ASSERT_EQ(ep.reason, StopReason::VoltageCutoff);
  EXPECT_EQ(ep.energy.front(), 0.0);
  EXPECT_EQ(ep.energy.size(), static_cast<std::size_t>(std::floor(ep.end)) + 1);
  for (std::size_t k = 1; k < ep.energy.size(); ++k) EXPECT_GT(ep.energy[k], ep.energy[k - 1]);
  EXPECT_GE(ep.end_energy, ep.energy.back());
  // Final voltage sits on the cutoff to within the refinement bracket.
  EXPECT_NEAR(hv_phi(net, CellState::rested(0.8, 25), 2, 25, ep.end), 3.0, 1e-3);
}

TEST(Episode, GridHalvingConverges) {
  const Ndctnet net = physics_ndctnet();
  for (double z : {0.5, 3.0, 8.0}) {
    EpisodeSpec spec;
    spec.z = z;
    spec.vmin = 3.0;
    spec.resolution = 0.01;
    const Episode a = run_episode(net, CellState::rested(1, 25), spec);
    spec.grid = 0.5;
    const Episode b = run_episode(net, CellState::rested(1, 25), spec);
    EXPECT_LT(std::abs(a.end_energy - b.end_energy) / b.end_energy, 1e-3) << z;
  }
}

TEST(BranchOut, CountsAndEnergyInvariants) {
  const SmallPlan plan;
  const BranchOutput out = plan.run();
  EXPECT_EQ(out.branches, 7u);
  EXPECT_EQ(out.rdt.size() + out.skipped, out.branches * plan.z.size());
  EXPECT_EQ(out.skipped, 0u);

  // Samples come out grouped by episode, each starting at dt = 0.
  std::vector<std::vector<const EnergySample*>> episodes;
  for (const auto& e : out.energy) {
    if (e.dt == 0) episodes.emplace_back();
    episodes.back().push_back(&e);
  }
  ASSERT_EQ(episodes.size(), out.rdt.size());
  for (const auto& samples : episodes) {
    EXPECT_LE(samples.size(), 16u);
    EXPECT_EQ(samples.front()->dt, 0.0);
    EXPECT_EQ(samples.front()->energy, 0.0);
    EXPECT_EQ(samples.back()->dt, samples.back()->rdt_vmin);
    for (std::size_t k = 1; k < samples.size(); ++k) {
      EXPECT_GT(samples[k]->dt, samples[k - 1]->dt);
      EXPECT_GT(samples[k]->energy, samples[k - 1]->energy);
      EXPECT_LE(samples[k]->dt, samples[k]->rdt_vmin);
    }
  }
}

TEST(BranchOut, ShortEpisodesKeepEveryGridPoint) {
  const SmallPlan plan;
  const BranchOutput out = plan.run(1, 100000);
  std::size_t expected = 0;
  for (const auto& r : out.rdt) expected += static_cast<std::size_t>(std::floor(r.rdt_vmin)) + 2;
  EXPECT_EQ(out.energy.size(), expected);
}

TEST(BranchOut, RateCapacityAtDataLevel) {
  const SmallPlan plan;
  const BranchOutput out = plan.run();
  // Within a branch the z grid is ascending; a drop in z starts the next branch.
  auto by_branch = [](const auto& rows, auto value) {
    std::vector<std::vector<std::pair<double, double>>> out;
    double last_z = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) {
      if (r.z <= last_z) out.emplace_back();
      out.back().push_back({r.z, value(r)});
      last_z = r.z;
    }
    return out;
  };
  for (const auto& rows : by_branch(out.rdt, [](const RdtSample& r) { return r.rdt_vmin * r.z; })) {
    for (std::size_t k = 1; k < rows.size(); ++k) EXPECT_LE(rows[k].second, rows[k - 1].second);
  }
  std::vector<EnergySample> finals;
  for (const auto& e : out.energy) {
    if (e.dt == e.rdt_vmin) finals.push_back(e);
  }
  for (const auto& rows : by_branch(finals, [](const EnergySample& e) { return e.energy; })) {
    for (std::size_t k = 1; k < rows.size(); ++k) EXPECT_LE(rows[k].second, rows[k - 1].second);
  }
}

TEST(BranchOut, UniqueAndThreadIndependent) {
  const SmallPlan plan;
  const BranchOutput a = plan.run(1);
  const BranchOutput b = plan.run(3);
  ASSERT_EQ(a.rdt.size(), b.rdt.size());
  ASSERT_EQ(a.energy.size(), b.energy.size());
  std::map<std::tuple<double, double, double, double, double, double>, double> seen;
  for (std::size_t k = 0; k < a.rdt.size(); ++k) {
    EXPECT_EQ(a.rdt[k].state, b.rdt[k].state);
    EXPECT_EQ(a.rdt[k].rdt_vmin, b.rdt[k].rdt_vmin);
    const auto& s = a.rdt[k].state;
    const auto key = std::make_tuple(s.Vb, s.Vs, s.V1, s.Tcore, a.rdt[k].z, a.rdt[k].tamb);
    const auto [it, fresh] = seen.emplace(key, a.rdt[k].rdt_vmin);
    if (!fresh) {
      EXPECT_EQ(it->second, a.rdt[k].rdt_vmin);
    }
  }
  for (std::size_t k = 0; k < a.energy.size(); ++k) {
    EXPECT_EQ(a.energy[k].energy, b.energy[k].energy);
    EXPECT_EQ(a.energy[k].dt, b.energy[k].dt);
  }
}

TEST(BranchOut, RejectsBadArguments) {
  const SmallPlan plan;
  EXPECT_THROW(branch_out_generate(plan.net, plan.profile, plan.z, 2.5, 25, limits_nca()), ArgumentError);
  EXPECT_THROW(branch_out_generate(plan.net, plan.profile, plan.z, 0, 25, limits_nca()), ArgumentError);
  EXPECT_THROW(branch_out_generate(plan.net, plan.profile, {0.0, 1.0}, 10, 25, limits_nca()), ArgumentError);
  BranchOptions opt;
  opt.energy_points = 1;
  EXPECT_THROW(branch_out_generate(plan.net, plan.profile, plan.z, 10, 25, limits_nca(), opt), ArgumentError);
}

TEST(BranchOut, ParentCutoffIsRecorded) {
  const Ndctnet net = physics_ndctnet();
  const BranchOutput out = branch_out_generate(net, constant_profile(3, 5000), {1.0}, 100, 25, limits_nca());
  EXPECT_EQ(out.parent_stop, StopReason::VoltageCutoff);
  EXPECT_LT(out.parent_end, 5000);
  EXPECT_EQ(out.branches, static_cast<std::size_t>(std::floor(out.parent_end / 100)) + 1);
}

TEST(DatasetIo, RoundTripToNineDigits) {
  TempDir dir("dataset");
  const SmallPlan plan;
  const BranchOutput out = plan.run();
  const std::string rdt_path = (dir.path() / "rdt.csv").string();
  const std::string e_path = (dir.path() / "energy.csv").string();
  save_rdt_csv(out.rdt, rdt_path);
  save_energy_csv(out.energy, e_path);
  const auto rdt = load_rdt_csv(rdt_path);
  const auto energy = load_energy_csv(e_path);
  ASSERT_EQ(rdt.size(), out.rdt.size());
  ASSERT_EQ(energy.size(), out.energy.size());
  auto close = [](double a, double b) { return std::abs(a - b) <= 5e-9 * std::max(std::abs(b), 1e-300); };
  for (std::size_t k = 0; k < rdt.size(); ++k) {
    EXPECT_TRUE(close(rdt[k].state.Vb, out.rdt[k].state.Vb));
    EXPECT_TRUE(close(rdt[k].state.Tcore, out.rdt[k].state.Tcore));
    EXPECT_TRUE(close(rdt[k].z, out.rdt[k].z));
    EXPECT_TRUE(close(rdt[k].rdt_vmin, out.rdt[k].rdt_vmin));
  }
  for (std::size_t k = 0; k < energy.size(); ++k) {
    EXPECT_TRUE(close(energy[k].dt, out.energy[k].dt));
    EXPECT_TRUE(close(energy[k].energy, out.energy[k].energy));
  }
  // Saving what was loaded reproduces the file byte for byte.
  save_rdt_csv(rdt, (dir.path() / "again.csv").string());
  EXPECT_EQ(csv::slurp((dir.path() / "again.csv").string()), csv::slurp(rdt_path));
}

TEST(DatasetIo, SchemaErrors) {
  TempDir dir("schema");
  const std::string path = (dir.path() / "bad.csv").string();
  std::ofstream(path) << "vb,vs,v1,tcore,tsurf,z,tamb\n1,1,0,25,25,1,25\n";
  try {
    load_rdt_csv(path);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("rdt_s"), std::string::npos) << e.what();
  }
  std::ofstream(path, std::ios::trunc) << "vb,vs,v1,tcore,tsurf,z,tamb,rdt_s\n1,1,0,25,25,1,25,10\n1,1,0,x,25,1,25,10\n";
  try {
    load_rdt_csv(path);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, MillionRows) {
  TempDir dir("bulk");
  std::vector<RdtSample> rows(1000000);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k] = {CellState::rested(1.0 - 1e-7 * static_cast<double>(k), 25), 1.0, 25, static_cast<double>(k + 1)};
  }
  const std::string path = (dir.path() / "big.csv").string();
  save_rdt_csv(rows, path);
  const auto back = load_rdt_csv(path);
  ASSERT_EQ(back.size(), rows.size());
  EXPECT_EQ(back.back().rdt_vmin, 1000000.0);
}

TEST(EnergyDataset, TargetsAreMeanPowerWithoutZeroHorizon) {
  const CellState s = CellState::rested(0.8, 25);
  std::vector<EnergySample> samples = {
      {s, 2, 25, 900, 0, 0},
      {s, 2, 25, 900, 450, 1.25},
      {s, 4, 30, 400, 400, 2.0},
  };
  const Dataset d = energy_dataset(samples);
  ASSERT_EQ(d.inputs.cols(), 2);
  EXPECT_DOUBLE_EQ(d.targets(0, 0), 10.0);
  EXPECT_DOUBLE_EQ(d.targets(0, 1), 18.0);
  EXPECT_EQ(d.inputs(7, 0), 450);
  EXPECT_EQ(d.inputs(5, 1), 4);
  EXPECT_EQ(d.inputs(6, 1), 30);
}
