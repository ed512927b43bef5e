// Quickstart: fit NDCTNet to a virtual cell, then compare physics-aware
// remaining energy against the open-circuit integral at several C-rates.
//
//   ./build/demo/quickstart
//
// Takes a few seconds. The full pipeline (with the fast RDE networks)
// lives behind tools/rde.

#include <cstdio>
#include <vector>

#include "rde/hybrid.hpp"
#include "rde/rde.hpp"

using namespace rde;

int main() {
  const CellClass cls = CellClass::nca_like;
  const VirtualCell cell = VirtualCell::defaults(cls);
  const CellParams& base = cell.base;

  // Ground-truth records from a few constant discharges and one drive cycle.
  std::vector<CurrentProfile> train = {constant_profile(0.5, 9000), constant_profile(2, 2400),
                                       constant_profile(6, 800), synth_drive_cycle(1, 6000, cell.z_ref)};
  const std::vector<CurrentProfile> held = {synth_drive_cycle(101, 6000, cell.z_ref)};
  const auto train_rec = generate_training_pairs(cell, train, 25, kVirtualCellStep);
  const auto held_rec = generate_training_pairs(cell, held, 25, kVirtualCellStep);

  TrainConfig tc;
  tc.epochs = 60;
  tc.lr_decay = 0.97;
  tc.patience = 0;
  TrainConfig tv = tc, tt = tc;
  tt.seed = 2;
  const HybridFit fit = train_ndctnet(base, train_rec, held_rec, tv, tt);
  std::printf("NDCTNet on %zu records: held-out RMSE %.2f mV, %.3f degC\n\n", train_rec.size(),
              1e3 * fit.heldout.voltage_rmse, fit.heldout.temperature_rmse);

  const CellState full = CellState::rested(1.0, 25);
  const auto& e = base.electrical;
  const double trad = traditional_rde(full, e, base.ocv, e.capacity_ah());
  std::printf("    z   RDT [s]   RDE [Wh]  limit        OCV integral [Wh]\n");
  for (double z : {0.5, 1.0, 2.0, 4.0, 6.0, 8.0}) {
    const RdeResult r = oracle_rde(fit.net, full, z, 25, base.limits);
    std::printf("%5.1f  %8.1f  %9.3f  %-11s  %9.3f\n", z, r.rdt, r.energy, to_string(r.limiting), trad);
  }
}
