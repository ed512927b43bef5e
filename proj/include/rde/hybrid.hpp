#pragma once

// NDCTNet: linear electro-thermal state dynamics with two learned output
// heads, and the synthetic virtual cell used as its ground truth.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "rde/cell.hpp"
#include "rde/error.hpp"
#include "rde/neural.hpp"
#include "rde/profile.hpp"
#include "rde/propagator.hpp"

namespace rde {

inline constexpr int kHvInputs = 6;  // Vb, Vs, V1, Tcore, Tsurf, I
inline constexpr int kHtInputs = 3;  // Vb, Tcore, Tsurf

inline std::array<double, kHvInputs> hv_features(const CellState& s, double current) {
  return {s.Vb, s.Vs, s.V1, s.Tcore, s.Tsurf, current};
}
inline std::array<double, kHtInputs> ht_features(const CellState& s) { return {s.Vb, s.Tcore, s.Tsurf}; }

/// h_V either predicts the terminal voltage directly or a correction added to
/// the NDC output equation h(Vs) + V1 + R0*I. Both use the same six inputs.
enum class VoltageHead { direct, ndc_correction };

class Ndctnet {
 public:
  Ndctnet() = default;
  Ndctnet(CellParams base, Mlp h_v, Mlp h_t, VoltageHead head = VoltageHead::ndc_correction)
      : base_(std::move(base)), h_v_(std::move(h_v)), h_t_(std::move(h_t)), head_(head) {
    base_.validate();
    if (h_v_.inputs() != kHvInputs || h_v_.outputs() != 1) throw ArgumentError("Ndctnet: h_V must map 6 -> 1");
    if (h_t_.inputs() != kHtInputs || h_t_.outputs() != 1) throw ArgumentError("Ndctnet: h_T must map 3 -> 1");
    h_v_.validate();
    h_t_.validate();
    cache_ = PropagatorCache(base_.electrical, base_.thermal);
  }

  const CellParams& base() const { return base_; }
  const ElectricalParams& electrical() const { return base_.electrical; }
  const ThermalParams& thermal() const { return base_.thermal; }
  const OcvCurve& ocv() const { return base_.ocv; }
  const OperatingLimits& limits() const { return base_.limits; }
  const Mlp& h_v() const { return h_v_; }
  const Mlp& h_t() const { return h_t_; }
  const PropagatorCache& cache() const { return cache_; }
  double c_o() const { return base_.electrical.c_o; }
  VoltageHead voltage_head() const { return head_; }

  /// Physics part of the voltage head (zero for a direct head).
  double voltage_offset(const CellState& s, double current) const {
    return head_ == VoltageHead::direct ? 0.0 : terminal_voltage_ndc(s, current, base_.electrical, base_.ocv).volts;
  }
  double voltage(const CellState& s, double current) const {
    return voltage_offset(s, current) + h_v_.forward1(hv_features(s, current));
  }
  double temperature(const CellState& s) const { return h_t_.forward1(ht_features(s)); }

  // DynamicsModel: the state follows the unmodified linear physics.
  Vec5 derivative(const Vec5& x, double current) const {
    return f_phy(CellState::from(x), current, tamb, base_.electrical, base_.thermal);
  }
  double voltage(const Vec5& x, double current) const { return voltage(CellState::from(x), current); }
  double limit_temperature(const Vec5& x) const { return temperature(CellState::from(x)); }

  double tamb = 25;  ///< ambient used when integrated with rk4_simulate

 private:
  CellParams base_;
  Mlp h_v_;
  Mlp h_t_;
  VoltageHead head_ = VoltageHead::ndc_correction;
  PropagatorCache cache_;
};

struct HybridOutputs {
  double voltage;
  double temperature;
};

inline HybridOutputs hybrid_outputs(const Ndctnet& net, const CellState& s, double current) {
  return {net.voltage(s, current), net.temperature(s)};
}

inline double hv_phi(const Ndctnet& net, const CellState& s, double z, double Tamb, double dt) {
  return net.voltage(propagate(s, z, Tamb, dt, net.cache()), -z * net.c_o());
}

inline double ht_phi(const Ndctnet& net, const CellState& s, double z, double Tamb, double dt) {
  return net.temperature(propagate(s, z, Tamb, dt, net.cache()));
}

/// Runs NDCTNet along a profile with closed-form steps at the sample interval.
/// With limits the run stops at the first sample where V < Vmin or
/// T_hybrid >= Tmax (the stop sample is kept, not interpolated).
inline Trajectory hybrid_simulate(const Ndctnet& net, const CurrentProfile& profile, const CellState& s0,
                                  double Tamb, const std::optional<OperatingLimits>& limits = std::nullopt) {
  profile.validate();
  Trajectory tr;
  auto record = [&](double t, const CellState& s, double current) {
    tr.times.push_back(t);
    tr.states.push_back(s);
    tr.currents.push_back(current);
    tr.voltages.push_back(net.voltage(s, current));
    tr.temperatures.push_back(net.temperature(s));
    if (limits) {
      if (tr.voltages.back() < limits->Vmin) {
        tr.stop_reason = StopReason::VoltageCutoff;
        return false;
      }
      if (tr.temperatures.back() >= limits->Tmax) {
        tr.stop_reason = StopReason::TemperatureCutoff;
        return false;
      }
    }
    return true;
  };
  CellState s = s0;
  const double i0 = profile.segments.empty() ? 0.0 : -profile.segments.front().c_rate * net.c_o();
  if (!record(0.0, s, i0)) return tr;
  double t0 = 0;
  for (const auto& seg : profile.segments) {
    const long whole = static_cast<long>(std::floor(seg.duration / profile.sample_interval + 1e-9));
    const LinearStep full = net.cache().step(seg.c_rate, Tamb, profile.sample_interval);
    const double current = -seg.c_rate * net.c_o();
    for (long k = 1; k <= whole; ++k) {
      s = full.apply(s);
      if (!record(t0 + static_cast<double>(k) * profile.sample_interval, s, current)) return tr;
    }
    const double rest = seg.duration - static_cast<double>(whole) * profile.sample_interval;
    if (rest > 1e-9 * seg.duration) {
      s = propagate(s, seg.c_rate, Tamb, rest, net.cache());
      if (!record(t0 + seg.duration, s, current)) return tr;
    }
    t0 += seg.duration;
  }
  tr.stop_reason = StopReason::HorizonReached;
  return tr;
}

// Virtual cell

struct VirtualCell {
  CellParams base;
  double alpha_r = 0.01;  ///< 1/degC
  double beta_r = 0.3;
  double gamma_q = 0.2;
  double z_ref = 8;

  static VirtualCell defaults(CellClass c) {
    VirtualCell v;
    v.base = default_cell_params(c);
    v.z_ref = default_z_max(c);
    return v;
  }

  VirtualCell without_residuals() const {
    VirtualCell v = *this;
    v.alpha_r = v.beta_r = v.gamma_q = 0;
    return v;
  }

  void validate() const {
    base.validate();
    if (!(z_ref > 0)) throw ArgumentError("VirtualCell: z_ref must be positive");
    for (double c : {alpha_r, beta_r, gamma_q}) {
      if (!std::isfinite(c)) throw ArgumentError("VirtualCell: residual coefficients must be finite");
    }
  }
};

/// Truth dynamics of the virtual cell in DynamicsModel form. Surface
/// temperature is the limit channel.
struct VirtualCellModel {
  const VirtualCell* cell;
  double tamb = 25;

  double relative_current(double current) const { return std::abs(current) / (cell->z_ref * cell->base.electrical.c_o); }

  Vec5 derivative(const Vec5& x, double current) const {
    const auto& p = cell->base;
    Vec5 d = f_phy(CellState::from(x), current, tamb, p.electrical, p.thermal);
    d[3] += p.electrical.R0 / p.thermal.C_core * current * current * (cell->gamma_q * relative_current(current));
    return d;
  }

  double voltage(const Vec5& x, double current) const {
    const auto& p = cell->base;
    const auto r = p.ocv.eval(x[1]);
    const double factor = 1 + cell->alpha_r * (x[3] - 25) + cell->beta_r * relative_current(current);
    const double v = r.volts + x[2] + p.electrical.R0 * current * factor;
    if (!(v >= 0.5 * p.limits.Vmin && v <= 1.5 * p.ocv.v_max())) {
      throw ModelValidityError("virtual cell: voltage " + std::to_string(v) + " V left the validity window");
    }
    return v;
  }

  double limit_temperature(const Vec5& x) const { return x[4]; }
  double c_o() const { return cell->base.electrical.c_o; }
};

inline constexpr double kVirtualCellStep = 0.1;  // s

inline Trajectory virtual_cell_simulate(const VirtualCell& cell, const CurrentProfile& profile, const CellState& s0,
                                        double Tamb, const std::optional<OperatingLimits>& limits = std::nullopt,
                                        double step = kVirtualCellStep) {
  cell.validate();
  return rk4_simulate(VirtualCellModel{&cell, Tamb}, s0, profile, step, limits);
}

struct SimRecord {
  double time;
  double current;
  double true_voltage;
  double true_surface_temp;
  CellState base_state;
};

/// The first `duration` seconds of a profile.
inline CurrentProfile truncate_profile(const CurrentProfile& p, double duration) {
  CurrentProfile out;
  out.sample_interval = p.sample_interval;
  double t = 0;
  for (const auto& s : p.segments) {
    if (t >= duration) break;
    const double d = std::min(s.duration, duration - t);
    if (d > 0) out.segments.push_back({d, s.c_rate});
    t += s.duration;
  }
  return out;
}

/// Discharges the virtual cell from full charge along each profile until
/// V < Vmin (the thermal limit is not applied), and pairs every sample with
/// the unmodified physics state under the identical current.
inline std::vector<SimRecord> generate_training_pairs(const VirtualCell& cell, std::span<const CurrentProfile> profiles,
                                                      double Tamb, double step = kVirtualCellStep) {
  std::vector<SimRecord> out;
  OperatingLimits cutoff = cell.base.limits;
  cutoff.Tmax = std::numeric_limits<double>::infinity();
  const PhysicsModel physics{cell.base.electrical, cell.base.thermal, cell.base.ocv, Tamb};
  for (const auto& profile : profiles) {
    const CellState s0 = CellState::rested(1.0, Tamb);
    const Trajectory truth = virtual_cell_simulate(cell, profile, s0, Tamb, cutoff, step);
    // Keep the samples on the regular grid; an interpolated stop point is dropped.
    std::size_t n = truth.size();
    if (truth.stop_reason != StopReason::HorizonReached) --n;
    if (n < 2) continue;
    const double t_end = truth.times[n - 1];
    const Trajectory base = rk4_simulate(physics, s0, truncate_profile(profile, t_end), step);
    if (base.size() != n) throw NumericalError("generate_training_pairs: base and truth grids disagree");
    for (std::size_t k = 0; k < n; ++k) {
      out.push_back({truth.times[k], truth.currents[k], truth.voltages[k], truth.states[k].Tsurf, base.states[k]});
    }
  }
  return out;
}

inline double rmse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.empty()) throw ArgumentError("rmse: empty series");
  if (pred.size() != truth.size()) throw ArgumentError("rmse: length mismatch");
  double s = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) s += (pred[k] - truth[k]) * (pred[k] - truth[k]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

/// h_V training set; with a base model the target is the correction over
/// the NDC output equation.
inline Dataset hv_dataset(std::span<const SimRecord> records, const CellParams* ndc_base = nullptr) {
  Dataset d{Eigen::MatrixXd(kHvInputs, records.size()), Eigen::MatrixXd(1, records.size())};
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    const auto f = hv_features(r.base_state, r.current);
    for (int i = 0; i < kHvInputs; ++i) d.inputs(i, k) = f[i];
    const double offset =
        ndc_base ? terminal_voltage_ndc(r.base_state, r.current, ndc_base->electrical, ndc_base->ocv).volts : 0.0;
    d.targets(0, k) = r.true_voltage - offset;
  }
  return d;
}

inline Dataset ht_dataset(std::span<const SimRecord> records) {
  Dataset d{Eigen::MatrixXd(kHtInputs, records.size()), Eigen::MatrixXd(1, records.size())};
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto f = ht_features(records[k].base_state);
    for (int i = 0; i < kHtInputs; ++i) d.inputs(i, k) = f[i];
    d.targets(0, k) = records[k].true_surface_temp;
  }
  return d;
}

struct HybridScores {
  double voltage_rmse;      ///< V
  double temperature_rmse;  ///< degC
};

inline HybridScores evaluate_ndctnet(const Ndctnet& net, std::span<const SimRecord> records) {
  if (records.empty()) throw ArgumentError("evaluate_ndctnet: no records");
  const bool correction = net.voltage_head() == VoltageHead::ndc_correction;
  const Dataset dv = hv_dataset(records, correction ? &net.base() : nullptr);
  const Dataset dt = ht_dataset(records);
  // Comparing corrections is the same as comparing voltages.
  const Eigen::MatrixXd pv = net.h_v().forward_batch(dv.inputs);
  const Eigen::MatrixXd pt = net.h_t().forward_batch(dt.inputs);
  return {rmse({pv.data(), records.size()}, {dv.targets.data(), records.size()}),
          rmse({pt.data(), records.size()}, {dt.targets.data(), records.size()})};
}

struct HybridFit {
  Ndctnet net;
  HybridScores heldout;
  TrainHistory h_v_history;
  TrainHistory h_t_history;
};

inline std::vector<int> default_architecture(int inputs) { return {inputs, 48, 48, 1}; }

/// Fits h_V and h_T on `train`; scores both heads on `heldout`.
inline HybridFit train_ndctnet(const CellParams& base, std::span<const SimRecord> train,
                               std::span<const SimRecord> heldout, const TrainConfig& cfg_v,
                               const TrainConfig& cfg_t, VoltageHead head = VoltageHead::ndc_correction) {
  if (train.empty()) throw ArgumentError("train_ndctnet: no training records");
  const CellParams* offset = head == VoltageHead::ndc_correction ? &base : nullptr;
  auto fv = mlp_train(Mlp::glorot(default_architecture(kHvInputs), cfg_v.seed), hv_dataset(train, offset), cfg_v);
  auto ft = mlp_train(Mlp::glorot(default_architecture(kHtInputs), cfg_t.seed), ht_dataset(train), cfg_t);
  HybridFit fit{Ndctnet(base, std::move(fv.net), std::move(ft.net), head), {}, std::move(fv.history),
                std::move(ft.history)};
  fit.heldout = evaluate_ndctnet(fit.net, heldout.empty() ? train : heldout);
  return fit;
}

}  // namespace rde
