#pragma once

// Pipeline stages (gen-truth, train-hybrid, gen-rde-data, train-rde) and the
// result commands (validate, sweep, benchmark, predict). Every stage writes its
// artifacts plus manifest.json recording the config hash, seed, input and
// output SHA-256 digests; a stage whose manifest still matches is skipped.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "rde/config.hpp"
#include "rde/rde.hpp"

namespace rde {

namespace fs = std::filesystem;

inline constexpr const char* kTruthDir = "truth";
inline constexpr const char* kHybridDir = "hybrid";
inline constexpr const char* kRdeDataDir = "rde_data";
inline constexpr const char* kRdeModelDir = "rde_model";
inline constexpr const char* kResultsDir = "results";

// Seed tags for derive_seed.
inline constexpr std::uint64_t kSeedHv = 1, kSeedHt = 2, kSeedRdt = 3, kSeedE = 4;

struct StageOutcome {
  std::string stage;
  bool skipped = false;
  nlohmann::json metrics;
  double wall_s = 0;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("short write to '" + path.string() + "'");
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageInputError("missing artifact '" + path.string() + "'");
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw StageInputError("unreadable artifact '" + path.string() + "': " + e.what());
  }
}

inline const char* producer(const std::string& stage) {
  if (stage == kTruthDir) return "gen-truth";
  if (stage == kHybridDir) return "train-hybrid";
  if (stage == kRdeDataDir) return "gen-rde-data";
  if (stage == kRdeModelDir) return "train-rde";
  return "?";
}

inline std::string profile_digest(const RunConfig& cfg, const std::string& spec) {
  return is_profile_file(spec) ? sha256_file(resolve_path(cfg, spec).string()) : "";
}

inline nlohmann::json profiles_json(const RunConfig& cfg, const std::vector<std::string>& specs) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : specs) {
    nlohmann::json e = {{"spec", s}};
    if (is_profile_file(s)) e["sha256"] = profile_digest(cfg, s);
    out.push_back(e);
  }
  return out;
}

inline std::vector<CurrentProfile> make_profiles(const RunConfig& cfg, const std::vector<std::string>& specs) {
  std::vector<CurrentProfile> out;
  for (const auto& s : specs) out.push_back(make_profile(cfg, s));
  return out;
}

}  // namespace detail

/// Checks an upstream stage: manifest present and every listed output on
/// disk with its recorded digest. Returns {"<stage>/<file>": sha256}.
inline std::map<std::string, std::string> verify_stage(const fs::path& root, const std::string& stage) {
  const fs::path manifest = root / stage / "manifest.json";
  if (!fs::exists(manifest)) {
    throw StageInputError("missing stage input '" + (fs::path(stage) / "manifest.json").string() + "' (run " +
                          detail::producer(stage) + " first)");
  }
  const nlohmann::json m = detail::read_json(manifest);
  if (!m.contains("outputs") || !m["outputs"].is_object()) {
    throw StageInputError("manifest '" + manifest.string() + "' lists no outputs");
  }
  std::map<std::string, std::string> out;
  for (const auto& [name, digest] : m["outputs"].items()) {
    const std::string rel = (fs::path(stage) / name).string();
    const fs::path file = root / stage / name;
    if (!fs::exists(file)) throw StageInputError("missing artifact '" + rel + "' (rerun " + detail::producer(stage) + ")");
    if (sha256_file(file.string()) != digest.get<std::string>()) {
      throw StageInputError("artifact '" + rel + "' does not match its manifest (rerun " + detail::producer(stage) + ")");
    }
    out[rel] = digest.get<std::string>();
  }
  return out;
}

namespace detail {

inline bool up_to_date(const fs::path& dir, const std::string& config_sha,
                       const std::map<std::string, std::string>& inputs) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) return false;
  try {
    const nlohmann::json m = read_json(manifest);
    if (m.at("config_sha256") != config_sha) return false;
    if (m.at("inputs").get<std::map<std::string, std::string>>() != inputs) return false;
    for (const auto& [name, digest] : m.at("outputs").items()) {
      const fs::path f = dir / name;
      if (!fs::exists(f) || sha256_file(f.string()) != digest.get<std::string>()) return false;
    }
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

struct StageBody {
  std::vector<std::string> outputs;
  nlohmann::json metrics;
};

/// Runs `body` into root/stage unless the stage is up to date.
inline StageOutcome run_stage(const fs::path& root, const std::string& stage, const nlohmann::json& config,
                              std::uint64_t seed, const std::map<std::string, std::string>& inputs, bool force,
                              const std::function<StageBody(const fs::path&)>& body) {
  const fs::path dir = root / stage;
  const std::string config_sha = sha256(config.dump());
  StageOutcome outcome{stage, false, {}, 0};
  if (!force && up_to_date(dir, config_sha, inputs)) {
    outcome.skipped = true;
    outcome.metrics = read_json(dir / "manifest.json").value("metrics", nlohmann::json::object());
    return outcome;
  }
  fs::create_directories(dir);
  fs::remove(dir / "manifest.json");
  const auto t0 = Clock::now();
  StageBody b = body(dir);
  outcome.wall_s = seconds_since(t0);
  nlohmann::json outputs = nlohmann::json::object();
  for (const auto& name : b.outputs) outputs[name] = sha256_file((dir / name).string());
  nlohmann::json m = {{"stage", stage},
                      {"config_sha256", config_sha},
                      {"seed", seed},
                      {"inputs", inputs},
                      {"outputs", outputs},
                      {"metrics", b.metrics},
                      {"config", config},
                      {"wall_clock_s", outcome.wall_s}};
  write_json(dir / "manifest.json", m);
  outcome.metrics = b.metrics;
  return outcome;
}

inline unsigned threads(const RunConfig& cfg) { return resolve_threads(cfg.threads); }

inline TrainConfig train_config(const RunConfig& cfg, const NetworkConfig& n, std::uint64_t tag) {
  TrainConfig t = n.train;
  t.seed = derive_seed(cfg.seed, tag);
  t.threads = threads(cfg);
  return t;
}

inline std::vector<int> architecture(int inputs, const NetworkConfig& n) {
  std::vector<int> sizes{inputs};
  sizes.insert(sizes.end(), n.hidden.begin(), n.hidden.end());
  sizes.push_back(1);
  return sizes;
}

// Truth record files

inline const std::vector<std::string>& truth_columns() {
  static const std::vector<std::string> c = {"profile", "time_s", "current_a", "v_true", "tsurf_true",
                                             "vb",      "vs",     "v1",        "tcore",  "tsurf"};
  return c;
}

inline void save_truth_csv(const std::vector<std::vector<SimRecord>>& per_profile, const fs::path& path) {
  csv::Writer w(path.string(), truth_columns());
  for (std::size_t p = 0; p < per_profile.size(); ++p) {
    for (const auto& r : per_profile[p]) {
      const auto& s = r.base_state;
      const double row[] = {static_cast<double>(p), r.time, r.current, r.true_voltage, r.true_surface_temp,
                            s.Vb, s.Vs, s.V1, s.Tcore, s.Tsurf};
      w.row(row);
    }
  }
}

inline std::vector<SimRecord> load_truth_csv(const fs::path& path) {
  const auto t = csv::read(path.string(), truth_columns());
  std::vector<SimRecord> out(t.rows);
  for (std::size_t r = 0; r < t.rows; ++r) {
    const auto v = t.row(r);
    out[r] = {v[1], v[2], v[3], v[4], {v[5], v[6], v[7], v[8], v[9]}};
  }
  return out;
}

}  // namespace detail

// Stage configs: the subset of RunConfig each stage depends on.

inline nlohmann::json truth_stage_config(const RunConfig& cfg) {
  return {{"cell", cell_params(cfg)},
          {"tamb", cfg.tamb},
          {"z_max", cfg.z_max},
          {"virtual_cell", to_json(cfg)["virtual_cell"]},
          {"train_profiles", detail::profiles_json(cfg, cfg.hybrid.train_profiles)},
          {"heldout_profiles", detail::profiles_json(cfg, cfg.hybrid.heldout_profiles)},
          {"step_s", cfg.hybrid.step_s}};
}

inline nlohmann::json hybrid_stage_config(const RunConfig& cfg) {
  return {{"cell", cell_params(cfg)},
          {"seed", cfg.seed},
          {"h_v", detail::write_network(cfg.h_v)},
          {"h_t", detail::write_network(cfg.h_t)}};
}

inline nlohmann::json rde_data_stage_config(const RunConfig& cfg) {
  const auto plan = to_json(cfg)["dataset_plan"]["rde"];
  return {{"limits", cell_params(cfg).limits},
          {"tamb", cfg.tamb},
          {"z_max", cfg.z_max},
          {"parent_profiles", detail::profiles_json(cfg, cfg.rde.parent_profiles)},
          {"plan", plan}};
}

inline nlohmann::json rde_model_stage_config(const RunConfig& cfg) {
  return {{"seed", cfg.seed},
          {"fnn_rdt", detail::write_network(cfg.fnn_rdt)},
          {"fnn_e", detail::write_network(cfg.fnn_e)},
          {"predictor", to_json(cfg)["predictor"]},
          {"limits", cell_params(cfg).limits},
          {"z_min", cfg.rde.z_min},
          {"z_max", cfg.z_max}};
}

inline fs::path output_root(const RunConfig& cfg) { return fs::path(cfg.output_dir); }

// Stages

inline StageOutcome stage_gen_truth(const RunConfig& cfg, bool force = false) {
  validate(cfg);
  const fs::path root = output_root(cfg);
  return detail::run_stage(root, kTruthDir, truth_stage_config(cfg), cfg.seed, {}, force, [&](const fs::path& dir) {
    const VirtualCell cell = virtual_cell(cfg);
    auto generate = [&](const std::vector<std::string>& specs) {
      std::vector<std::vector<SimRecord>> per(specs.size());
      const auto profiles = detail::make_profiles(cfg, specs);
      parallel_for(profiles.size(), detail::threads(cfg), [&](std::size_t k) {
        per[k] = generate_training_pairs(cell, std::span(&profiles[k], 1), cfg.tamb, cfg.hybrid.step_s);
      });
      return per;
    };
    const auto train = generate(cfg.hybrid.train_profiles);
    const auto heldout = generate(cfg.hybrid.heldout_profiles);
    detail::save_truth_csv(train, dir / "train.csv");
    detail::save_truth_csv(heldout, dir / "heldout.csv");
    auto count = [](const auto& per) {
      std::size_t n = 0;
      for (const auto& p : per) n += p.size();
      return n;
    };
    return detail::StageBody{{"train.csv", "heldout.csv"},
                             {{"train_records", count(train)}, {"heldout_records", count(heldout)}}};
  });
}

inline void save_ndctnet(const Ndctnet& net, const fs::path& dir) {
  detail::write_json(dir / "cell.json", net.base());
  mlp_save_file(net.h_v(), (dir / "h_v.json").string());
  mlp_save_file(net.h_t(), (dir / "h_t.json").string());
  detail::write_json(dir / "ndctnet.json",
                     {{"cell", "cell.json"},
                      {"h_v", "h_v.json"},
                      {"h_t", "h_t.json"},
                      {"voltage_head", net.voltage_head() == VoltageHead::direct ? "direct" : "ndc_correction"}});
}

inline Ndctnet load_ndctnet(const fs::path& dir) {
  const nlohmann::json b = detail::read_json(dir / "ndctnet.json");
  try {
    const CellParams base = detail::read_json(dir / b.at("cell").get<std::string>()).get<CellParams>();
    const std::string head = b.at("voltage_head").get<std::string>();
    if (head != "direct" && head != "ndc_correction") throw ParseError("ndctnet.json: unknown voltage_head '" + head + "'");
    return Ndctnet(base, mlp_load_file((dir / b.at("h_v").get<std::string>()).string()),
                   mlp_load_file((dir / b.at("h_t").get<std::string>()).string()),
                   head == "direct" ? VoltageHead::direct : VoltageHead::ndc_correction);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("ndctnet.json: ") + e.what());
  }
}

inline StageOutcome stage_train_hybrid(const RunConfig& cfg, bool force = false) {
  validate(cfg);
  const fs::path root = output_root(cfg);
  const auto inputs = verify_stage(root, kTruthDir);
  return detail::run_stage(root, kHybridDir, hybrid_stage_config(cfg), cfg.seed, inputs, force, [&](const fs::path& dir) {
    const auto train = detail::load_truth_csv(root / kTruthDir / "train.csv");
    const auto heldout = detail::load_truth_csv(root / kTruthDir / "heldout.csv");
    const CellParams base = cell_params(cfg);
    const TrainConfig cv = detail::train_config(cfg, cfg.h_v, kSeedHv);
    const TrainConfig ct = detail::train_config(cfg, cfg.h_t, kSeedHt);
    Mlp v0 = Mlp::glorot(detail::architecture(kHvInputs, cfg.h_v), cv.seed);
    v0.output.transform = cfg.h_v.output_transform;
    Mlp t0 = Mlp::glorot(detail::architecture(kHtInputs, cfg.h_t), ct.seed);
    t0.output.transform = cfg.h_t.output_transform;
    auto fv = mlp_train(std::move(v0), hv_dataset(train, &base), cv);
    auto ft = mlp_train(std::move(t0), ht_dataset(train), ct);
    const Ndctnet net(base, std::move(fv.net), std::move(ft.net));
    const HybridScores held = evaluate_ndctnet(net, heldout.empty() ? std::span<const SimRecord>(train) : heldout);
    const HybridScores fit = evaluate_ndctnet(net, train);
    save_ndctnet(net, dir);
    return detail::StageBody{{"cell.json", "h_v.json", "h_t.json", "ndctnet.json"},
                             {{"heldout_voltage_rmse_v", held.voltage_rmse},
                              {"heldout_temperature_rmse_c", held.temperature_rmse},
                              {"train_voltage_rmse_v", fit.voltage_rmse},
                              {"train_temperature_rmse_c", fit.temperature_rmse},
                              {"h_v_best_epoch", fv.history.best_epoch},
                              {"h_t_best_epoch", ft.history.best_epoch}}};
  });
}

inline StageOutcome stage_gen_rde_data(const RunConfig& cfg, bool force = false) {
  validate(cfg);
  const fs::path root = output_root(cfg);
  const auto inputs = verify_stage(root, kHybridDir);
  return detail::run_stage(root, kRdeDataDir, rde_data_stage_config(cfg), cfg.seed, inputs, force, [&](const fs::path& dir) {
    const Ndctnet net = load_ndctnet(root / kHybridDir);
    const OperatingLimits limits = cell_params(cfg).limits;
    BranchOptions opt;
    opt.resolution = cfg.rde.resolution_s;
    opt.energy_points = cfg.rde.energy_points;
    opt.threads = detail::threads(cfg);
    std::vector<RdtSample> rdt;
    std::vector<EnergySample> energy;
    nlohmann::json parents = nlohmann::json::array();
    std::size_t skipped = 0;
    for (const auto& spec : cfg.rde.parent_profiles) {
      const BranchOutput o = branch_out_generate(net, make_profile(cfg, spec), cfg.rde.z_grid(cfg.z_max),
                                                 cfg.rde.t_stride_s, cfg.tamb, limits, opt);
      rdt.insert(rdt.end(), o.rdt.begin(), o.rdt.end());
      energy.insert(energy.end(), o.energy.begin(), o.energy.end());
      skipped += o.skipped;
      parents.push_back({{"profile", spec},
                         {"end_s", o.parent_end},
                         {"stop", to_string(o.parent_stop)},
                         {"branches", o.branches},
                         {"skipped", o.skipped}});
    }
    if (rdt.empty()) throw NumericalError("gen-rde-data: no branch reached Vmin; the dataset is empty");
    save_rdt_csv(rdt, (dir / "rdt.csv").string());
    save_energy_csv(energy, (dir / "energy.csv").string());
    return detail::StageBody{{"rdt.csv", "energy.csv"},
                             {{"rdt_samples", rdt.size()},
                              {"energy_samples", energy.size()},
                              {"skipped", skipped},
                              {"parents", parents}}};
  });
}

inline nlohmann::json predictor_json(const RdePredictor& p) {
  return {{"m", p.m},         {"eps", p.eps},     {"max_bisect", p.max_bisect}, {"z_min", p.z_min},
          {"z_max", p.z_max}, {"limits", p.limits}, {"fnn_rdt", "fnn_rdt.json"}, {"fnn_e", "fnn_e.json"}};
}

inline StageOutcome stage_train_rde(const RunConfig& cfg, bool force = false) {
  validate(cfg);
  const fs::path root = output_root(cfg);
  auto inputs = verify_stage(root, kRdeDataDir);
  inputs.merge(verify_stage(root, kHybridDir));
  return detail::run_stage(root, kRdeModelDir, rde_model_stage_config(cfg), cfg.seed, inputs, force, [&](const fs::path& dir) {
    const auto rdt = load_rdt_csv((root / kRdeDataDir / "rdt.csv").string());
    const auto energy = load_energy_csv((root / kRdeDataDir / "energy.csv").string());
    const TrainConfig cr = detail::train_config(cfg, cfg.fnn_rdt, kSeedRdt);
    const TrainConfig ce = detail::train_config(cfg, cfg.fnn_e, kSeedE);
    Mlp r0 = Mlp::glorot(detail::architecture(kRdtInputs, cfg.fnn_rdt), cr.seed);
    r0.output.transform = cfg.fnn_rdt.output_transform;
    Mlp e0 = Mlp::glorot(detail::architecture(kEnergyInputs, cfg.fnn_e), ce.seed);
    e0.output.transform = cfg.fnn_e.output_transform;
    const auto t0 = detail::Clock::now();
    auto fr = mlp_train(std::move(r0), rdt_dataset(rdt), cr);
    const double rdt_s = detail::seconds_since(t0);
    const auto t1 = detail::Clock::now();
    auto fe = mlp_train(std::move(e0), energy_dataset(energy), ce);
    const double e_s = detail::seconds_since(t1);
    mlp_save_file(fr.net, (dir / "fnn_rdt.json").string());
    mlp_save_file(fe.net, (dir / "fnn_e.json").string());
    RdePredictor p{fr.net, fe.net, {}, cell_params(cfg).limits, cfg.predictor.m, cfg.predictor.eps,
                   cfg.predictor.max_bisect, cfg.rde.z_min, cfg.z_max};
    detail::write_json(dir / "predictor.json", predictor_json(p));
    auto last = [](const std::vector<double>& v) { return v.empty() ? 0.0 : v.back(); };
    return detail::StageBody{{"fnn_rdt.json", "fnn_e.json", "predictor.json"},
                             {{"fnn_rdt_train_mse", last(fr.history.train_mse)},
                              {"fnn_rdt_validation_mse", last(fr.history.validation_mse)},
                              {"fnn_rdt_best_epoch", fr.history.best_epoch},
                              {"fnn_e_train_mse", last(fe.history.train_mse)},
                              {"fnn_e_validation_mse", last(fe.history.validation_mse)},
                              {"fnn_e_best_epoch", fe.history.best_epoch},
                              {"fnn_rdt_training_s", rdt_s},
                              {"fnn_e_training_s", e_s}}};
  });
}

/// Loads the hybrid bundle and both RDE networks after verifying their manifests.
inline RdePredictor load_predictor(const fs::path& root) {
  verify_stage(root, kHybridDir);
  verify_stage(root, kRdeModelDir);
  const fs::path dir = root / kRdeModelDir;
  const nlohmann::json j = detail::read_json(dir / "predictor.json");
  try {
    RdePredictor p{mlp_load_file((dir / j.at("fnn_rdt").get<std::string>()).string()),
                   mlp_load_file((dir / j.at("fnn_e").get<std::string>()).string()),
                   load_ndctnet(root / kHybridDir),
                   j.at("limits").get<OperatingLimits>(),
                   j.at("m").get<int>(),
                   j.at("eps").get<double>(),
                   j.at("max_bisect").get<int>(),
                   j.at("z_min").get<double>(),
                   j.at("z_max").get<double>()};
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("predictor.json: ") + e.what());
  }
}

// Results

/// Parent hybrid run of a validation/sweep profile, from full charge until a limit.
inline Trajectory parent_run(const RdePredictor& p, const CurrentProfile& profile, double Tamb) {
  return hybrid_simulate(p.model, profile, CellState::rested(1.0, Tamb), Tamb, p.limits);
}

inline std::size_t point_index(const Trajectory& parent, const ValidationPoint& pt, const std::string& where) {
  const std::size_t n = parent.size();
  if (pt.t_fraction) return std::min(n - 1, static_cast<std::size_t>(*pt.t_fraction * static_cast<double>(n)));
  const auto it = std::lower_bound(parent.times.begin(), parent.times.end(), *pt.t_s - 1e-9);
  if (it == parent.times.end()) {
    throw ConfigError(where + ": t_s = " + csv::format(*pt.t_s) + " is past the parent run end (" +
                      csv::format(parent.end_time()) + " s)");
  }
  return static_cast<std::size_t>(it - parent.times.begin());
}

struct ValidationRow {
  std::string point;
  std::string profile;
  double t_s, z;
  double rdt_true, rdt_pred, rdt_err;
  double rde_true, rde_pred, rde_err;
  double trad, trad_err;
  Limiting limiting_true, limiting_pred;
  double t_hybrid_at_rdt;  ///< h_T propagated to the predicted rdt, degC
  int bisect_iters;
  bool extrapolated;
};

struct ValidationSummary {
  std::size_t points = 0;
  double rde_within_3pct = 0;  ///< fraction of points
  double rde_median_err = 0;   ///< %
  double rdt_within_7pct = 0;
  std::size_t temperature_limited = 0;  ///< by the oracle
  double max_tmax_gap = 0;              ///< over predicted temperature-limited points, degC
  bool baseline_worse_on_tlimited = true;

  nlohmann::json json() const {
    return {{"points", points},
            {"rde_within_3pct", rde_within_3pct},
            {"rde_median_err_pct", rde_median_err},
            {"rdt_within_7pct", rdt_within_7pct},
            {"temperature_limited", temperature_limited},
            {"max_tmax_gap_c", max_tmax_gap},
            {"baseline_worse_on_temperature_limited", baseline_worse_on_tlimited}};
  }
};

inline ValidationSummary summarize(const std::vector<ValidationRow>& rows, double Tmax) {
  ValidationSummary s;
  s.points = rows.size();
  if (rows.empty()) return s;
  std::vector<double> errs;
  std::size_t rde_ok = 0, rdt_ok = 0;
  for (const auto& r : rows) {
    errs.push_back(r.rde_err);
    rde_ok += r.rde_err < 3;
    rdt_ok += r.rdt_err < 7;
    if (r.limiting_true == Limiting::Temperature) {
      ++s.temperature_limited;
      if (!(r.trad_err > r.rde_err)) s.baseline_worse_on_tlimited = false;
    }
    if (r.limiting_pred == Limiting::Temperature) {
      s.max_tmax_gap = std::max(s.max_tmax_gap, std::abs(r.t_hybrid_at_rdt - Tmax));
    }
  }
  std::sort(errs.begin(), errs.end());
  const std::size_t n = errs.size();
  s.rde_median_err = n % 2 ? errs[n / 2] : 0.5 * (errs[n / 2 - 1] + errs[n / 2]);
  s.rde_within_3pct = static_cast<double>(rde_ok) / static_cast<double>(n);
  s.rdt_within_7pct = static_cast<double>(rdt_ok) / static_cast<double>(n);
  return s;
}

inline std::vector<ValidationRow> validate_predictor(const RunConfig& cfg, const RdePredictor& p) {
  std::vector<ValidationRow> rows;
  const auto& e = p.model.electrical();
  for (const auto& vp : cfg.validation) {
    const Trajectory parent = parent_run(p, make_profile(cfg, vp.profile), cfg.tamb);
    for (std::size_t i = 0; i < vp.points.size(); ++i) {
      const auto& pt = vp.points[i];
      const std::string id = vp.name + "#" + std::to_string(i + 1);
      const std::size_t k = point_index(parent, pt, id);
      const CellState& s = parent.states[k];
      const RdeResult truth = oracle_rde(p.model, s, pt.z, cfg.tamb, p.limits);
      const RdeResult pred = predict_rde(p, s, pt.z, cfg.tamb);
      const double trad = traditional_rde(s, e, p.model.ocv(), e.capacity_ah());
      ValidationRow r;
      r.point = id;
      r.profile = vp.name;
      r.t_s = parent.times[k];
      r.z = pt.z;
      r.rdt_true = truth.rdt;
      r.rdt_pred = pred.rdt;
      r.rdt_err = relative_error(truth.rdt, pred.rdt);
      r.rde_true = truth.energy;
      r.rde_pred = pred.energy;
      r.rde_err = relative_error(truth.energy, pred.energy);
      r.trad = trad;
      r.trad_err = relative_error(truth.energy, trad);
      r.limiting_true = truth.limiting;
      r.limiting_pred = pred.limiting;
      r.t_hybrid_at_rdt = ht_phi(p.model, s, pt.z, cfg.tamb, pred.rdt);
      r.bisect_iters = pred.bisect_iters;
      r.extrapolated = pred.extrapolated;
      rows.push_back(r);
    }
  }
  return rows;
}

namespace detail {

inline std::vector<std::string> validation_header() {
  return {"point",    "profile",  "t_s",     "z",       "rdt_true_s", "rdt_pred_s",    "rdt_err_pct",
          "rde_true_wh", "rde_pred_wh", "rde_err_pct", "trad_wh", "trad_err_pct", "limiting_true",
          "limiting_pred", "t_hybrid_at_rdt_c", "bisect_iters", "extrapolated"};
}

inline std::vector<std::string> validation_cells(const ValidationRow& r) {
  using csv::format;
  return {r.point,          r.profile,          format(r.t_s),     format(r.z),
          format(r.rdt_true), format(r.rdt_pred), format(r.rdt_err), format(r.rde_true),
          format(r.rde_pred), format(r.rde_err), format(r.trad),     format(r.trad_err),
          to_string(r.limiting_true), to_string(r.limiting_pred), format(r.t_hybrid_at_rdt),
          std::to_string(r.bisect_iters), r.extrapolated ? "1" : "0"};
}

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string aligned(const std::vector<std::vector<std::string>>& table) {
  std::vector<std::size_t> width;
  for (const auto& row : table) {
    width.resize(std::max(width.size(), row.size()));
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : table) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      line += std::string(width[c] - row[c].size(), ' ') + row[c];
    }
    out += line + "\n";
  }
  return out;
}

}  // namespace detail

inline void write_validation(const std::vector<ValidationRow>& rows, const ValidationSummary& s, const fs::path& csv_path,
                             const fs::path& txt_path) {
  {
    csv::Writer w(csv_path.string(), detail::validation_header());
    for (const auto& r : rows) {
      const auto cells = detail::validation_cells(r);
      w.row(cells);
    }
  }
  using detail::fixed;
  std::vector<std::vector<std::string>> t = {{"point", "t [s]", "z", "RDT true", "RDT pred", "err %", "RDE true [Wh]",
                                              "RDE pred [Wh]", "err %", "trad [Wh]", "trad err %", "limit true",
                                              "limit pred"}};
  for (const auto& r : rows) {
    t.push_back({r.point, fixed(r.t_s, 0), fixed(r.z, 2), fixed(r.rdt_true, 1), fixed(r.rdt_pred, 1), fixed(r.rdt_err, 2),
                 fixed(r.rde_true, 4), fixed(r.rde_pred, 4), fixed(r.rde_err, 2), fixed(r.trad, 4), fixed(r.trad_err, 2),
                 to_string(r.limiting_true), to_string(r.limiting_pred)});
  }
  std::string text = detail::aligned(t);
  text += "\npoints " + std::to_string(s.points) + ", RDE error < 3%: " + fixed(100 * s.rde_within_3pct, 1) +
          "%, median RDE error " + fixed(s.rde_median_err, 2) + "%, RDT error < 7%: " + fixed(100 * s.rdt_within_7pct, 1) +
          "%, temperature-limited " + std::to_string(s.temperature_limited) + "\n";
  detail::write_text(txt_path, text);
}

struct CommandReport {
  nlohmann::json summary;
  std::vector<std::string> files;  ///< relative to results/
};

namespace detail {

inline void write_result_manifest(const fs::path& root, const std::string& command, const RunConfig& cfg,
                                  const std::map<std::string, std::string>& inputs, const std::vector<std::string>& files,
                                  const nlohmann::json& summary, double wall_s) {
  const fs::path dir = root / kResultsDir;
  nlohmann::json outputs = nlohmann::json::object();
  for (const auto& f : files) outputs[f] = sha256_file((dir / f).string());
  const nlohmann::json config = to_json(cfg);
  write_json(dir / (command + ".manifest.json"), {{"stage", command},
                                                   {"config_sha256", sha256(config.dump())},
                                                   {"seed", cfg.seed},
                                                   {"inputs", inputs},
                                                   {"outputs", outputs},
                                                   {"metrics", summary},
                                                   {"config", config},
                                                   {"wall_clock_s", wall_s}});
}

inline std::map<std::string, std::string> model_inputs(const fs::path& root) {
  auto in = verify_stage(root, kHybridDir);
  in.merge(verify_stage(root, kRdeModelDir));
  return in;
}

}  // namespace detail

inline CommandReport cmd_validate(const RunConfig& cfg) {
  validate(cfg);
  const fs::path root = output_root(cfg);
  const auto inputs = detail::model_inputs(root);
  const auto t0 = detail::Clock::now();
  const RdePredictor p = load_predictor(root);
  const auto rows = validate_predictor(cfg, p);
  const ValidationSummary s = summarize(rows, p.limits.Tmax);
  fs::create_directories(root / kResultsDir);
  write_validation(rows, s, root / kResultsDir / "validation.csv", root / kResultsDir / "validation.txt");
  CommandReport r{s.json(), {"validation.csv", "validation.txt"}};
  detail::write_result_manifest(root, "validate", cfg, inputs, r.files, r.summary, detail::seconds_since(t0));
  return r;
}

struct SweepRow {
  double t_s, z;
  RdeResult result;
};

/// Predictions over every (stride point of the parent run, C-rate) pair.
inline std::vector<SweepRow> sweep_surface(const RdePredictor& p, const Trajectory& parent, double t_stride,
                                           const std::vector<double>& z_grid, double Tamb, unsigned threads) {
  if (!(t_stride > 0)) throw ArgumentError("sweep: stride must be positive");
  std::vector<std::size_t> idx;
  double next = 0;
  for (std::size_t k = 0; k < parent.size(); ++k) {
    if (parent.times[k] + 1e-9 >= next) {
      idx.push_back(k);
      next += t_stride;
      while (next <= parent.times[k] + 1e-9) next += t_stride;
    }
  }
  std::vector<SweepRow> rows(idx.size() * z_grid.size());
  parallel_for(idx.size(), threads, [&](std::size_t i) {
    const CellState& s = parent.states[idx[i]];
    for (std::size_t j = 0; j < z_grid.size(); ++j) {
      rows[i * z_grid.size() + j] = {parent.times[idx[i]], z_grid[j], predict_rde(p, s, z_grid[j], Tamb)};
    }
  });
  return rows;
}

inline void write_sweep(const std::vector<SweepRow>& rows, const fs::path& path) {
  csv::Writer w(path.string(), {"t_s", "z", "rdt_s", "energy_wh", "limiting", "rdt_vmin_s", "rdt_tmax_s", "bisect_iters"});
  for (const auto& r : rows) {
    using csv::format;
    const std::vector<std::string> cells = {format(r.t_s),
                                            format(r.z),
                                            format(r.result.rdt),
                                            format(r.result.energy),
                                            to_string(r.result.limiting),
                                            format(r.result.rdt_vmin),
                                            r.result.rdt_tmax ? format(*r.result.rdt_tmax) : "nan",
                                            std::to_string(r.result.bisect_iters)};
    w.row(cells);
  }
}

/// Fraction of (t, z_k, z_k+1) neighbours whose energy rises by more than `tol`
/// (relative) with increasing C-rate. Rows must be grouped by t, z ascending.
inline double monotonicity_violations(const std::vector<SweepRow>& rows, std::size_t z_count, double tol) {
  std::size_t pairs = 0, bad = 0;
  for (std::size_t b = 0; b + z_count <= rows.size(); b += z_count) {
    for (std::size_t j = 1; j < z_count; ++j) {
      const double prev = rows[b + j - 1].result.energy;
      const double cur = rows[b + j].result.energy;
      ++pairs;
      bad += cur > prev * (1 + tol) + 1e-12;
    }
  }
  return pairs ? static_cast<double>(bad) / static_cast<double>(pairs) : 0.0;
}

inline std::string default_sweep_profile(const RunConfig& cfg) {
  if (!cfg.sweep.profile.empty()) return cfg.sweep.profile;
  if (!cfg.validation.empty()) return cfg.validation.front().profile;
  return cfg.rde.parent_profiles.front();
}

inline CommandReport cmd_sweep(const RunConfig& cfg, std::string profile = "", std::vector<double> z_grid = {},
                               double t_stride = 0, std::string file = "sweep.csv") {
  validate(cfg);
  if (profile.empty()) profile = default_sweep_profile(cfg);
  if (z_grid.empty()) z_grid = log_grid(cfg.rde.z_min, cfg.z_max, cfg.sweep.z_points);
  if (t_stride <= 0) t_stride = cfg.sweep.t_stride_s;
  std::sort(z_grid.begin(), z_grid.end());
  const fs::path root = output_root(cfg);
  const auto inputs = detail::model_inputs(root);
  const auto t0 = detail::Clock::now();
  const RdePredictor p = load_predictor(root);
  const Trajectory parent = parent_run(p, make_profile(cfg, profile), cfg.tamb);
  const auto rows = sweep_surface(p, parent, t_stride, z_grid, cfg.tamb, detail::threads(cfg));
  fs::create_directories(root / kResultsDir);
  write_sweep(rows, root / kResultsDir / file);
  std::size_t tlim = 0;
  for (const auto& r : rows) tlim += r.result.limiting == Limiting::Temperature;
  CommandReport r{{{"profile", profile},
                   {"rows", rows.size()},
                   {"strides", rows.size() / z_grid.size()},
                   {"z_points", z_grid.size()},
                   {"temperature_limited", tlim},
                   {"monotonicity_violations_1pct", monotonicity_violations(rows, z_grid.size(), 0.01)}},
                  {file}};
  detail::write_result_manifest(root, "sweep", cfg, inputs, r.files, r.summary, detail::seconds_since(t0));
  return r;
}

struct BenchmarkRow {
  double t_s;
  double predictor_ms;   ///< full-z-grid query, mean over repeats
  double oracle_ms;      ///< full-z-grid forward simulation
  double oracle_half_ms; ///< every other C-rate of the grid
};

struct BenchmarkSummary {
  std::vector<BenchmarkRow> rows;
  double predictor_ms = 0, oracle_ms = 0, oracle_half_ms = 0;
  double speedup = 0;

  nlohmann::json json(const std::vector<double>& z_grid) const {
    return {{"states", rows.size()},
            {"z_grid", z_grid},
            {"predictor_mean_ms", predictor_ms},
            {"oracle_mean_ms", oracle_ms},
            {"oracle_half_grid_mean_ms", oracle_half_ms},
            {"speedup", speedup},
            {"oracle_monotone_in_grid_size", oracle_half_ms <= oracle_ms}};
  }
};

/// States evenly spread over the validation parent runs.
inline std::vector<std::pair<double, CellState>> benchmark_states(const RunConfig& cfg, const RdePredictor& p) {
  std::vector<std::pair<double, CellState>> all;
  for (const auto& vp : cfg.validation) {
    if (vp.profile == "evtol") continue;
    const Trajectory parent = parent_run(p, make_profile(cfg, vp.profile), cfg.tamb);
    for (std::size_t k = 0; k < parent.size(); ++k) all.emplace_back(parent.times[k], parent.states[k]);
  }
  if (all.empty()) {
    const Trajectory parent = parent_run(p, make_profile(cfg, cfg.rde.parent_profiles.front()), cfg.tamb);
    for (std::size_t k = 0; k < parent.size(); ++k) all.emplace_back(parent.times[k], parent.states[k]);
  }
  std::vector<std::pair<double, CellState>> out;
  const std::size_t n = static_cast<std::size_t>(cfg.benchmark.states);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(all[std::min(all.size() - 1, (2 * i + 1) * all.size() / (2 * n))]);
  }
  return out;
}

inline BenchmarkSummary run_benchmark(const RdePredictor& p, const std::vector<std::pair<double, CellState>>& states,
                                      const std::vector<double>& z_grid, double Tamb, int repeats) {
  std::vector<double> half;
  for (std::size_t j = 0; j < z_grid.size(); j += 2) half.push_back(z_grid[j]);
  BenchmarkSummary b;
  volatile double sink = 0;
  auto oracle_ms = [&](const CellState& s, const std::vector<double>& zs) {
    const auto t0 = detail::Clock::now();
    for (double z : zs) sink = sink + oracle_rde(p.model, s, z, Tamb, p.limits).energy;
    return 1e3 * detail::seconds_since(t0);
  };
  for (const auto& [t, s] : states) {
    BenchmarkRow r{t, 0, 0, 0};
    const auto t0 = detail::Clock::now();
    for (int k = 0; k < repeats; ++k) {
      for (double z : z_grid) sink = sink + predict_rde(p, s, z, Tamb).energy;
    }
    r.predictor_ms = 1e3 * detail::seconds_since(t0) / repeats;
    r.oracle_ms = oracle_ms(s, z_grid);
    r.oracle_half_ms = oracle_ms(s, half);
    b.predictor_ms += r.predictor_ms;
    b.oracle_ms += r.oracle_ms;
    b.oracle_half_ms += r.oracle_half_ms;
    b.rows.push_back(r);
  }
  const double n = static_cast<double>(b.rows.size());
  b.predictor_ms /= n;
  b.oracle_ms /= n;
  b.oracle_half_ms /= n;
  b.speedup = b.oracle_ms / b.predictor_ms;
  return b;
}

inline CommandReport cmd_benchmark(const RunConfig& cfg, std::vector<double> z_grid = {}) {
  validate(cfg);
  if (z_grid.empty()) z_grid = cfg.benchmark.z_grid;
  const fs::path root = output_root(cfg);
  const auto inputs = detail::model_inputs(root);
  const auto t0 = detail::Clock::now();
  const RdePredictor p = load_predictor(root);
  const BenchmarkSummary b = run_benchmark(p, benchmark_states(cfg, p), z_grid, cfg.tamb, cfg.benchmark.repeats);
  fs::create_directories(root / kResultsDir);
  {
    csv::Writer w((root / kResultsDir / "benchmark.csv").string(), {"state", "t_s", "predictor_ms", "oracle_ms", "oracle_half_ms"});
    for (std::size_t i = 0; i < b.rows.size(); ++i) {
      const auto& r = b.rows[i];
      const double row[] = {static_cast<double>(i), r.t_s, r.predictor_ms, r.oracle_ms, r.oracle_half_ms};
      w.row(row);
    }
  }
  const nlohmann::json summary = b.json(z_grid);
  detail::write_json(root / kResultsDir / "benchmark.json", summary);
  CommandReport r{summary, {"benchmark.csv", "benchmark.json"}};
  detail::write_result_manifest(root, "benchmark", cfg, inputs, r.files, r.summary, detail::seconds_since(t0));
  return r;
}

struct PredictRow {
  double t_s, z;
  RdeResult result;
};

/// Predictor queries at time t of a profile's parent run, one per C-rate.
inline std::vector<PredictRow> cmd_predict(const RunConfig& cfg, const std::string& profile, double t_s,
                                           const std::vector<double>& z) {
  validate(cfg);
  const RdePredictor p = load_predictor(output_root(cfg));
  const Trajectory parent = parent_run(p, make_profile(cfg, profile), cfg.tamb);
  ValidationPoint pt;
  pt.t_s = t_s;
  const std::size_t k = point_index(parent, pt, "predict");
  std::vector<PredictRow> rows;
  for (double zz : z) {
    if (!(zz > 0)) throw ConfigError("predict: C-rates must be positive");
    rows.push_back({parent.times[k], zz, predict_rde(p, parent.states[k], zz, cfg.tamb)});
  }
  return rows;
}

/// Runs every stage in order, then validate, sweep and benchmark.
inline std::vector<StageOutcome> run_all(const RunConfig& cfg, bool with_benchmark = true) {
  std::vector<StageOutcome> out;
  out.push_back(stage_gen_truth(cfg));
  out.push_back(stage_train_hybrid(cfg));
  out.push_back(stage_gen_rde_data(cfg));
  out.push_back(stage_train_rde(cfg));
  auto result = [&](const std::string& name, auto&& fn) {
    const auto t0 = detail::Clock::now();
    StageOutcome o{name, false, fn().summary, 0};
    o.wall_s = detail::seconds_since(t0);
    out.push_back(o);
  };
  result("validate", [&] { return cmd_validate(cfg); });
  result("sweep", [&] { return cmd_sweep(cfg); });
  if (with_benchmark) result("benchmark", [&] { return cmd_benchmark(cfg); });
  return out;
}

}  // namespace rde
