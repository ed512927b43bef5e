#pragma once

// Run configuration for the end-to-end pipeline, read from JSON with the
// struct field names as keys. Missing keys keep the per-class defaults;
// unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "rde/cell.hpp"
#include "rde/datagen.hpp"
#include "rde/error.hpp"
#include "rde/hash.hpp"
#include "rde/hybrid.hpp"
#include "rde/neural.hpp"
#include "rde/profile.hpp"

namespace rde {

/// splitmix64 finalizer over (seed, tag): independent streams per network.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct NetworkConfig {
  TrainConfig train;
  std::vector<int> hidden = {48, 48};
  OutputTransform output_transform = OutputTransform::identity;
};

struct HybridPlan {
  std::vector<std::string> train_profiles;
  std::vector<std::string> heldout_profiles;
  double step_s = kVirtualCellStep;
};

struct RdePlan {
  std::vector<std::string> parent_profiles;
  double t_stride_s = 10;
  double z_min = 0.2;
  int z_points = 20;
  int energy_points = 24;
  double resolution_s = 0.1;

  std::vector<double> z_grid(double z_max) const { return log_grid(z_min, z_max, z_points); }
};

struct ValidationPoint {
  std::optional<double> t_s;
  std::optional<double> t_fraction;  ///< of the parent run length
  double z = 1;
};

struct ValidationProfile {
  std::string name;
  std::string profile;
  std::vector<ValidationPoint> points;
};

struct PredictorConfig {
  int m = 20;
  double eps = 0.01;
  int max_bisect = 60;
};

struct SweepConfig {
  std::string profile;  ///< empty: the first validation profile
  double t_stride_s = 60;
  int z_points = 20;
};

struct BenchmarkConfig {
  int states = 20;
  int repeats = 5;
  std::vector<double> z_grid;
};

struct ResidualConfig {
  double alpha_r = 0.01;
  double beta_r = 0.3;
  double gamma_q = 0.2;
};

struct RunConfig {
  CellClass cell_class = CellClass::nca_like;
  std::string cell_params;  ///< optional CellParams JSON path
  std::uint64_t seed = 1;
  double tamb = 25;
  std::optional<double> vmin;
  std::optional<double> tmax;
  double z_max = 8;
  ResidualConfig virtual_cell;
  HybridPlan hybrid;
  RdePlan rde;
  NetworkConfig h_v, h_t, fnn_rdt, fnn_e;
  PredictorConfig predictor;
  std::vector<ValidationProfile> validation;
  SweepConfig sweep;
  BenchmarkConfig benchmark;
  std::string output_dir = "run";
  int threads = 1;
  std::filesystem::path base_dir = ".";  ///< relative paths resolve against this

  static RunConfig defaults(CellClass c);
};

namespace detail {

inline std::vector<ValidationPoint> fraction_points(const std::vector<double>& z) {
  std::vector<ValidationPoint> out;
  for (std::size_t k = 0; k < z.size(); ++k) {
    ValidationPoint p;
    p.t_fraction = 0.1 * static_cast<double>(k + 1);
    p.z = z[k];
    out.push_back(p);
  }
  return out;
}

inline std::vector<ValidationPoint> time_points(const std::vector<std::pair<double, double>>& tz) {
  std::vector<ValidationPoint> out;
  for (auto [t, z] : tz) {
    ValidationPoint p;
    p.t_s = t;
    p.z = z;
    out.push_back(p);
  }
  return out;
}

}  // namespace detail

inline RunConfig RunConfig::defaults(CellClass c) {
  const bool nca = c == CellClass::nca_like;
  RunConfig r;
  r.cell_class = c;
  r.z_max = default_z_max(c);
  r.output_dir = nca ? "runs/nca-like" : "runs/lfp-like";

  const std::vector<double> levels = nca ? std::vector<double>{0.5, 1, 3, 5, 8} : std::vector<double>{0.5, 1, 5, 10, 15};
  for (double z : levels) {
    r.hybrid.train_profiles.push_back("constant:" + csv::format(z) + ":" +
                                      csv::format(std::ceil(3600 * 1.3 / z)));
  }
  for (int s = 1; s <= 4; ++s) r.hybrid.train_profiles.push_back("drive:" + std::to_string(s) + ":6000");
  r.hybrid.heldout_profiles = {"drive:101:6000", "drive:102:6000"};

  for (int s = 11; s <= 18; ++s) r.rde.parent_profiles.push_back("drive:" + std::to_string(s) + ":8000");
  r.rde.t_stride_s = nca ? 10 : 5;
  r.rde.energy_points = nca ? 16 : 12;

  for (NetworkConfig* n : {&r.h_v, &r.h_t}) {
    n->train.epochs = 150;
    n->train.lr_decay = 0.98;
    n->train.patience = 0;
  }
  r.fnn_rdt.train.epochs = 1500;
  r.fnn_rdt.train.batch_size = 128;
  r.fnn_rdt.train.lr_decay = 0.998;
  r.fnn_rdt.train.patience = 0;
  r.fnn_rdt.output_transform = OutputTransform::log;
  r.fnn_e.train.epochs = nca ? 100 : 200;
  r.fnn_e.train.lr_decay = nca ? 0.98 : 0.985;
  r.fnn_e.train.patience = 0;
  r.fnn_e.output_transform = OutputTransform::log;

  if (nca) {
    r.validation = {{"us06-like", "drive:101:6000", detail::fraction_points({8, 7, 6, 5, 3, 2, 1, 0.5})},
                    {"sc04-like", "drive:102:6000", detail::fraction_points({7.5, 8, 4, 6, 2.5, 1.5, 0.5, 1})},
                    {"evtol", "evtol", detail::time_points({{50, 8}, {300, 6}, {700, 3}, {900, 1}})}};
    r.benchmark.z_grid = {0.2, 0.5, 1, 2, 3, 4, 5, 6, 7, 8};
  } else {
    r.validation = {{"us06-like", "drive:101:6000", detail::fraction_points({15, 12, 10, 8, 5, 3, 1, 0.5})},
                    {"sc04-like", "drive:102:6000", detail::fraction_points({14, 15, 6, 10, 4, 2, 0.5, 1})},
                    {"evtol", "evtol", detail::time_points({{50, 15}, {300, 10}, {700, 5}, {900, 1}})}};
    r.benchmark.z_grid = {0.2, 0.5, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  }
  return r;
}

inline const char* to_string(OutputTransform t) { return t == OutputTransform::log ? "log" : "identity"; }

// JSON

namespace detail {

class Fields {
 public:
  Fields(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <class T>
  bool get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return false;
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!it->is_number_integer() || (std::is_unsigned_v<T> && it->template get<long long>() < 0)) {
        throw ConfigError(where_ + "." + key + ": expected an integer");
      }
    }
    if constexpr (std::is_same_v<T, std::vector<int>>) {
      for (const auto& e : *it) {
        if (!e.is_number_integer()) throw ConfigError(where_ + "." + key + ": expected integers");
      }
    }
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
    return true;
  }

  template <class T>
  void get(const char* key, std::optional<T>& out) {
    T v{};
    if (get(key, v)) out = v;
  }

  const nlohmann::json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const { return where_ + "." + key; }

  void done() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(where_ + ": unknown key '" + item.key() + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline OutputTransform parse_transform(const std::string& s, const std::string& where) {
  if (s == "identity") return OutputTransform::identity;
  if (s == "log") return OutputTransform::log;
  throw ConfigError(where + ": output_transform must be 'identity' or 'log'");
}

inline void read_network(const nlohmann::json& j, NetworkConfig& n, const std::string& where) {
  Fields f(j, where);
  auto& t = n.train;
  f.get("learning_rate", t.learning_rate);
  f.get("batch_size", t.batch_size);
  f.get("epochs", t.epochs);
  f.get("adam_beta1", t.adam_beta1);
  f.get("adam_beta2", t.adam_beta2);
  f.get("adam_eps", t.adam_eps);
  f.get("validation_fraction", t.validation_fraction);
  f.get("patience", t.patience);
  f.get("lr_decay", t.lr_decay);
  f.get("hidden", n.hidden);
  std::string transform;
  if (f.get("output_transform", transform)) n.output_transform = parse_transform(transform, where);
  f.done();
  t.validate();
  if (n.hidden.empty()) throw ConfigError(where + ": hidden must list at least one layer width");
  for (int h : n.hidden) {
    if (h < 1) throw ConfigError(where + ": hidden layer widths must be >= 1");
  }
}

inline nlohmann::json write_network(const NetworkConfig& n) {
  const auto& t = n.train;
  return {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size},
          {"epochs", t.epochs},               {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},       {"adam_eps", t.adam_eps},
          {"validation_fraction", t.validation_fraction},
          {"patience", t.patience},           {"lr_decay", t.lr_decay},
          {"hidden", n.hidden},               {"output_transform", to_string(n.output_transform)}};
}

inline void read_point(const nlohmann::json& j, ValidationPoint& p, const std::string& where) {
  Fields f(j, where);
  f.get("t_s", p.t_s);
  f.get("t_fraction", p.t_fraction);
  if (!f.get("z", p.z)) throw ConfigError(where + ": missing z");
  f.done();
  if (p.t_s.has_value() == p.t_fraction.has_value()) throw ConfigError(where + ": give exactly one of t_s, t_fraction");
  if (p.t_s && !(*p.t_s >= 0)) throw ConfigError(where + ": t_s must be >= 0");
  if (p.t_fraction && !(*p.t_fraction >= 0 && *p.t_fraction < 1)) throw ConfigError(where + ": t_fraction must be in [0, 1)");
  if (!(p.z > 0)) throw ConfigError(where + ": z must be positive");
}

}  // namespace detail

/// Strings: "constant:<z>:<duration_s>", "drive:<seed>[:<duration_s>]", "evtol",
/// or a path to a duration_s,c_rate CSV.
inline bool is_profile_file(const std::string& spec) {
  return !(spec.rfind("constant:", 0) == 0 || spec.rfind("drive:", 0) == 0 || spec == "evtol");
}

inline std::filesystem::path resolve_path(const RunConfig& cfg, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : cfg.base_dir / path;
}

inline CurrentProfile make_profile(const RunConfig& cfg, const std::string& spec) {
  auto parts = [&] {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const std::size_t colon = spec.find(':', start);
      out.push_back(spec.substr(start, colon - start));
      if (colon == std::string::npos) break;
      start = colon + 1;
    }
    return out;
  }();
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw ConfigError("profile '" + spec + "': '" + s + "' is not a number");
    return v;
  };
  CurrentProfile p;
  if (parts[0] == "constant") {
    if (parts.size() != 3) throw ConfigError("profile '" + spec + "': expected constant:<z>:<duration_s>");
    p = constant_profile(number(parts[1]), number(parts[2]));
  } else if (parts[0] == "drive") {
    if (parts.size() != 2 && parts.size() != 3) throw ConfigError("profile '" + spec + "': expected drive:<seed>[:<duration_s>]");
    const double seed = number(parts[1]);
    if (seed < 0 || seed != std::floor(seed)) throw ConfigError("profile '" + spec + "': seed must be a non-negative integer");
    p = synth_drive_cycle(static_cast<std::uint64_t>(seed), parts.size() == 3 ? number(parts[2]) : 6000.0, cfg.z_max);
  } else if (spec == "evtol") {
    p = evtol_profile();
  } else {
    const auto path = resolve_path(cfg, spec);
    if (!std::filesystem::exists(path)) throw ConfigError("profile file '" + path.string() + "' does not exist");
    try {
      p = load_profile_csv(path.string());
    } catch (const ParseError& e) {
      throw ConfigError(std::string("profile file: ") + e.what());
    }
  }
  try {
    p.validate(cfg.z_max);
  } catch (const ArgumentError& e) {
    throw ConfigError("profile '" + spec + "': " + e.what());
  }
  return p;
}

/// Effective cell parameters: class defaults or the referenced file, then the
/// limit overrides and ambient temperature.
inline CellParams cell_params(const RunConfig& cfg) {
  CellParams p = default_cell_params(cfg.cell_class);
  if (!cfg.cell_params.empty()) {
    const auto path = resolve_path(cfg, cfg.cell_params);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cell_params file '" + path.string() + "' does not exist");
    try {
      nlohmann::json j;
      in >> j;
      p = j.get<CellParams>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("cell_params file '" + path.string() + "': " + e.what());
    } catch (const Error& e) {
      throw ConfigError("cell_params file '" + path.string() + "': " + e.what());
    }
  }
  if (cfg.vmin) p.limits.Vmin = *cfg.vmin;
  if (cfg.tmax) p.limits.Tmax = *cfg.tmax;
  p.limits.Tamb = cfg.tamb;
  return p;
}

inline VirtualCell virtual_cell(const RunConfig& cfg) {
  VirtualCell v;
  v.base = cell_params(cfg);
  v.alpha_r = cfg.virtual_cell.alpha_r;
  v.beta_r = cfg.virtual_cell.beta_r;
  v.gamma_q = cfg.virtual_cell.gamma_q;
  v.z_ref = cfg.z_max;
  return v;
}

inline void validate(const RunConfig& cfg) {
  const CellParams p = cell_params(cfg);
  // Overridden limits must stay inside the class's OCV window and above ambient.
  try {
    p.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("limits: ") + e.what());
  }
  if (!(p.limits.Tmax > cfg.tamb)) throw ConfigError("limits: Tmax must exceed tamb");
  if (!(cfg.z_max > 0)) throw ConfigError("z_max must be positive");
  if (cfg.hybrid.train_profiles.empty()) throw ConfigError("dataset_plan.hybrid.train_profiles is empty");
  if (cfg.rde.parent_profiles.empty()) throw ConfigError("dataset_plan.rde.parent_profiles is empty");
  if (!(cfg.hybrid.step_s > 0)) throw ConfigError("dataset_plan.hybrid.step_s must be positive");
  if (!(cfg.rde.t_stride_s > 0 && cfg.rde.resolution_s > 0)) throw ConfigError("dataset_plan.rde: stride and resolution must be positive");
  if (!(cfg.rde.z_min > 0 && cfg.rde.z_min < cfg.z_max) || cfg.rde.z_points < 2) {
    throw ConfigError("dataset_plan.rde: need 0 < z_min < z_max and z_points >= 2");
  }
  if (cfg.rde.energy_points < 2) throw ConfigError("dataset_plan.rde.energy_points must be >= 2");
  if (cfg.predictor.m < 2 || !(cfg.predictor.eps > 0) || cfg.predictor.max_bisect < 1) {
    throw ConfigError("predictor: need m >= 2, eps > 0, max_bisect >= 1");
  }
  if (cfg.benchmark.states < 1 || cfg.benchmark.repeats < 1 || cfg.benchmark.z_grid.size() < 2) {
    throw ConfigError("benchmark: need states >= 1, repeats >= 1 and at least two C-rates");
  }
  if (!(cfg.sweep.t_stride_s > 0) || cfg.sweep.z_points < 2) throw ConfigError("sweep: need t_stride_s > 0 and z_points >= 2");
  if (cfg.threads < 0) throw ConfigError("threads must be >= 0");
  for (const auto* list : {&cfg.hybrid.train_profiles, &cfg.hybrid.heldout_profiles, &cfg.rde.parent_profiles}) {
    for (const auto& s : *list) make_profile(cfg, s);
  }
  for (const auto& v : cfg.validation) make_profile(cfg, v.profile);
  if (!cfg.sweep.profile.empty()) make_profile(cfg, cfg.sweep.profile);
}

inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".") {
  detail::Fields top(j, "config");
  std::string cls = "nca-like";
  top.get("cell_class", cls);
  RunConfig r = RunConfig::defaults(parse_cell_class(cls));
  r.base_dir = base_dir;
  top.get("cell_params", r.cell_params);
  top.get("seed", r.seed);
  top.get("tamb", r.tamb);
  top.get("z_max", r.z_max);
  top.get("output_dir", r.output_dir);
  top.get("threads", r.threads);
  if (const auto* l = top.sub("limits")) {
    detail::Fields f(*l, "config.limits");
    f.get("Vmin", r.vmin);
    f.get("Tmax", r.tmax);
    f.done();
  }
  if (const auto* v = top.sub("virtual_cell")) {
    detail::Fields f(*v, "config.virtual_cell");
    f.get("alpha_r", r.virtual_cell.alpha_r);
    f.get("beta_r", r.virtual_cell.beta_r);
    f.get("gamma_q", r.virtual_cell.gamma_q);
    f.done();
  }
  if (const auto* d = top.sub("dataset_plan")) {
    detail::Fields f(*d, "config.dataset_plan");
    if (const auto* h = f.sub("hybrid")) {
      detail::Fields g(*h, "config.dataset_plan.hybrid");
      g.get("train_profiles", r.hybrid.train_profiles);
      g.get("heldout_profiles", r.hybrid.heldout_profiles);
      g.get("step_s", r.hybrid.step_s);
      g.done();
    }
    if (const auto* e = f.sub("rde")) {
      detail::Fields g(*e, "config.dataset_plan.rde");
      g.get("parent_profiles", r.rde.parent_profiles);
      g.get("t_stride_s", r.rde.t_stride_s);
      g.get("z_min", r.rde.z_min);
      g.get("z_points", r.rde.z_points);
      g.get("energy_points", r.rde.energy_points);
      g.get("resolution_s", r.rde.resolution_s);
      g.done();
    }
    f.done();
  }
  if (const auto* t = top.sub("training")) {
    detail::Fields f(*t, "config.training");
    for (auto [key, net] : {std::pair{"h_v", &r.h_v}, {"h_t", &r.h_t}, {"fnn_rdt", &r.fnn_rdt}, {"fnn_e", &r.fnn_e}}) {
      if (const auto* n = f.sub(key)) detail::read_network(*n, *net, std::string("config.training.") + key);
    }
    f.done();
  }
  if (const auto* p = top.sub("predictor")) {
    detail::Fields f(*p, "config.predictor");
    f.get("m", r.predictor.m);
    f.get("eps", r.predictor.eps);
    f.get("max_bisect", r.predictor.max_bisect);
    f.done();
  }
  if (const auto* v = top.sub("validation")) {
    if (!v->is_array()) throw ConfigError("config.validation: expected an array");
    r.validation.clear();
    for (std::size_t k = 0; k < v->size(); ++k) {
      const std::string w = "config.validation[" + std::to_string(k) + "]";
      detail::Fields f((*v)[k], w);
      ValidationProfile vp;
      if (!f.get("name", vp.name) || !f.get("profile", vp.profile)) throw ConfigError(w + ": need name and profile");
      const auto* pts = f.sub("points");
      if (!pts || !pts->is_array()) throw ConfigError(w + ": points must be an array");
      for (std::size_t i = 0; i < pts->size(); ++i) {
        ValidationPoint pt;
        detail::read_point((*pts)[i], pt, w + ".points[" + std::to_string(i) + "]");
        vp.points.push_back(pt);
      }
      f.done();
      r.validation.push_back(std::move(vp));
    }
  }
  if (const auto* s = top.sub("sweep")) {
    detail::Fields f(*s, "config.sweep");
    f.get("profile", r.sweep.profile);
    f.get("t_stride_s", r.sweep.t_stride_s);
    f.get("z_points", r.sweep.z_points);
    f.done();
  }
  if (const auto* b = top.sub("benchmark")) {
    detail::Fields f(*b, "config.benchmark");
    f.get("states", r.benchmark.states);
    f.get("repeats", r.benchmark.repeats);
    f.get("z_grid", r.benchmark.z_grid);
    f.done();
  }
  top.done();
  return r;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  return parse_run_config(j, std::filesystem::path(path).parent_path());
}

inline nlohmann::json to_json(const RunConfig& r) {
  nlohmann::json j;
  j["cell_class"] = to_string(r.cell_class);
  if (!r.cell_params.empty()) j["cell_params"] = r.cell_params;
  j["seed"] = r.seed;
  j["tamb"] = r.tamb;
  j["z_max"] = r.z_max;
  nlohmann::json limits = nlohmann::json::object();
  if (r.vmin) limits["Vmin"] = *r.vmin;
  if (r.tmax) limits["Tmax"] = *r.tmax;
  j["limits"] = limits;
  j["virtual_cell"] = {{"alpha_r", r.virtual_cell.alpha_r}, {"beta_r", r.virtual_cell.beta_r}, {"gamma_q", r.virtual_cell.gamma_q}};
  j["dataset_plan"] = {
      {"hybrid", {{"train_profiles", r.hybrid.train_profiles}, {"heldout_profiles", r.hybrid.heldout_profiles}, {"step_s", r.hybrid.step_s}}},
      {"rde",
       {{"parent_profiles", r.rde.parent_profiles},
        {"t_stride_s", r.rde.t_stride_s},
        {"z_min", r.rde.z_min},
        {"z_points", r.rde.z_points},
        {"energy_points", r.rde.energy_points},
        {"resolution_s", r.rde.resolution_s}}}};
  j["training"] = {{"h_v", detail::write_network(r.h_v)},
                   {"h_t", detail::write_network(r.h_t)},
                   {"fnn_rdt", detail::write_network(r.fnn_rdt)},
                   {"fnn_e", detail::write_network(r.fnn_e)}};
  j["predictor"] = {{"m", r.predictor.m}, {"eps", r.predictor.eps}, {"max_bisect", r.predictor.max_bisect}};
  nlohmann::json val = nlohmann::json::array();
  for (const auto& v : r.validation) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : v.points) {
      nlohmann::json pj = {{"z", p.z}};
      if (p.t_s) pj["t_s"] = *p.t_s;
      if (p.t_fraction) pj["t_fraction"] = *p.t_fraction;
      pts.push_back(pj);
    }
    val.push_back({{"name", v.name}, {"profile", v.profile}, {"points", pts}});
  }
  j["validation"] = val;
  j["sweep"] = {{"profile", r.sweep.profile}, {"t_stride_s", r.sweep.t_stride_s}, {"z_points", r.sweep.z_points}};
  j["benchmark"] = {{"states", r.benchmark.states}, {"repeats", r.benchmark.repeats}, {"z_grid", r.benchmark.z_grid}};
  j["output_dir"] = r.output_dir;
  j["threads"] = r.threads;
  return j;
}

}  // namespace rde
