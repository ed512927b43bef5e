// rde: end-to-end remaining-discharge-energy pipeline.
//
//   rde --config configs/nca-like.json all
//   rde --config configs/nca-like.json predict --profile drive:101:6000 --t 1200 --z 1 --z 4 --z 8
//
// Exit codes: 0 success, 2 config error, 3 stage-input error, 4 numerical or
// training failure.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rde/pipeline.hpp"

namespace {

void print_outcome(const rde::StageOutcome& o) {
  std::printf("%-13s %s  %.1f s  %s\n", o.stage.c_str(), o.skipped ? "up to date" : "done      ", o.wall_s,
              o.metrics.dump().c_str());
}

void print_report(const std::string& name, const rde::CommandReport& r) {
  std::printf("%-13s done  %s\n", name.c_str(), r.summary.dump().c_str());
}

void write_predictions(const std::vector<rde::PredictRow>& rows, const std::string& path) {
  const std::vector<std::string> header = {"t_s", "z", "rdt_s", "energy_wh", "limiting", "rdt_vmin_s", "rdt_tmax_s",
                                           "bisect_iters", "extrapolated"};
  std::string out = rde::csv::join(header) + "\n";
  for (const auto& r : rows) {
    using rde::csv::format;
    const std::vector<std::string> cells = {format(r.t_s),
                                            format(r.z),
                                            format(r.result.rdt),
                                            format(r.result.energy),
                                            rde::to_string(r.result.limiting),
                                            format(r.result.rdt_vmin),
                                            r.result.rdt_tmax ? format(*r.result.rdt_tmax) : "nan",
                                            std::to_string(r.result.bisect_iters),
                                            r.result.extrapolated ? "1" : "0"};
    out += rde::csv::join(cells) + "\n";
  }
  if (path.empty() || path == "-") {
    std::fwrite(out.data(), 1, out.size(), stdout);
  } else {
    rde::detail::write_text(path, out);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Remaining discharge energy pipeline: virtual cell, NDCTNet, RDT/energy networks"};
  app.require_subcommand(1);

  std::string config_path, out_dir, cell_class = "nca-like";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--config", config_path, "RunConfig JSON file")->check(CLI::ExistingFile);
  app.add_option("--class", cell_class, "cell class when no config is given (nca-like, lfp-like)");
  app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  app.add_option("--seed", seed, "run seed (overrides seed)");
  app.add_option("--threads", threads, "worker threads, 0 = hardware concurrency");

  bool force = false;
  std::vector<CLI::App*> stages;
  for (const char* name : {"gen-truth", "train-hybrid", "gen-rde-data", "train-rde"}) {
    auto* sc = app.add_subcommand(name, std::string("run the ") + name + " stage");
    sc->add_flag("--force", force, "rerun even when the stage is up to date");
    stages.push_back(sc);
  }

  std::string profile, output;
  double t_s = 0, stride = 0;
  std::vector<double> z;
  auto* predict = app.add_subcommand("predict", "RDE at time t of a profile's hybrid run");
  predict->add_option("--profile", profile, "profile spec or CSV path")->required();
  predict->add_option("--t", t_s, "time into the profile, s")->required();
  predict->add_option("--z", z, "constant C-rate(s) after t")->required();
  predict->add_option("--output", output, "CSV output file (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "RDE surface over (t, z) for plotting");
  sweep->add_option("--profile", profile, "profile spec or CSV path");
  sweep->add_option("--z", z, "C-rate grid (default: log grid z_min..z_max)");
  sweep->add_option("--stride", stride, "time stride along the profile, s");
  sweep->add_option("--output", output, "file name under results/")->default_val("sweep.csv");

  auto* validate = app.add_subcommand("validate", "oracle vs predictor vs traditional baseline on the validation plan");
  auto* benchmark = app.add_subcommand("benchmark", "predictor vs oracle wall clock over a full z-grid");
  benchmark->add_option("--z", z, "C-rate grid (default: benchmark.z_grid)");
  auto* all = app.add_subcommand("all", "every stage, then validate, sweep and benchmark");
  bool no_benchmark = false;
  all->add_flag("--no-benchmark", no_benchmark, "skip the timing benchmark");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    rde::RunConfig cfg = config_path.empty() ? rde::RunConfig::defaults(rde::parse_cell_class(cell_class))
                                             : rde::load_run_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = std::filesystem::absolute(out_dir).string();
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;

    if (stages[0]->parsed()) print_outcome(rde::stage_gen_truth(cfg, force));
    if (stages[1]->parsed()) print_outcome(rde::stage_train_hybrid(cfg, force));
    if (stages[2]->parsed()) print_outcome(rde::stage_gen_rde_data(cfg, force));
    if (stages[3]->parsed()) print_outcome(rde::stage_train_rde(cfg, force));
    if (predict->parsed()) write_predictions(rde::cmd_predict(cfg, profile, t_s, z), output);
    if (sweep->parsed()) print_report("sweep", rde::cmd_sweep(cfg, profile, z, stride, output));
    if (validate->parsed()) {
      print_report("validate", rde::cmd_validate(cfg));
      const auto text = rde::csv::slurp((rde::output_root(cfg) / rde::kResultsDir / "validation.txt").string());
      std::fwrite(text.data(), 1, text.size(), stdout);
    }
    if (benchmark->parsed()) print_report("benchmark", rde::cmd_benchmark(cfg, z));
    if (all->parsed()) {
      for (const auto& o : rde::run_all(cfg, !no_benchmark)) print_outcome(o);
    }
    return 0;
  } catch (const rde::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const rde::StageInputError& e) {
    std::cerr << "stage input error: " << e.what() << "\n";
    return 3;
  } catch (const rde::ParseError& e) {
    std::cerr << "stage input error: " << e.what() << "\n";
    return 3;
  } catch (const rde::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const rde::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
