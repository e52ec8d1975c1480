#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>

#include <CLI11.hpp>

#include "dg/config.hpp"
#include "dg/errors.hpp"
#include "dg/harness.hpp"

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("DG_SELECT_OUT");
  return env ? env : "";
}

int dispatch(const std::function<dg::RunManifest()>& job) {
  try {
    const dg::RunManifest manifest = job();
    for (const auto& f : manifest.files)
      std::printf("wrote %s (fnv1a64 %s)\n", f.path.c_str(), f.digest.c_str());
    std::printf("done in %.2fs\n", manifest.wall_clock_sec);
    return 0;
  } catch (const dg::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const dg::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const dg::NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regularised ERM for domain generalisation: grid sweeps, domain-wise vs "
               "instance-wise model selection, complexity estimates and risk bounds."};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  int threads = 1;
  long long seed_override = -1;
  app.add_option("--threads", threads, "worker threads for independent grid cells");
  app.add_option("--seed", seed_override, "override the root seed");

  // run <config>
  std::string config_path;
  auto* run = app.add_subcommand("run", "execute an experiment config file");
  run->add_option("config", config_path, "experiment config")->required();

  // sweep --synth ... | --csv PATH
  std::string synth_kv, csv_path, grid_range = "-10..10", out_dir = default_out_dir();
  int sweep_seeds = 5;
  double train_frac = 0.8;
  auto* sweep = app.add_subcommand("sweep", "C-grid sweep of iid / held-out / worst-case curves");
  sweep->add_option("--synth", synth_kv, "synthetic source, e.g. n=4,m=500,d=20,k=2,shift=3,noise=0");
  sweep->add_option("--csv", csv_path, "feature CSV source");
  sweep->add_option("--grid", grid_range, "log2 C range, e.g. -10..10");
  sweep->add_option("--seeds", sweep_seeds, "number of split seeds");
  sweep->add_option("--train-frac", train_frac, "per-domain train fraction");
  sweep->add_option("--out", out_dir, "output directory (default $DG_SELECT_OUT)");

  // bounds --inputs FILE
  std::string bounds_inputs, bounds_out = default_out_dir();
  auto* bounds = app.add_subcommand("bounds", "evaluate bound formulas for an inputs CSV");
  bounds->add_option("--inputs", bounds_inputs, "CSV with L_hat,rad_mn,rad_n,m,n,delta,kappa")
      ->required();
  bounds->add_option("--out", bounds_out, "output directory (default $DG_SELECT_OUT)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (run->parsed()) {
    return dispatch([&] {
      dg::ExperimentConfig config = dg::load_experiment_config(config_path);
      if (threads > 1) config.threads = threads;
      if (seed_override >= 0) config.seed = static_cast<uint64_t>(seed_override);
      return dg::run_experiment(config);
    });
  }

  if (sweep->parsed()) {
    return dispatch([&] {
      if (synth_kv.empty() == csv_path.empty())
        throw dg::UsageError("sweep: pass exactly one of --synth or --csv");
      if (out_dir.empty()) throw dg::UsageError("sweep: --out missing and DG_SELECT_OUT unset");
      dg::ExperimentConfig config;
      config.task = dg::TaskKind::kCSweep;
      config.out_dir = out_dir;
      config.threads = threads;
      config.n_seeds = sweep_seeds;
      config.train_frac = train_frac;
      config.seed = seed_override >= 0 ? static_cast<uint64_t>(seed_override) : 0;
      config.grid = dg::parse_grid_range(grid_range);
      if (!synth_kv.empty()) {
        config.source.kind = dg::SourceKind::kSynth;
        config.source.synth = dg::parse_synth_kv(synth_kv);
      } else {
        config.source.kind = dg::SourceKind::kCsv;
        config.source.csv_path = csv_path;
      }
      std::string echo;
      for (int i = 1; i < argc; ++i) {
        if (i > 1) echo += ' ';
        echo += argv[i];
      }
      config.raw_text = echo;
      return dg::run_experiment(config);
    });
  }

  return dispatch([&] {
    if (bounds_out.empty()) throw dg::UsageError("bounds: --out missing and DG_SELECT_OUT unset");
    return dg::run_bounds_file(bounds_inputs, bounds_out);
  });
}
