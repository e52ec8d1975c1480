#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dg/config.hpp"
#include "dg/environment.hpp"

namespace dg {

struct ManifestEntry {
  std::string path;    // relative to the run's output directory
  std::string digest;  // fnv1a64 over the file bytes, hex
};

struct RunManifest {
  std::string config_echo;
  std::vector<ManifestEntry> files;
  double wall_clock_sec = 0.0;
};

uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64_file(const std::string& path);

// Materialises the configured dataset. Synthetic data derives its generator
// seed from `seed`; file-backed sources load (and for the rotated image
// corpus, fan out one domain per angle after an optional seeded subsample).
Environment build_environment(const DataSourceSpec& source, uint64_t seed);

// Executes the configured task, writes its CSV artifacts plus manifest.json
// into out_dir, and returns the manifest. Identical configs produce
// bit-identical CSVs.
RunManifest run_experiment(const ExperimentConfig& config);
RunManifest run_experiment_file(const std::string& config_path);

// Pure-arithmetic path: evaluates the bound formulas for each row of an
// inputs CSV (columns L_hat,rad_mn,rad_n,m,n,delta,kappa) into bounds.csv.
RunManifest run_bounds_file(const std::string& inputs_path, const std::string& out_dir);

}  // namespace dg
