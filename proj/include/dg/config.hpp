#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dg/environment.hpp"
#include "dg/linear_model.hpp"
#include "dg/mlp.hpp"
#include "dg/selection.hpp"

namespace dg {

// Line-oriented "[section]" + "key = value" experiment configs. '#' starts a
// comment; keys are unique within their section. Errors carry line numbers.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  int64_t get_int(const std::string& section, const std::string& key, int64_t fallback) const;
  int64_t require_int(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  const std::string& raw_text() const { return raw_text_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, std::map<std::string, Entry>> sections_;
  std::string origin_;
  std::string raw_text_;

  const Entry* find(const std::string& section, const std::string& key) const;
  [[noreturn]] void fail(const std::string& section, const std::string& key,
                         const std::string& why) const;
};

enum class TaskKind { kCSweep, kSelectCompare, kMlpCheckpointStudy, kBoundReport };
enum class SourceKind { kSynth, kCsv, kRotatedMnist };

struct DataSourceSpec {
  SourceKind kind = SourceKind::kSynth;
  SynthSpec synth;
  std::string csv_path;
  // Rotated image corpus: IDX pair fanned out into one domain per angle.
  std::string idx_images, idx_labels;
  std::vector<double> angles{0, 15, 30, 45, 60, 75};
  double subsample = 1.0;  // fraction of images kept before fan-out
};

struct MlpStudyConfig {
  int hidden = 256;
  TrainSchedule schedule;
  PenaltyPlugin plugin;
  std::string heldout;  // empty = every domain in turn
};

struct BoundTaskConfig {
  double delta = 0.05;
  double kappa = 0.1;
  int64_t rad_draws = 2000;
  std::optional<double> fixed_norm_bound;  // default: trained max row norm
};

struct ExperimentConfig {
  TaskKind task = TaskKind::kCSweep;
  uint64_t seed = 0;
  int n_seeds = 5;
  std::string out_dir;
  int threads = 1;
  double train_frac = 0.8;

  DataSourceSpec source;
  CGrid grid = CGrid::standard();
  SvmConfig solver;
  int k_folds = 5;
  bool refit = true;

  MlpStudyConfig mlp;
  BoundTaskConfig bound;

  std::string raw_text;  // config echo for the manifest
};

ExperimentConfig parse_experiment_config(const ConfigFile& file);
ExperimentConfig load_experiment_config(const std::string& path);

// "k=v,k=v" synth spec used by the sweep subcommand (keys n, m, d, k, shift, noise).
SynthSpec parse_synth_kv(const std::string& text);

// "lo..hi" grid range.
CGrid parse_grid_range(const std::string& text);

}  // namespace dg
