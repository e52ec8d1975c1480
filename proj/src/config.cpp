#include "dg/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dg/errors.hpp"

namespace dg {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
  ConfigFile cf;
  cf.origin_ = origin;
  cf.raw_text_ = text;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw UsageError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw UsageError(origin + ":" + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (section.empty())
      throw UsageError(origin + ":" + std::to_string(lineno) + ": key outside any [section]");
    auto& sec = cf.sections_[section];
    if (sec.count(key))
      throw UsageError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    sec[key] = {value, lineno};
  }
  return cf;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_string(buf.str(), path);
}

const ConfigFile::Entry* ConfigFile::find(const std::string& section,
                                          const std::string& key) const {
  auto sit = sections_.find(section);
  if (sit == sections_.end()) return nullptr;
  auto kit = sit->second.find(key);
  if (kit == sit->second.end()) return nullptr;
  return &kit->second;
}

void ConfigFile::fail(const std::string& section, const std::string& key,
                      const std::string& why) const {
  const Entry* e = find(section, key);
  const std::string where =
      e ? origin_ + ":" + std::to_string(e->line) : origin_;
  throw UsageError(where + ": [" + section + "] " + key + ": " + why);
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) fail(section, key, "missing required key");
  return e->value;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
  const Entry* e = find(section, key);
  return e ? e->value : fallback;
}

int64_t ConfigFile::require_int(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) fail(section, key, "missing required key");
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(e->value, &pos);
    if (pos != e->value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(section, key, "expected an integer, got '" + e->value + "'");
  }
}

int64_t ConfigFile::get_int(const std::string& section, const std::string& key,
                            int64_t fallback) const {
  return has(section, key) ? require_int(section, key) : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  try {
    size_t pos = 0;
    const double v = std::stod(e->value, &pos);
    if (pos != e->value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(section, key, "expected a real number, got '" + e->value + "'");
  }
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1") return true;
  if (e->value == "false" || e->value == "0") return false;
  fail(section, key, "expected true/false, got '" + e->value + "'");
}

namespace {

TaskKind parse_task(const ConfigFile& cf) {
  const std::string t = cf.get_string("experiment", "task");
  if (t == "c_sweep") return TaskKind::kCSweep;
  if (t == "select_compare") return TaskKind::kSelectCompare;
  if (t == "mlp_checkpoint_study") return TaskKind::kMlpCheckpointStudy;
  if (t == "bound_report") return TaskKind::kBoundReport;
  throw UsageError("[experiment] task: unknown task '" + t + "'");
}

LossKind parse_loss(const std::string& s) {
  if (s == "hinge") return LossKind::kHinge;
  if (s == "logistic") return LossKind::kLogistic;
  throw UsageError("[solver] loss: unknown loss '" + s + "'");
}

PenaltyKind parse_penalty(const std::string& s) {
  if (s == "erm") return PenaltyKind::kErm;
  if (s == "vrex") return PenaltyKind::kVrex;
  if (s == "mixup") return PenaltyKind::kMixup;
  throw UsageError("[mlp] penalty: unknown penalty '" + s + "'");
}

std::vector<double> parse_angle_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  if (out.empty()) throw UsageError("[dataset] angles: empty list");
  return out;
}

DataSourceSpec parse_source(const ConfigFile& cf) {
  DataSourceSpec src;
  const std::string kind = cf.get_string("dataset", "source");
  if (kind == "synth") {
    src.kind = SourceKind::kSynth;
    src.synth.n_domains = static_cast<int>(cf.require_int("dataset", "n_domains"));
    src.synth.m_per_domain = static_cast<int>(cf.require_int("dataset", "m_per_domain"));
    src.synth.feature_dim = static_cast<int>(cf.require_int("dataset", "feature_dim"));
    src.synth.num_classes = static_cast<int>(cf.get_int("dataset", "num_classes", 2));
    src.synth.shift_scale = cf.get_double("dataset", "shift_scale", 0.0);
    src.synth.label_noise = cf.get_double("dataset", "label_noise", 0.0);
  } else if (kind == "csv") {
    src.kind = SourceKind::kCsv;
    src.csv_path = cf.get_string("dataset", "path");
  } else if (kind == "rotated_mnist") {
    src.kind = SourceKind::kRotatedMnist;
    src.idx_images = cf.get_string("dataset", "images");
    src.idx_labels = cf.get_string("dataset", "labels");
    if (cf.has("dataset", "angles"))
      src.angles = parse_angle_list(cf.get_string("dataset", "angles"));
    src.subsample = cf.get_double("dataset", "subsample", 1.0);
    if (!(src.subsample > 0.0 && src.subsample <= 1.0))
      throw UsageError("[dataset] subsample: must lie in (0, 1]");
  } else {
    throw UsageError("[dataset] source: unknown source '" + kind + "'");
  }
  return src;
}

}  // namespace

SynthSpec parse_synth_kv(const std::string& text) {
  SynthSpec spec;
  std::istringstream is(text);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw UsageError("--synth: expected k=v, got '" + tok + "'");
    const std::string key = trim(tok.substr(0, eq));
    const std::string val = trim(tok.substr(eq + 1));
    try {
      if (key == "n")
        spec.n_domains = std::stoi(val);
      else if (key == "m")
        spec.m_per_domain = std::stoi(val);
      else if (key == "d")
        spec.feature_dim = std::stoi(val);
      else if (key == "k")
        spec.num_classes = std::stoi(val);
      else if (key == "shift")
        spec.shift_scale = std::stod(val);
      else if (key == "noise")
        spec.label_noise = std::stod(val);
      else
        throw UsageError("--synth: unknown key '" + key + "'");
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception&) {
      throw UsageError("--synth: bad value for '" + key + "'");
    }
  }
  return spec;
}

CGrid parse_grid_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos)
    throw UsageError("grid range: expected 'lo..hi', got '" + text + "'");
  try {
    const int lo = std::stoi(trim(text.substr(0, dots)));
    const int hi = std::stoi(trim(text.substr(dots + 2)));
    return CGrid::range(lo, hi);
  } catch (const std::exception&) {
    throw UsageError("grid range: expected 'lo..hi', got '" + text + "'");
  }
}

ExperimentConfig parse_experiment_config(const ConfigFile& cf) {
  ExperimentConfig ec;
  ec.raw_text = cf.raw_text();
  ec.task = parse_task(cf);
  ec.seed = static_cast<uint64_t>(cf.get_int("experiment", "seed", 0));
  ec.n_seeds = static_cast<int>(cf.get_int("experiment", "seeds", 5));
  if (ec.n_seeds < 1) throw UsageError("[experiment] seeds: must be >= 1");
  ec.out_dir = cf.get_string("experiment", "out_dir", "");
  if (ec.out_dir.empty()) {
    const char* env = std::getenv("DG_SELECT_OUT");
    if (env) ec.out_dir = env;
  }
  if (ec.out_dir.empty())
    throw UsageError("[experiment] out_dir missing and DG_SELECT_OUT unset");
  ec.threads = static_cast<int>(cf.get_int("experiment", "threads", 1));
  ec.train_frac = cf.get_double("experiment", "train_frac", 0.8);
  if (!(ec.train_frac > 0.0 && ec.train_frac < 1.0))
    throw UsageError("[experiment] train_frac: must lie in (0, 1)");

  ec.source = parse_source(cf);

  const int lo = static_cast<int>(cf.get_int("grid", "log2_min", -10));
  const int hi = static_cast<int>(cf.get_int("grid", "log2_max", 10));
  if (lo > hi) throw UsageError("[grid] log2_min must be <= log2_max");
  ec.grid = CGrid::range(lo, hi);

  ec.solver.loss = parse_loss(cf.get_string("solver", "loss", "hinge"));
  ec.solver.tol = cf.get_double("solver", "tol", 1e-10);
  ec.solver.max_iter = static_cast<int>(cf.get_int("solver", "max_iter", 1000));
  ec.solver.fit_bias = cf.get_bool("solver", "fit_bias", true);

  ec.k_folds = static_cast<int>(cf.get_int("selection", "k_folds", 5));
  ec.refit = cf.get_bool("selection", "refit", true);

  ec.mlp.hidden = static_cast<int>(cf.get_int("mlp", "hidden", 256));
  ec.mlp.schedule.steps = cf.get_int("mlp", "steps", 3000);
  ec.mlp.schedule.checkpoint_every = cf.get_int("mlp", "checkpoint_every", 300);
  ec.mlp.schedule.learning_rate = cf.get_double("mlp", "learning_rate", 1e-2);
  ec.mlp.schedule.batch_size = static_cast<int>(cf.get_int("mlp", "batch_size", 64));
  ec.mlp.plugin.kind = parse_penalty(cf.get_string("mlp", "penalty", "erm"));
  ec.mlp.plugin.lambda = cf.get_double("mlp", "lambda", 0.0);
  ec.mlp.plugin.alpha = cf.get_double("mlp", "alpha", 0.2);
  ec.mlp.heldout = cf.get_string("mlp", "heldout", "");

  ec.bound.delta = cf.get_double("bounds", "delta", 0.05);
  ec.bound.kappa = cf.get_double("bounds", "kappa", 0.1);
  ec.bound.rad_draws = cf.get_int("bounds", "rad_draws", 2000);
  if (cf.has("bounds", "norm_bound"))
    ec.bound.fixed_norm_bound = cf.get_double("bounds", "norm_bound", 1.0);

  return ec;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(ConfigFile::parse_file(path));
}

}  // namespace dg
