#include "dg/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dg/bounds.hpp"
#include "dg/complexity.hpp"
#include "dg/errors.hpp"
#include "dg/linear_model.hpp"
#include "dg/matrix_io.hpp"
#include "dg/mlp.hpp"
#include "dg/parallel.hpp"
#include "dg/rng.hpp"
#include "dg/selection.hpp"
#include "dg/table.hpp"

namespace fs = std::filesystem;

namespace dg {

uint64_t fnv1a64(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    const auto got = static_cast<size_t>(is.gcount());
    for (size_t i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

namespace {

std::string angle_id(double angle) {
  if (angle == std::floor(angle)) return std::to_string(static_cast<long long>(angle));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", angle);
  return buf;
}

Environment fan_out_rotations(const Domain& base, const std::vector<double>& angles,
                              double subsample, uint64_t seed) {
  if (base.size() < static_cast<Eigen::Index>(angles.size()))
    throw DataError("rotated corpus: fewer images than angles");

  std::vector<Eigen::Index> idx(static_cast<size_t>(base.size()));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "rotations/partition"));
  rng.shuffle(idx);
  const auto keep = std::max<size_t>(angles.size(),
                                     static_cast<size_t>(subsample * double(idx.size())));
  idx.resize(keep);

  Environment env;
  env.feature_dim = static_cast<int>(base.feature_dim());
  int max_label = 0;
  const size_t per = idx.size() / angles.size();
  const size_t extra = idx.size() % angles.size();
  size_t cursor = 0;
  for (size_t a = 0; a < angles.size(); ++a) {
    const size_t count = per + (a < extra ? 1 : 0);
    Domain chunk;
    chunk.id = angle_id(angles[a]);
    chunk.features.resize(static_cast<Eigen::Index>(count), base.feature_dim());
    chunk.labels.resize(static_cast<Eigen::Index>(count));
    for (size_t i = 0; i < count; ++i, ++cursor) {
      chunk.features.row(static_cast<Eigen::Index>(i)) = base.features.row(idx[cursor]);
      chunk.labels(static_cast<Eigen::Index>(i)) = base.labels(idx[cursor]);
      max_label = std::max(max_label, base.labels(idx[cursor]));
    }
    env.domains.push_back(rotate_domain(chunk, angles[a]));
  }
  env.num_classes = max_label + 1;
  env.validate();
  return env;
}

}  // namespace

Environment build_environment(const DataSourceSpec& source, uint64_t seed) {
  switch (source.kind) {
    case SourceKind::kSynth: {
      SynthSpec spec = source.synth;
      spec.seed = derive_seed(seed, "synth_data");
      return synth_environment(spec);
    }
    case SourceKind::kCsv:
      return load_feature_csv(source.csv_path);
    case SourceKind::kRotatedMnist: {
      const Domain base = load_idx(source.idx_images, source.idx_labels);
      return fan_out_rotations(base, source.angles, source.subsample, seed);
    }
  }
  throw UsageError("unknown dataset source");
}

namespace {

class RunWriter {
 public:
  RunWriter(const ExperimentConfig& config) : config_(config) {
    if (config.out_dir.empty()) throw UsageError("output directory not set");
    fs::create_directories(config.out_dir);
    start_ = std::chrono::steady_clock::now();
  }

  void write_table(const Table& table, const std::string& name) {
    const std::string path = (fs::path(config_.out_dir) / name).string();
    emit_csv(table, path);
    char digest[32];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(fnv1a64_file(path)));
    manifest_.files.push_back({name, digest});
  }

  RunManifest finish() {
    manifest_.config_echo = config_.raw_text;
    manifest_.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    nlohmann::json j;
    j["config"] = manifest_.config_echo;
    j["wall_clock_sec"] = manifest_.wall_clock_sec;
    j["files"] = nlohmann::json::array();
    for (const auto& f : manifest_.files) j["files"].push_back({{"path", f.path}, {"digest", f.digest}});
    std::ofstream os(fs::path(config_.out_dir) / "manifest.json", std::ios::binary);
    if (!os) throw DataError("cannot write manifest in " + config_.out_dir);
    os << j.dump(2) << '\n';
    return manifest_;
  }

 private:
  const ExperimentConfig& config_;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

std::vector<uint64_t> split_seeds(const ExperimentConfig& config) {
  std::vector<uint64_t> seeds;
  seeds.reserve(static_cast<size_t>(config.n_seeds));
  for (int i = 0; i < config.n_seeds; ++i)
    seeds.push_back(derive_seed(config.seed, "split_seed", static_cast<uint64_t>(i)));
  return seeds;
}

void task_c_sweep(const ExperimentConfig& config, const Environment& env, RunWriter& writer) {
  const SweepCurves curves =
      c_sweep(env, config.grid, split_seeds(config), config.solver, config.train_frac,
              config.threads);
  Table t({"C", "log2C", "iid_mean", "iid_std", "dg_mean", "dg_std", "worst_mean", "worst_std"});
  for (size_t i = 0; i < curves.log2_values.size(); ++i)
    t.add_row({std::ldexp(1.0, curves.log2_values[i]), int64_t(curves.log2_values[i]),
               curves.iid_mean[i], curves.iid_std[i], curves.dg_mean[i], curves.dg_std[i],
               curves.worst_mean[i], curves.worst_std[i]});
  writer.write_table(t, "sweep.csv");
}

void task_select_compare(const ExperimentConfig& config, const Environment& env,
                         RunWriter& writer) {
  if (env.n_domains() < 3)
    throw DataError("select_compare: needs at least 3 domains (2 sources after holding one out)");

  Table t({"seed", "criterion", "heldout_domain", "accuracy", "selected_C", "ln_C"});
  const auto seeds = split_seeds(config);

  for (size_t si = 0; si < seeds.size(); ++si) {
    const uint64_t seed = seeds[si];
    const auto [train_env, test_env] = split_environment(env, config.train_frac, seed);

    struct Row {
      std::string domain;
      double acc, C, lnC;
    };
    std::vector<Row> dw_rows, iw_rows;

    for (const auto& heldout : env.domains) {
      const Environment sources = drop_domain(train_env, heldout.id);
      const Dataset heldout_test = domain_dataset(test_env.domain_by_id(heldout.id));

      auto finish = [&](SelectionResult res) {
        if (config.refit) {
          SvmConfig cfg = config.solver;
          cfg.C = res.chosen_C;
          cfg.seed = derive_seed(seed, "refit/" + heldout.id);
          const LinearModel model = train_linear(pool(sources), cfg);
          res.final_heldout_accuracy = evaluate(model, heldout_test).accuracy;
        } else {
          res.final_heldout_accuracy = res.score_by_log2C.at(res.chosen_log2C);
        }
        return res;
      };

      const auto dw = finish(domain_wise_cv(sources, config.grid, config.solver,
                                            derive_seed(seed, "dw/" + heldout.id),
                                            config.threads));
      const auto iw = finish(instance_wise_cv(sources, config.grid, config.k_folds, config.solver,
                                              derive_seed(seed, "iw/" + heldout.id),
                                              config.threads));
      dw_rows.push_back({heldout.id, *dw.final_heldout_accuracy, dw.chosen_C, dw.ln_C});
      iw_rows.push_back({heldout.id, *iw.final_heldout_accuracy, iw.chosen_C, iw.ln_C});
    }

    auto emit_block = [&](const std::string& name, const std::vector<Row>& rows) {
      double acc_sum = 0.0, lnc_sum = 0.0;
      for (const auto& r : rows) {
        t.add_row({int64_t(si), name, r.domain, r.acc, r.C, r.lnC});
        acc_sum += r.acc;
        lnc_sum += r.lnC;
      }
      const double n = double(rows.size());
      t.add_row({int64_t(si), name, "mean", acc_sum / n, std::exp(lnc_sum / n), lnc_sum / n});
    };
    emit_block("domain_wise", dw_rows);
    emit_block("instance_wise", iw_rows);
  }
  writer.write_table(t, "select_compare.csv");
}

void task_mlp_checkpoint_study(const ExperimentConfig& config, const Environment& env,
                               RunWriter& writer) {
  if (env.n_domains() < 2) throw DataError("mlp_checkpoint_study: needs at least 2 domains");
  if (!config.mlp.heldout.empty() && !env.has_domain(config.mlp.heldout))
    throw DataError("unknown domain id: " + config.mlp.heldout);

  Table t({"seed", "heldout_domain", "step", "train_loss", "complexity", "heldout_accuracy"});
  const auto seeds = split_seeds(config);

  for (size_t si = 0; si < seeds.size(); ++si) {
    const uint64_t seed = seeds[si];
    const auto [train_env, test_env] = split_environment(env, config.train_frac, seed);

    std::vector<std::string> heldouts;
    if (config.mlp.heldout.empty())
      for (const auto& d : env.domains) heldouts.push_back(d.id);
    else
      heldouts.push_back(config.mlp.heldout);

    for (const auto& heldout : heldouts) {
      const Environment sources = drop_domain(train_env, heldout);
      TrainSchedule schedule = config.mlp.schedule;
      schedule.seed = derive_seed(seed, "mlp/" + heldout);
      const auto checkpoints =
          train_mlp(sources, schedule, config.mlp.plugin, config.mlp.hidden);
      const Dataset heldout_test = domain_dataset(test_env.domain_by_id(heldout));
      for (const auto& ckpt : checkpoints)
        t.add_row({int64_t(si), heldout, ckpt.step, ckpt.train_loss, neyshabur_complexity(ckpt),
                   mlp_accuracy(ckpt.U, ckpt.V, heldout_test)});
    }
  }
  writer.write_table(t, "mlp_checkpoints.csv");
}

Environment augment_environment(const Environment& env) {
  Environment out = env;
  out.feature_dim = env.feature_dim + 1;
  for (auto& d : out.domains) {
    Eigen::MatrixXd a(d.features.rows(), d.features.cols() + 1);
    a.leftCols(d.features.cols()) = d.features;
    a.col(d.features.cols()).setOnes();
    d.features = std::move(a);
  }
  return out;
}

void task_bound_report(const ExperimentConfig& config, const Environment& env,
                       RunWriter& writer) {
  const uint64_t seed = split_seeds(config).front();
  auto [train_env, test_env] = split_environment(env, config.train_frac, seed);
  // The bound's m is literal: every training domain is truncated to the
  // minimum size first.
  train_env = equalize_m(train_env, derive_seed(seed, "equalize"));
  const int64_t m = train_env.min_domain_size();
  const int64_t n = train_env.n_domains();

  const Environment measured =
      config.solver.fit_bias ? augment_environment(train_env) : train_env;
  const Dataset pooled_measured = pool(measured);

  Table t({"C", "log2C", "empirical_ramp_risk", "norm_bound", "rad_mn_closed", "rad_mn",
           "rad_mn_stderr", "rad_n", "rad_n_stderr", "m", "n", "delta", "kappa", "average_case",
           "average_case_vacuous", "excess_risk", "worst_case"});

  struct Row {
    double risk = 0, B = 0, closed = 0, mn = 0, mn_se = 0, rn = 0, rn_se = 0;
  };
  std::vector<Row> rows(config.grid.size());
  const Dataset pooled_train = pool(train_env);

  parallel_for(static_cast<int64_t>(config.grid.size()), config.threads, [&](int64_t gi) {
    SvmConfig cfg = config.solver;
    cfg.C = config.grid.value_at(size_t(gi));
    cfg.seed = derive_seed(seed, "bound_train", gi);
    const LinearModel model = train_linear(pooled_train, cfg);

    double risk_sum = 0.0;
    for (const auto& d : train_env.domains)
      risk_sum += evaluate(model, domain_dataset(d)).ramp_risk;

    Row r;
    r.risk = risk_sum / double(n);
    r.B = config.bound.fixed_norm_bound.value_or(weight_norm(model).max_norm);
    r.closed = linear_rad_closed_form(pooled_measured.X, r.B);
    const auto mc = linear_rad_monte_carlo(pooled_measured.X, r.B, config.bound.rad_draws,
                                           derive_seed(seed, "rad_mn", gi));
    const auto dom = domain_level_rad(measured, r.B, config.bound.rad_draws,
                                      derive_seed(seed, "rad_n", gi));
    r.mn = mc.mean;
    r.mn_se = mc.std_error;
    r.rn = dom.mean;
    r.rn_se = dom.std_error;
    rows[size_t(gi)] = r;
  });

  for (size_t gi = 0; gi < config.grid.size(); ++gi) {
    const Row& r = rows[gi];
    const BoundInputs inputs{r.risk, r.mn, r.rn, m, n, config.bound.delta};
    const BoundReport avg = average_case_bound(inputs);
    const BoundReport exc = excess_risk_bound(r.mn, r.rn, m, n, config.bound.delta);
    const BoundReport wc = worst_case_transform(avg.value, config.bound.kappa, config.bound.delta);
    t.add_row({config.grid.value_at(gi), int64_t(config.grid.log2_values[gi]), r.risk, r.B,
               r.closed, r.mn, r.mn_se, r.rn, r.rn_se, m, n, config.bound.delta,
               config.bound.kappa, avg.value, int64_t(avg.vacuous ? 1 : 0), exc.value, wc.value});
  }
  writer.write_table(t, "bound_report.csv");
}

}  // namespace

namespace {

const char* task_name(TaskKind task) {
  switch (task) {
    case TaskKind::kCSweep:
      return "c_sweep";
    case TaskKind::kSelectCompare:
      return "select_compare";
    case TaskKind::kMlpCheckpointStudy:
      return "mlp_checkpoint_study";
    case TaskKind::kBoundReport:
      return "bound_report";
  }
  return "?";
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config) {
  RunWriter writer(config);
  try {
    const Environment env = build_environment(config.source, config.seed);
    switch (config.task) {
      case TaskKind::kCSweep:
        task_c_sweep(config, env, writer);
        break;
      case TaskKind::kSelectCompare:
        task_select_compare(config, env, writer);
        break;
      case TaskKind::kMlpCheckpointStudy:
        task_mlp_checkpoint_study(config, env, writer);
        break;
      case TaskKind::kBoundReport:
        task_bound_report(config, env, writer);
        break;
    }
  } catch (const DataError& e) {
    throw DataError(std::string("task ") + task_name(config.task) + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(std::string("task ") + task_name(config.task) + ": " + e.what());
  }
  return writer.finish();
}

RunManifest run_experiment_file(const std::string& config_path) {
  return run_experiment(load_experiment_config(config_path));
}

RunManifest run_bounds_file(const std::string& inputs_path, const std::string& out_dir) {
  const Table in = load_csv_table(inputs_path);
  const std::vector<std::string> expected{"L_hat", "rad_mn", "rad_n", "m", "n", "delta", "kappa"};
  if (in.columns != expected)
    throw DataError(inputs_path + ": expected header L_hat,rad_mn,rad_n,m,n,delta,kappa");

  auto as_double = [&](const Cell& c, const char* col, size_t row) {
    if (std::holds_alternative<double>(c)) return std::get<double>(c);
    if (std::holds_alternative<int64_t>(c)) return double(std::get<int64_t>(c));
    throw DataError(inputs_path + ": non-numeric '" + std::string(col) + "' in row " +
                    std::to_string(row + 1));
  };

  ExperimentConfig pseudo;
  pseudo.out_dir = out_dir;
  pseudo.raw_text = "bounds --inputs " + inputs_path;
  RunWriter writer(pseudo);

  Table t({"L_hat", "rad_mn", "rad_n", "m", "n", "delta", "kappa", "average_case",
           "average_case_confidence", "average_case_vacuous", "excess_risk", "worst_case",
           "worst_case_confidence"});
  for (size_t i = 0; i < in.rows.size(); ++i) {
    const auto& row = in.rows[i];
    const BoundInputs inputs{as_double(row[0], "L_hat", i),
                             as_double(row[1], "rad_mn", i),
                             as_double(row[2], "rad_n", i),
                             static_cast<int64_t>(as_double(row[3], "m", i)),
                             static_cast<int64_t>(as_double(row[4], "n", i)),
                             as_double(row[5], "delta", i)};
    const double kappa = as_double(row[6], "kappa", i);
    const BoundReport avg = average_case_bound(inputs);
    const BoundReport exc =
        excess_risk_bound(inputs.rad_mn, inputs.rad_n, inputs.m, inputs.n, inputs.delta);
    const BoundReport wc = worst_case_transform(avg.value, kappa, inputs.delta);
    t.add_row({inputs.empirical_risk, inputs.rad_mn, inputs.rad_n, inputs.m, inputs.n,
               inputs.delta, kappa, avg.value, avg.confidence, int64_t(avg.vacuous ? 1 : 0),
               exc.value, wc.value, wc.confidence});
  }
  writer.write_table(t, "bounds.csv");
  return writer.finish();
}

}  // namespace dg
