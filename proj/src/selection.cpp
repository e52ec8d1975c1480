#include "dg/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dg/errors.hpp"
#include "dg/parallel.hpp"
#include "dg/rng.hpp"

namespace dg {

CGrid CGrid::standard() { return range(-10, 10); }

CGrid CGrid::range(int lo, int hi) {
  if (lo > hi) throw DataError("grid: empty range");
  CGrid g;
  for (int v = lo; v <= hi; ++v) g.log2_values.push_back(v);
  return g;
}

void CGrid::validate() const {
  if (log2_values.empty()) throw DataError("grid: no values");
  for (size_t i = 1; i < log2_values.size(); ++i)
    if (log2_values[i] <= log2_values[i - 1])
      throw DataError("grid: values must be sorted and unique");
}

double CGrid::value_at(size_t i) const { return std::ldexp(1.0, log2_values.at(i)); }

size_t argmax_small_tie(const std::vector<double>& scores) {
  size_t best = 0;
  for (size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

namespace {

SelectionResult make_result(Criterion criterion, const CGrid& grid,
                            const std::vector<double>& scores) {
  SelectionResult res;
  res.criterion = criterion;
  const size_t best = argmax_small_tie(scores);
  res.chosen_log2C = grid.log2_values[best];
  res.chosen_C = grid.value_at(best);
  res.ln_C = double(res.chosen_log2C) * std::log(2.0);
  for (size_t i = 0; i < grid.size(); ++i) res.score_by_log2C[grid.log2_values[i]] = scores[i];
  return res;
}

SvmConfig with_C(const SvmConfig& base, double C, uint64_t seed) {
  SvmConfig cfg = base;
  cfg.C = C;
  cfg.seed = seed;
  return cfg;
}

// Per-domain, per-class round-robin deal of shuffled indices into k folds.
struct FoldSplit {
  std::vector<Dataset> train;  // pooled across domains
  std::vector<Dataset> val;
};

FoldSplit stratified_folds(const Environment& env, int k_folds, uint64_t seed) {
  // fold -> domain rows
  std::vector<std::vector<std::pair<size_t, Eigen::Index>>> fold_rows;
  fold_rows.resize(static_cast<size_t>(k_folds));
  for (size_t di = 0; di < env.domains.size(); ++di) {
    const Domain& d = env.domains[di];
    std::map<int, std::vector<Eigen::Index>> by_class;
    for (Eigen::Index i = 0; i < d.size(); ++i) by_class[d.labels(i)].push_back(i);
    Rng rng(derive_seed(seed, "folds/" + d.id));
    for (auto& [c, idx] : by_class) {
      (void)c;
      rng.shuffle(idx);
      for (size_t i = 0; i < idx.size(); ++i)
        fold_rows[i % size_t(k_folds)].emplace_back(di, idx[i]);
    }
  }

  auto gather = [&](const std::vector<bool>& take_fold) {
    Eigen::Index total = 0;
    for (size_t f = 0; f < fold_rows.size(); ++f)
      if (take_fold[f]) total += static_cast<Eigen::Index>(fold_rows[f].size());
    Dataset ds;
    ds.X.resize(total, env.feature_dim);
    ds.y.resize(total);
    Eigen::Index row = 0;
    for (size_t f = 0; f < fold_rows.size(); ++f) {
      if (!take_fold[f]) continue;
      for (const auto& [di, i] : fold_rows[f]) {
        ds.X.row(row) = env.domains[di].features.row(i);
        ds.y(row) = env.domains[di].labels(i);
        ++row;
      }
    }
    return ds;
  };

  FoldSplit out;
  for (int f = 0; f < k_folds; ++f) {
    std::vector<bool> val_mask(size_t(k_folds), false), train_mask(size_t(k_folds), true);
    val_mask[size_t(f)] = true;
    train_mask[size_t(f)] = false;
    Dataset val = gather(val_mask);
    Dataset train = gather(train_mask);
    if (val.size() == 0 || train.size() == 0)
      throw DataError("fold error: empty fold (too few samples for k=" +
                      std::to_string(k_folds) + ")");
    std::set<int> train_classes;
    for (Eigen::Index i = 0; i < train.size(); ++i) train_classes.insert(train.y(i));
    if (static_cast<int>(train_classes.size()) != env.num_classes)
      throw DataError("fold error: a class is missing from fold " + std::to_string(f) +
                      "'s training side");
    out.train.push_back(std::move(train));
    out.val.push_back(std::move(val));
  }
  return out;
}

}  // namespace

SelectionResult domain_wise_cv(const Environment& env_train, const CGrid& grid,
                               const SvmConfig& base, uint64_t seed, int threads) {
  env_train.validate();
  grid.validate();
  if (env_train.n_domains() < 2)
    throw DataError("domain_wise_cv: needs at least 2 source domains");

  const size_t n_folds = env_train.domains.size();
  std::vector<Dataset> fold_train;
  std::vector<Dataset> fold_val;
  for (size_t j = 0; j < n_folds; ++j) {
    fold_train.push_back(pool_excluding(env_train, env_train.domains[j].id));
    fold_val.push_back(domain_dataset(env_train.domains[j]));
  }

  std::vector<double> scores(grid.size(), 0.0);
  std::vector<double> cell(grid.size() * n_folds, 0.0);
  parallel_for(static_cast<int64_t>(cell.size()), threads, [&](int64_t idx) {
    const size_t gi = size_t(idx) / n_folds;
    const size_t fj = size_t(idx) % n_folds;
    const auto cfg = with_C(base, grid.value_at(gi), derive_seed(seed, "dwcv", idx));
    const LinearModel model = train_linear(fold_train[fj], cfg);
    cell[size_t(idx)] = evaluate(model, fold_val[fj]).accuracy;
  });
  for (size_t gi = 0; gi < grid.size(); ++gi) {
    double sum = 0.0;
    for (size_t fj = 0; fj < n_folds; ++fj) sum += cell[gi * n_folds + fj];
    scores[gi] = sum / double(n_folds);
  }
  return make_result(Criterion::kDomainWise, grid, scores);
}

SelectionResult instance_wise_cv(const Environment& env_train, const CGrid& grid, int k_folds,
                                 const SvmConfig& base, uint64_t seed, int threads) {
  env_train.validate();
  grid.validate();
  if (k_folds < 2) throw DataError("instance_wise_cv: k_folds must be >= 2");

  const FoldSplit folds = stratified_folds(env_train, k_folds, seed);
  const size_t n_folds = folds.train.size();

  std::vector<double> scores(grid.size(), 0.0);
  std::vector<double> cell(grid.size() * n_folds, 0.0);
  parallel_for(static_cast<int64_t>(cell.size()), threads, [&](int64_t idx) {
    const size_t gi = size_t(idx) / n_folds;
    const size_t fj = size_t(idx) % n_folds;
    const auto cfg = with_C(base, grid.value_at(gi), derive_seed(seed, "iwcv", idx));
    const LinearModel model = train_linear(folds.train[fj], cfg);
    cell[size_t(idx)] = evaluate(model, folds.val[fj]).accuracy;
  });
  for (size_t gi = 0; gi < grid.size(); ++gi) {
    double sum = 0.0;
    for (size_t fj = 0; fj < n_folds; ++fj) sum += cell[gi * n_folds + fj];
    scores[gi] = sum / double(n_folds);
  }
  return make_result(Criterion::kInstanceWise, grid, scores);
}

HeldoutMetrics evaluate_heldout(const Environment& env, const std::string& heldout_id, double C,
                                const SvmConfig& base, uint64_t seed, double train_frac) {
  if (!env.has_domain(heldout_id)) throw DataError("unknown domain id: " + heldout_id);
  if (env.n_domains() < 2) throw DataError("evaluate_heldout: needs at least 2 domains");

  const auto [train_env, test_env] = split_environment(env, train_frac, seed);
  const Dataset train = pool_excluding(train_env, heldout_id);
  const Dataset test = domain_dataset(test_env.domain_by_id(heldout_id));
  const LinearModel model = train_linear(train, with_C(base, C, derive_seed(seed, "heldout")));
  const Metrics m = evaluate(model, test);
  return {m.accuracy, m.ramp_risk};
}

namespace {

void mean_std(const std::vector<std::vector<double>>& by_seed, size_t gi, double& mean,
              double& sd) {
  const size_t s = by_seed.size();
  double sum = 0.0;
  for (size_t i = 0; i < s; ++i) sum += by_seed[i][gi];
  mean = sum / double(s);
  if (s < 2) {
    sd = 0.0;
    return;
  }
  double ss = 0.0;
  for (size_t i = 0; i < s; ++i) ss += (by_seed[i][gi] - mean) * (by_seed[i][gi] - mean);
  sd = std::sqrt(ss / double(s - 1));
}

}  // namespace

SweepCurves c_sweep(const Environment& env, const CGrid& grid, const std::vector<uint64_t>& seeds,
                    const SvmConfig& base, double train_frac, int threads) {
  env.validate();
  grid.validate();
  if (env.n_domains() < 2) throw DataError("c_sweep: needs at least 2 domains");
  if (seeds.empty()) throw DataError("c_sweep: needs at least one seed");

  const size_t n_seeds = seeds.size(), n_grid = grid.size();
  const auto n_dom = static_cast<size_t>(env.n_domains());

  SweepCurves out;
  out.log2_values = grid.log2_values;
  out.iid_by_seed.assign(n_seeds, std::vector<double>(n_grid, 0.0));
  out.dg_by_seed.assign(n_seeds, std::vector<double>(n_grid, 0.0));
  out.worst_by_seed.assign(n_seeds, std::vector<double>(n_grid, 0.0));

  // One cell per (seed, C): the iid score plus all held-out choices.
  parallel_for(static_cast<int64_t>(n_seeds * n_grid), threads, [&](int64_t idx) {
    const size_t si = size_t(idx) / n_grid;
    const size_t gi = size_t(idx) % n_grid;
    const uint64_t seed = seeds[si];
    const double C = grid.value_at(gi);

    const auto [train_env, test_env] = split_environment(env, train_frac, seed);
    const auto cfg = with_C(base, C, derive_seed(seed, "sweep", int64_t(gi)));

    const LinearModel iid_model = train_linear(pool(train_env), cfg);
    out.iid_by_seed[si][gi] = evaluate(iid_model, pool(test_env)).accuracy;

    double dg_sum = 0.0, dg_min = 1.0;
    for (size_t j = 0; j < n_dom; ++j) {
      const std::string& id = env.domains[j].id;
      const LinearModel model = train_linear(pool_excluding(train_env, id), cfg);
      const double acc = evaluate(model, domain_dataset(test_env.domain_by_id(id))).accuracy;
      dg_sum += acc;
      dg_min = std::min(dg_min, acc);
    }
    out.dg_by_seed[si][gi] = dg_sum / double(n_dom);
    out.worst_by_seed[si][gi] = dg_min;
  });

  out.iid_mean.resize(n_grid);
  out.iid_std.resize(n_grid);
  out.dg_mean.resize(n_grid);
  out.dg_std.resize(n_grid);
  out.worst_mean.resize(n_grid);
  out.worst_std.resize(n_grid);
  for (size_t gi = 0; gi < n_grid; ++gi) {
    mean_std(out.iid_by_seed, gi, out.iid_mean[gi], out.iid_std[gi]);
    mean_std(out.dg_by_seed, gi, out.dg_mean[gi], out.dg_std[gi]);
    mean_std(out.worst_by_seed, gi, out.worst_mean[gi], out.worst_std[gi]);
  }
  out.argmax_iid_log2C = grid.log2_values[argmax_small_tie(out.iid_mean)];
  out.argmax_dg_log2C = grid.log2_values[argmax_small_tie(out.dg_mean)];
  out.argmax_worst_log2C = grid.log2_values[argmax_small_tie(out.worst_mean)];
  return out;
}

}  // namespace dg
