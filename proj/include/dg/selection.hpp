#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dg/environment.hpp"
#include "dg/linear_model.hpp"

namespace dg {

// Regularisation grid over powers of two.
struct CGrid {
  std::vector<int> log2_values;

  static CGrid standard();            // -10..10
  static CGrid range(int lo, int hi); // inclusive
  void validate() const;              // nonempty, sorted, unique
  size_t size() const { return log2_values.size(); }
  double value_at(size_t i) const;
};

enum class Criterion { kDomainWise, kInstanceWise };

struct SelectionResult {
  Criterion criterion = Criterion::kDomainWise;
  int chosen_log2C = 0;
  double chosen_C = 1.0;
  double ln_C = 0.0;
  std::map<int, double> score_by_log2C;  // validation accuracy per grid point
  std::optional<double> final_heldout_accuracy;
};

struct HeldoutMetrics {
  double accuracy = 0.0;
  double ramp_risk = 0.0;
};

// Leave-one-source-domain-out: for each C, train on the pooled remaining
// domains and validate on the held-out source domain; the score is the mean
// validation accuracy over folds. Ties break toward the smaller C.
SelectionResult domain_wise_cv(const Environment& env_train, const CGrid& grid,
                               const SvmConfig& base, uint64_t seed, int threads = 1);

// k-fold cross-validation with folds stratified inside each source domain,
// so validation folds come from the training domains themselves.
SelectionResult instance_wise_cv(const Environment& env_train, const CGrid& grid, int k_folds,
                                 const SvmConfig& base, uint64_t seed, int threads = 1);

// Splits every domain with the given seed, trains at C on the other domains'
// train splits, reports metrics on the held-out domain's test split.
HeldoutMetrics evaluate_heldout(const Environment& env, const std::string& heldout_id, double C,
                                const SvmConfig& base, uint64_t seed, double train_frac);

struct SweepCurves {
  std::vector<int> log2_values;
  std::vector<double> iid_mean, iid_std;
  std::vector<double> dg_mean, dg_std;
  std::vector<double> worst_mean, worst_std;
  int argmax_iid_log2C = 0;
  int argmax_dg_log2C = 0;
  int argmax_worst_log2C = 0;
  // Raw per-seed scores, [seed][grid index].
  std::vector<std::vector<double>> iid_by_seed, dg_by_seed, worst_by_seed;
};

// For each C and seed: iid = train on all domains' train splits / test on all
// test splits; dg = mean over held-out choices; worst = min over held-out
// choices. Curves are mean +- sd over seeds; argmaxes break ties small.
SweepCurves c_sweep(const Environment& env, const CGrid& grid, const std::vector<uint64_t>& seeds,
                    const SvmConfig& base, double train_frac, int threads = 1);

// Smallest grid value attaining the maximum (the project-wide tie rule).
size_t argmax_small_tie(const std::vector<double>& scores);

}  // namespace dg
