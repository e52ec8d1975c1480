#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "dg/environment.hpp"

namespace dg {

enum class LossKind { kHinge, kLogistic };

// Training objective per one-vs-rest scorer: (C/m)*sum_i loss + ||w||^2.
// Larger C means weaker regularisation.
struct SvmConfig {
  LossKind loss = LossKind::kHinge;
  double C = 1.0;
  double tol = 1e-10;   // stop when the solver objective changes less than this
  int max_iter = 1000;
  uint64_t seed = 0;
  // The intercept is an appended constant-1 feature, penalised like any other
  // weight, so the hypothesis class stays exactly norm-constrained.
  bool fit_bias = true;

  void validate() const;
};

struct SolverReport {
  int iterations = 0;
  bool converged = false;
  double final_objective = 0.0;  // (C/m)*sum loss + ||w||^2 at the solution
  // Per outer iteration, the objective the solver actually minimises:
  // the dual for hinge coordinate descent, the primal for Newton.
  std::vector<double> objective_history;
};

// One-vs-rest linear classifier. W has one row per class over the (possibly
// bias-augmented) feature space.
struct LinearModel {
  Eigen::MatrixXd W;         // K x (d [+1 if bias feature])
  int input_dim = 0;         // raw feature dimension d
  bool bias_feature = false;
  double trained_C = 0.0;
  std::vector<SolverReport> reports;  // one per class scorer

  int num_classes() const { return static_cast<int>(W.rows()); }
  Eigen::VectorXd scores(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd score_matrix(const Eigen::MatrixXd& X) const;  // m x K
  int predict(const Eigen::VectorXd& x) const;
};

struct Metrics {
  double accuracy = 0.0;
  double ramp_risk = 0.0;
  double mean_margin = 0.0;
};

struct WeightNorms {
  std::vector<double> per_class;
  double max_norm = 0.0;
};

// Multiclass ramp surrogate: clamp(1 - margin, 0, 1). 1-Lipschitz, [0,1].
double ramp_loss(double margin);

LinearModel train_linear(const Dataset& data, const SvmConfig& config);
Metrics evaluate(const LinearModel& model, const Dataset& data);
WeightNorms weight_norm(const LinearModel& model);

// Plain-text dump of W ("K d" header then rows, 17 significant digits).
void save_model(const LinearModel& model, const std::string& path);
LinearModel load_model(const std::string& path, bool bias_feature = false);

}  // namespace dg
