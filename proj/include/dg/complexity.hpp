#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "dg/environment.hpp"
#include "dg/mlp.hpp"

namespace dg {

enum class RadMethod { kClosedForm, kMonteCarlo, kExhaustive };

struct RademacherEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int64_t n_draws = 0;  // 0 for closed form
  RadMethod method = RadMethod::kClosedForm;
};

// Norm bound B of the linear class {x -> <w,x> : ||w|| <= B}; fed from the
// trained model's largest row norm unless a fixed B is configured.
struct HypothesisClassSpec {
  double norm_bound = 1.0;
  void validate() const;
};

// Instance-level bound B*sqrt(sum_i ||x_i||^2)/m.
double linear_rad_closed_form(const Eigen::MatrixXd& X, double B);

// Supremum over the ball taken in closed form per sign vector:
// sup_{||w||<=B} (1/m) sum_i s_i <w, x_i> = (B/m) ||sum_i s_i x_i||.
// When all 2^m sign vectors fit in the draw budget the expectation is
// enumerated exactly (method kExhaustive, zero standard error); otherwise
// signs are sampled and the mean carries a standard error.
RademacherEstimate linear_rad_monte_carlo(const Eigen::MatrixXd& X, double B, int64_t n_draws,
                                          uint64_t seed);

// Domain-level complexity over n domain representatives: each draw picks one
// sample per domain and one sign per domain, value (B/n)||sum_j s_j x_j||.
// Estimates are conservative for the 1-Lipschitz loss class (contraction
// factor 1). Singleton domains with a small sign space are enumerated.
RademacherEstimate domain_level_rad(const Environment& env, double B, int64_t n_draws,
                                    uint64_t seed);

struct SpectralNormResult {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Power iteration on M^T M from a fixed seeded start vector.
SpectralNormResult spectral_norm(const Eigen::MatrixXd& M, double tol = 1e-10,
                                 int max_iter = 10000);

// ||V||_F * (||U - U0||_F + ||U0||_2); architecture constants omitted.
double neyshabur_complexity(const Eigen::MatrixXd& V, const Eigen::MatrixXd& U,
                            const Eigen::MatrixXd& U0);
double neyshabur_complexity(const MlpCheckpoint& ckpt);

}  // namespace dg
