#include "dg/complexity.hpp"

#include <cmath>
#include <vector>

#include "dg/errors.hpp"
#include "dg/rng.hpp"

namespace dg {

void HypothesisClassSpec::validate() const {
  if (!(norm_bound > 0.0)) throw DataError("hypothesis class: norm bound must be positive");
}

double linear_rad_closed_form(const Eigen::MatrixXd& X, double B) {
  if (X.rows() == 0) throw DataError("linear_rad_closed_form: empty sample");
  if (!(B > 0.0)) throw DataError("linear_rad_closed_form: B must be positive");
  return B * std::sqrt(X.squaredNorm()) / double(X.rows());
}

namespace {

RademacherEstimate summarize(const std::vector<double>& draws, RadMethod method) {
  RademacherEstimate est;
  est.method = method;
  est.n_draws = static_cast<int64_t>(draws.size());
  est.mean = kahan_sum(draws) / double(draws.size());
  if (method == RadMethod::kMonteCarlo && draws.size() > 1) {
    double ss = 0.0;
    for (double v : draws) ss += (v - est.mean) * (v - est.mean);
    est.std_error = std::sqrt(ss / double(draws.size() - 1) / double(draws.size()));
  }
  return est;
}

}  // namespace

RademacherEstimate linear_rad_monte_carlo(const Eigen::MatrixXd& X, double B, int64_t n_draws,
                                          uint64_t seed) {
  if (X.rows() == 0) throw DataError("linear_rad_monte_carlo: empty sample");
  if (!(B > 0.0)) throw DataError("linear_rad_monte_carlo: B must be positive");
  if (n_draws < 1) throw DataError("linear_rad_monte_carlo: n_draws must be >= 1");

  const Eigen::Index m = X.rows();
  const double scale = B / double(m);

  // Exact expectation when the whole sign cube fits in the budget.
  if (m < 63 && (int64_t(1) << m) <= n_draws) {
    const int64_t total = int64_t(1) << m;
    std::vector<double> values;
    values.reserve(static_cast<size_t>(total));
    for (int64_t bits = 0; bits < total; ++bits) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(X.cols());
      for (Eigen::Index i = 0; i < m; ++i)
        acc += ((bits >> i) & 1 ? 1.0 : -1.0) * X.row(i).transpose();
      values.push_back(scale * acc.norm());
    }
    return summarize(values, RadMethod::kExhaustive);
  }

  Rng rng(derive_seed(seed, "linear_rad"));
  std::vector<double> values;
  values.reserve(static_cast<size_t>(n_draws));
  for (int64_t t = 0; t < n_draws; ++t) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(X.cols());
    for (Eigen::Index i = 0; i < m; ++i) acc += rng.sign() * X.row(i).transpose();
    values.push_back(scale * acc.norm());
  }
  return summarize(values, RadMethod::kMonteCarlo);
}

RademacherEstimate domain_level_rad(const Environment& env, double B, int64_t n_draws,
                                    uint64_t seed) {
  env.validate();
  if (!(B > 0.0)) throw DataError("domain_level_rad: B must be positive");
  if (n_draws < 1) throw DataError("domain_level_rad: n_draws must be >= 1");

  const Eigen::Index n = env.n_domains();
  const double scale = B / double(n);

  bool all_singleton = true;
  for (const auto& d : env.domains)
    if (d.size() != 1) all_singleton = false;

  // With one sample per domain the only randomness is the signs; enumerate.
  if (all_singleton && n < 63 && (int64_t(1) << n) <= n_draws) {
    const int64_t total = int64_t(1) << n;
    std::vector<double> values;
    values.reserve(static_cast<size_t>(total));
    for (int64_t bits = 0; bits < total; ++bits) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(env.feature_dim);
      for (Eigen::Index j = 0; j < n; ++j)
        acc += ((bits >> j) & 1 ? 1.0 : -1.0) * env.domains[size_t(j)].features.row(0).transpose();
      values.push_back(scale * acc.norm());
    }
    return summarize(values, RadMethod::kExhaustive);
  }

  Rng rng(derive_seed(seed, "domain_rad"));
  std::vector<double> values;
  values.reserve(static_cast<size_t>(n_draws));
  for (int64_t t = 0; t < n_draws; ++t) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(env.feature_dim);
    for (const auto& d : env.domains) {
      const auto r = static_cast<Eigen::Index>(rng.uniform_int(0, d.size() - 1));
      acc += rng.sign() * d.features.row(r).transpose();
    }
    values.push_back(scale * acc.norm());
  }
  return summarize(values, RadMethod::kMonteCarlo);
}

SpectralNormResult spectral_norm(const Eigen::MatrixXd& M, double tol, int max_iter) {
  if (M.size() == 0 || M.isZero(0.0)) throw DataError("spectral_norm: zero matrix");
  if (!(tol > 0.0)) throw DataError("spectral_norm: tol must be positive");

  // Fixed seeded start keeps results reproducible across runs.
  Rng rng(derive_seed(0x9a7ec7ab, "power_iteration"));
  Eigen::VectorXd v(M.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  v.normalize();

  SpectralNormResult out;
  double sigma_prev = 0.0;
  for (int iter = 1; iter <= max_iter; ++iter) {
    Eigen::VectorXd u = M * v;
    const double sigma = u.norm();
    out.iterations = iter;
    if (sigma == 0.0) {
      // Start vector hit the null space; re-seed and continue.
      for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
      v.normalize();
      continue;
    }
    Eigen::VectorXd next = M.transpose() * u;
    v = next / next.norm();
    out.value = sigma;
    if (iter > 1 && std::abs(sigma - sigma_prev) <= tol * std::max(sigma, 1.0)) {
      out.converged = true;
      return out;
    }
    sigma_prev = sigma;
  }
  return out;  // flagged: converged stays false
}

double neyshabur_complexity(const Eigen::MatrixXd& V, const Eigen::MatrixXd& U,
                            const Eigen::MatrixXd& U0) {
  if (U.rows() != U0.rows() || U.cols() != U0.cols())
    throw DataError("neyshabur_complexity: U/U0 shape mismatch");
  if (V.cols() != U.rows()) throw DataError("neyshabur_complexity: V/U shape mismatch");
  const double v_frob = V.norm();
  if (v_frob == 0.0) return 0.0;
  return v_frob * ((U - U0).norm() + spectral_norm(U0).value);
}

double neyshabur_complexity(const MlpCheckpoint& ckpt) {
  return neyshabur_complexity(ckpt.V, ckpt.U, *ckpt.U0);
}

}  // namespace dg
