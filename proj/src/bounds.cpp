#include "dg/bounds.hpp"

#include <cmath>

#include "dg/errors.hpp"

namespace dg {

namespace {

void check_delta(double delta) {
  if (!(delta > 0.0 && delta < 0.5))
    throw DataError("bounds: delta must lie in (0, 0.5)");
}

void check_kappa(double kappa) {
  if (!(kappa > 0.0 && kappa < 1.0)) throw DataError("bounds: kappa must lie in (0, 1)");
}

double deviation_term(double delta, double denom) {
  return std::sqrt(std::log(2.0 / delta) / (2.0 * denom));
}

}  // namespace

void BoundInputs::validate() const {
  if (!(empirical_risk >= 0.0 && empirical_risk <= 1.0))
    throw DataError("bounds: empirical risk must lie in [0, 1]");
  if (rad_mn < 0.0 || rad_n < 0.0) throw DataError("bounds: complexity terms must be >= 0");
  if (m < 1 || n < 1) throw DataError("bounds: m and n must be >= 1");
  check_delta(delta);
}

BoundReport average_case_bound(const BoundInputs& inputs) {
  inputs.validate();
  const double mn = double(inputs.m) * double(inputs.n);
  BoundReport r;
  r.kind = BoundKind::kAverageCase;
  r.inputs = inputs;
  r.value = inputs.empirical_risk + 2.0 * inputs.rad_mn + 2.0 * inputs.rad_n +
            3.0 * deviation_term(inputs.delta, mn) + 3.0 * deviation_term(inputs.delta, double(inputs.n));
  r.confidence = 1.0 - 2.0 * inputs.delta;
  r.vacuous = r.value > 1.0;
  return r;
}

BoundReport excess_risk_bound(double rad_mn, double rad_n, int64_t m, int64_t n, double delta) {
  BoundInputs inputs{0.0, rad_mn, rad_n, m, n, delta};
  inputs.validate();
  BoundReport r;
  r.kind = BoundKind::kExcessRisk;
  r.inputs = inputs;
  r.value = 2.0 * rad_mn + 2.0 * rad_n + 2.0 * deviation_term(delta, double(m) * double(n)) +
            2.0 * deviation_term(delta, double(n));
  r.confidence = 1.0 - 2.0 * delta;
  r.vacuous = r.value > 1.0;
  return r;
}

BoundReport cantelli_bound(double env_risk, double variance, double kappa) {
  check_kappa(kappa);
  if (variance < 0.0) throw DataError("bounds: variance must be >= 0");
  if (env_risk < 0.0) throw DataError("bounds: env risk must be >= 0");
  BoundReport r;
  r.kind = BoundKind::kCantelli;
  r.value = env_risk + std::sqrt((1.0 - kappa) / kappa * variance);
  r.confidence = 1.0 - kappa;
  r.vacuous = r.value > 1.0;
  r.kappa = kappa;
  r.variance = variance;
  r.inputs.empirical_risk = env_risk;
  return r;
}

BoundReport worst_case_transform(double A, double kappa, double delta) {
  check_kappa(kappa);
  check_delta(delta);
  if (A < 0.0) throw DataError("bounds: average-case bound must be >= 0");
  BoundReport r;
  r.kind = BoundKind::kWorstCase;
  r.value = A + std::sqrt((1.0 - kappa) / kappa * A);
  r.confidence = 1.0 - (2.0 * delta + kappa);
  r.vacuous = r.value > 1.0;
  r.kappa = kappa;
  r.avg_case_bound = A;
  r.inputs.delta = delta;
  return r;
}

}  // namespace dg
