#pragma once

#include <cstdint>
#include <limits>

namespace dg {

// Inputs to the average-case generalisation bound for a [0,1]-valued
// 1-Lipschitz loss: empirical risk over the source domains, instance-level
// complexity over all m*n samples, domain-level complexity over n domains.
struct BoundInputs {
  double empirical_risk = 0.0;
  double rad_mn = 0.0;
  double rad_n = 0.0;
  int64_t m = 1;
  int64_t n = 1;
  double delta = 0.05;

  void validate() const;
};

enum class BoundKind { kAverageCase, kExcessRisk, kWorstCase, kCantelli };

struct BoundReport {
  BoundKind kind = BoundKind::kAverageCase;
  double value = 0.0;
  double confidence = 0.0;
  bool vacuous = false;  // value > 1; reported raw, never clipped
  BoundInputs inputs;
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double variance = std::numeric_limits<double>::quiet_NaN();
  double avg_case_bound = std::numeric_limits<double>::quiet_NaN();
};

// risk + 2*rad_mn + 2*rad_n + 3*sqrt(ln(2/d)/(2mn)) + 3*sqrt(ln(2/d)/(2n)),
// holding with confidence 1 - 2*delta.
BoundReport average_case_bound(const BoundInputs& inputs);

// ERM excess risk: 2*rad_mn + 2*rad_n + 2*sqrt(ln(2/d)/(2mn)) + 2*sqrt(ln(2/d)/(2n)).
BoundReport excess_risk_bound(double rad_mn, double rad_n, int64_t m, int64_t n, double delta);

// One-sided Chebyshev tail: env_risk + sqrt(((1-kappa)/kappa) * variance),
// holding for a fresh domain with confidence 1 - kappa.
BoundReport cantelli_bound(double env_risk, double variance, double kappa);

// Lifts an average-case bound A to a per-domain bound A + sqrt(((1-kappa)/kappa)*A)
// via the variance bound Var <= L. Confidence 1 - (2*delta + kappa); the
// transform is strictly increasing in A, so per-C argmins are preserved.
BoundReport worst_case_transform(double A, double kappa, double delta = 0.05);

}  // namespace dg
