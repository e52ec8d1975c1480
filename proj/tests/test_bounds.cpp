#include <doctest.h>

#include <cmath>
#include <vector>

#include "dg/bounds.hpp"
#include "dg/errors.hpp"
#include "dg/rng.hpp"

using namespace dg;

namespace {

// Direct re-evaluation of the average-case formula, kept independent of the
// implementation under test.
double direct_average_case(double risk, double rmn, double rn, double m, double n, double delta) {
  return risk + 2.0 * rmn + 2.0 * rn + 3.0 * std::sqrt(std::log(2.0 / delta) / (2.0 * m * n)) +
         3.0 * std::sqrt(std::log(2.0 / delta) / (2.0 * n));
}

}  // namespace

TEST_CASE("average-case bound matches the frozen examples") {
  const BoundReport few = average_case_bound({0.1, 0.02, 0.05, 100, 5, 0.05});
  CHECK(few.value == doctest::Approx(2.2443).epsilon(1e-4));
  CHECK(few.vacuous);
  CHECK(few.confidence == doctest::Approx(0.9).epsilon(1e-12));

  const BoundReport many = average_case_bound({0.1, 0.02, 0.05, 100, 10000, 0.05});
  CHECK(many.value == doctest::Approx(0.2848).epsilon(1e-3));
  CHECK(!many.vacuous);

  CHECK(few.value ==
        doctest::Approx(direct_average_case(0.1, 0.02, 0.05, 100, 5, 0.05)).epsilon(1e-12));
  CHECK(many.value ==
        doctest::Approx(direct_average_case(0.1, 0.02, 0.05, 100, 10000, 0.05)).epsilon(1e-12));
}

TEST_CASE("average-case bound is monotone in every input") {
  double prev = 1e300;
  for (int64_t n : {2, 5, 20, 100, 5000}) {
    const double v = average_case_bound({0.1, 0.02, 0.05, 50, n, 0.05}).value;
    CHECK(v < prev);
    prev = v;
  }
  prev = 1e300;
  for (int64_t m : {1, 4, 40, 900}) {
    const double v = average_case_bound({0.1, 0.02, 0.05, m, 5, 0.05}).value;
    CHECK(v < prev);
    prev = v;
  }
  prev = -1.0;
  for (double r : {0.0, 0.01, 0.2, 0.5}) {
    const double v = average_case_bound({0.1, r, 0.05, 50, 5, 0.05}).value;
    CHECK(v > prev);
    prev = v;
  }
  prev = -1.0;
  for (double r : {0.0, 0.01, 0.2, 0.5}) {
    const double v = average_case_bound({0.1, 0.02, r, 50, 5, 0.05}).value;
    CHECK(v > prev);
    prev = v;
  }
  // Tighter confidence (smaller delta) loosens the bound.
  prev = -1.0;
  for (double delta : {0.25, 0.1, 0.01, 0.001}) {
    const double v = average_case_bound({0.1, 0.02, 0.05, 50, 5, delta}).value;
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("excess-risk bound matches the frozen example and vanishes in the limit") {
  const BoundReport r = excess_risk_bound(0.02, 0.05, 100, 5, 0.05);
  CHECK(r.value == doctest::Approx(1.4762).epsilon(1e-4));
  const double direct = 2.0 * 0.02 + 2.0 * 0.05 + 2.0 * 0.060736 + 2.0 * 0.607362;
  CHECK(r.value == doctest::Approx(direct).epsilon(1e-4));

  const BoundReport tiny = excess_risk_bound(0.0, 0.0, 10000000, 10000000, 0.05);
  CHECK(tiny.value < 1e-3);
}

TEST_CASE("excess risk sits strictly inside the average-case gap") {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const double risk = rng.uniform();
    const double rmn = rng.uniform() * 0.3;
    const double rn = rng.uniform() * 0.3;
    const int64_t m = rng.uniform_int(1, 1000);
    const int64_t n = rng.uniform_int(1, 1000);
    const double delta = rng.uniform(0.01, 0.49);
    const double avg = average_case_bound({risk, rmn, rn, m, n, delta}).value;
    const double exc = excess_risk_bound(rmn, rn, m, n, delta).value;
    CHECK(exc < avg - risk + 1e-12);
  }
}

TEST_CASE("tail bound collapses to the mean at zero variance") {
  for (double kappa : {0.1, 0.5, 0.9})
    CHECK(cantelli_bound(0.37, 0.0, kappa).value == 0.37);
}

TEST_CASE("tail bound arithmetic example") {
  const BoundReport r = cantelli_bound(0.2, 0.01, 0.5);
  CHECK(r.value == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(r.confidence == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("tail bound holds exhaustively on a five-domain discrete environment") {
  const std::vector<double> risks{0.05, 0.1, 0.2, 0.4, 0.7};
  double mean = 0.0;
  for (double r : risks) mean += r;
  mean /= double(risks.size());
  double var = 0.0;
  for (double r : risks) var += (r - mean) * (r - mean);
  var /= double(risks.size());

  for (double kappa : {0.05, 0.2, 0.4, 0.6, 0.9}) {
    const double bound = cantelli_bound(mean, var, kappa).value;
    double exceed = 0.0;
    for (double r : risks)
      if (r > bound) exceed += 1.0;
    CHECK(exceed / double(risks.size()) <= kappa + 1e-12);
  }
}

TEST_CASE("worst-case transform arithmetic") {
  CHECK(worst_case_transform(0.0, 0.3).value == 0.0);
  CHECK(worst_case_transform(0.25, 0.5).value == 0.75);
  CHECK(worst_case_transform(0.09, 0.1).value == doctest::Approx(0.99).epsilon(1e-12));
  const BoundReport r = worst_case_transform(0.25, 0.5, 0.05);
  CHECK(r.confidence == doctest::Approx(1.0 - (0.1 + 0.5)).epsilon(1e-12));
}

TEST_CASE("worst-case transform is strictly increasing, so argmins survive") {
  double prev = -1.0;
  for (double a = 0.0; a <= 3.0; a += 0.001) {
    const double v = worst_case_transform(a, 0.3).value;
    CHECK(v > prev);
    prev = v;
  }

  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> raw(21);
    for (auto& v : raw) v = rng.uniform() * 2.0;
    const double kappa = rng.uniform(0.05, 0.95);
    size_t argmin_raw = 0, argmin_tx = 0;
    for (size_t i = 1; i < raw.size(); ++i) {
      if (raw[i] < raw[argmin_raw]) argmin_raw = i;
      if (worst_case_transform(raw[i], kappa).value <
          worst_case_transform(raw[argmin_tx], kappa).value)
        argmin_tx = i;
    }
    CHECK(argmin_raw == argmin_tx);
  }
}

TEST_CASE("tail bound coverage under sampling from a discrete environment") {
  const std::vector<double> risks{0.02, 0.1, 0.15, 0.3, 0.8};
  const std::vector<double> probs{0.3, 0.3, 0.2, 0.15, 0.05};
  double mean = 0.0;
  for (size_t i = 0; i < risks.size(); ++i) mean += probs[i] * risks[i];
  double var = 0.0;
  for (size_t i = 0; i < risks.size(); ++i) var += probs[i] * (risks[i] - mean) * (risks[i] - mean);

  const double kappa = 0.2;
  const double bound = cantelli_bound(mean, var, kappa).value;

  Rng rng(31);
  const int64_t draws = 100000;
  int64_t exceed = 0;
  for (int64_t t = 0; t < draws; ++t) {
    double u = rng.uniform();
    size_t pick = 0;
    while (pick + 1 < probs.size() && u >= probs[pick]) {
      u -= probs[pick];
      ++pick;
    }
    if (risks[pick] > bound) ++exceed;
  }
  CHECK(double(exceed) / double(draws) <= kappa + 0.005);
}

TEST_CASE("bound inputs are validated") {
  CHECK_THROWS_AS(average_case_bound({-0.1, 0.0, 0.0, 1, 1, 0.05}), DataError);
  CHECK_THROWS_AS(average_case_bound({0.1, 0.0, 0.0, 0, 1, 0.05}), DataError);
  CHECK_THROWS_AS(average_case_bound({0.1, 0.0, 0.0, 1, 1, 0.5}), DataError);
  CHECK_THROWS_AS(average_case_bound({0.1, 0.0, 0.0, 1, 1, 0.0}), DataError);
  CHECK_THROWS_AS(cantelli_bound(0.1, -0.01, 0.5), DataError);
  CHECK_THROWS_AS(cantelli_bound(0.1, 0.01, 1.0), DataError);
  CHECK_THROWS_AS(worst_case_transform(-0.1, 0.5), DataError);
  CHECK_THROWS_AS(worst_case_transform(0.1, 0.0), DataError);
}
