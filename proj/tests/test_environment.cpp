#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dg/environment.hpp"
#include "dg/errors.hpp"
#include "dg/matrix_io.hpp"
#include "dg/rng.hpp"

using namespace dg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / "dg_env_tests";
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return s;
}

// Samples keyed as strings so multiset identities can be checked exactly.
std::multiset<std::string> sample_multiset(const Domain& d) {
  std::multiset<std::string> out;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    std::string key = std::to_string(d.labels(i));
    for (Eigen::Index j = 0; j < d.feature_dim(); ++j)
      key += "|" + format_real(d.features(i, j));
    out.insert(key);
  }
  return out;
}

}  // namespace

TEST_CASE("synth generator is deterministic given the seed") {
  SynthSpec spec;
  spec.n_domains = 3;
  spec.m_per_domain = 50;
  spec.feature_dim = 4;
  spec.num_classes = 2;
  spec.shift_scale = 1.5;
  spec.label_noise = 0.1;
  spec.seed = 7;
  const Environment a = synth_environment(spec);
  const Environment b = synth_environment(spec);
  REQUIRE(a.n_domains() == b.n_domains());
  for (Eigen::Index j = 0; j < a.n_domains(); ++j) {
    CHECK(a.domains[j].features == b.domains[j].features);
    CHECK(a.domains[j].labels == b.domains[j].labels);
  }
}

TEST_CASE("synth spec validation") {
  SynthSpec spec;
  spec.m_per_domain = 3;  // < 2K
  CHECK_THROWS_AS(synth_environment(spec), DataError);
  spec.m_per_domain = 10;
  spec.label_noise = 0.5;
  CHECK_THROWS_AS(synth_environment(spec), DataError);
  spec.label_noise = 0.0;
  spec.shift_scale = -1.0;
  CHECK_THROWS_AS(synth_environment(spec), DataError);
}

TEST_CASE("zero shift gives identically distributed domains") {
  SynthSpec spec;
  spec.n_domains = 3;
  spec.m_per_domain = 10000;
  spec.feature_dim = 4;
  spec.num_classes = 2;
  spec.shift_scale = 0.0;
  spec.label_noise = 0.0;
  spec.seed = 11;
  const Environment env = synth_environment(spec);

  // A fixed scorer's per-domain ramp risks agree within sampling error.
  const SynthMeans means = synth_means(spec);
  const Eigen::VectorXd dir = (means.anchors.row(0) - means.anchors.row(1)).transpose();
  std::vector<double> risks;
  for (const auto& d : env.domains) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      const double score = d.features.row(i).dot(dir);
      const double margin = d.labels(i) == 0 ? score : -score;
      sum += std::clamp(1.0 - margin, 0.0, 1.0);
    }
    risks.push_back(sum / double(d.size()));
  }
  const auto [lo, hi] = std::minmax_element(risks.begin(), risks.end());
  CHECK(*hi - *lo < 3.0 / std::sqrt(double(spec.m_per_domain)));
}

TEST_CASE("offset geometry matches a direct Monte-Carlo of the definition") {
  // Mean distance between two domains' class means is the mean distance of
  // two independent sphere vectors of the shift radius.
  SynthSpec spec;
  spec.n_domains = 200;
  spec.m_per_domain = 4;
  spec.feature_dim = 2;
  spec.num_classes = 2;
  spec.shift_scale = 3.0;
  spec.seed = 13;
  const SynthMeans means = synth_means(spec);

  double realized_sum = 0.0;
  int64_t realized_count = 0;
  for (int c = 0; c < spec.num_classes; ++c)
    for (size_t a = 0; a < means.domain_means.size(); ++a)
      for (size_t b = a + 1; b < means.domain_means.size(); ++b) {
        realized_sum += (means.domain_means[a].row(c) - means.domain_means[b].row(c)).norm();
        ++realized_count;
      }
  const double realized = realized_sum / double(realized_count);

  // Independent oracle: 1e5 draws of ||u - v||, u and v uniform on the
  // radius-3 sphere, sampled by normalising Gaussian pairs directly.
  Rng rng(4242);
  const int64_t draws = 100000;
  double oracle_sum = 0.0, oracle_sum2 = 0.0;
  for (int64_t t = 0; t < draws; ++t) {
    double u0 = rng.normal(), u1 = rng.normal();
    double v0 = rng.normal(), v1 = rng.normal();
    const double nu = std::hypot(u0, u1), nv = std::hypot(v0, v1);
    u0 = 3.0 * u0 / nu;
    u1 = 3.0 * u1 / nu;
    v0 = 3.0 * v0 / nv;
    v1 = 3.0 * v1 / nv;
    const double dist = std::hypot(u0 - v0, u1 - v1);
    oracle_sum += dist;
    oracle_sum2 += dist * dist;
  }
  const double oracle_mean = oracle_sum / double(draws);
  const double oracle_sd = std::sqrt(oracle_sum2 / double(draws) - oracle_mean * oracle_mean);

  // Pairwise terms are dependent, so allow a generous multiple of the sd of
  // a single pair distance divided by sqrt(#domains).
  CHECK(std::abs(realized - oracle_mean) <
        4.0 * oracle_sd / std::sqrt(double(spec.n_domains)));
  // And the oracle itself sits near shift*sqrt(2) scaled by the d=2 chord factor.
  CHECK(oracle_mean == doctest::Approx(3.0 * 4.0 / M_PI).epsilon(0.01));
}

TEST_CASE("generator samples concentrate around the declared means") {
  SynthSpec spec;
  spec.n_domains = 3;
  spec.m_per_domain = 6000;
  spec.feature_dim = 3;
  spec.num_classes = 2;
  spec.shift_scale = 2.0;
  spec.seed = 21;
  const Environment env = synth_environment(spec);
  const SynthMeans means = synth_means(spec);
  const Eigen::VectorXd sigma = synth_noise_scales(spec.feature_dim);
  for (int dom = 0; dom < spec.n_domains; ++dom) {
    const Domain& d = env.domains[size_t(dom)];
    for (int c = 0; c < spec.num_classes; ++c) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(spec.feature_dim);
      int64_t count = 0;
      for (Eigen::Index i = 0; i < d.size(); ++i)
        if (d.labels(i) == c) {
          acc += d.features.row(i).transpose();
          ++count;
        }
      acc /= double(count);
      for (int j = 0; j < spec.feature_dim; ++j)
        CHECK(std::abs(acc(j) - means.domain_means[size_t(dom)](c, j)) <
              5.0 * sigma(j) / std::sqrt(double(count)));
    }
  }
}

TEST_CASE("label noise flips roughly the configured fraction") {
  SynthSpec spec;
  spec.n_domains = 1;
  spec.m_per_domain = 40000;
  spec.feature_dim = 2;
  spec.num_classes = 2;
  spec.label_noise = 0.2;
  spec.seed = 3;
  const Environment env = synth_environment(spec);
  // Classes are generated in balanced blocks; count labels disagreeing with
  // the block layout.
  const Domain& d = env.domains[0];
  const Eigen::Index half = d.size() / 2;
  int64_t flipped = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const int intended = i < half ? 0 : 1;
    if (d.labels(i) != intended) ++flipped;
  }
  CHECK(std::abs(double(flipped) / double(d.size()) - 0.2) < 0.01);
}

TEST_CASE("feature csv loads trivial files") {
  const auto dir = temp_dir();
  const auto p = dir / "two_rows.csv";
  {
    std::ofstream os(p, std::ios::binary);
    os << "domain,label,f0,f1\n";
    os << "a,0,0.5,1\n";
    os << "a,1,-2,0.25\n";
  }
  const Environment env = load_feature_csv(p.string());
  CHECK(env.n_domains() == 1);
  CHECK(env.domains[0].size() == 2);
  CHECK(env.feature_dim == 2);
  CHECK(env.num_classes == 2);
  CHECK(env.domains[0].features(1, 0) == -2.0);
}

TEST_CASE("feature csv groups rows by domain in first-appearance order") {
  const auto dir = temp_dir();
  const auto p = dir / "three_domains.csv";
  {
    std::ofstream os(p, std::ios::binary);
    os << "domain,label,f0\n";
    os << "x,0,1\n";
    os << "y,0,2\n";
    os << "x,1,3\n";
    os << "z,1,4\n";
  }
  const Environment env = load_feature_csv(p.string());
  REQUIRE(env.n_domains() == 3);
  CHECK(env.domains[0].id == "x");
  CHECK(env.domains[0].size() == 2);
  CHECK(env.domains[1].id == "y");
  CHECK(env.domains[1].size() == 1);
  CHECK(env.domains[2].id == "z");
}

TEST_CASE("feature csv rejects malformed input with line numbers") {
  const auto dir = temp_dir();
  auto write = [&](const char* name, const std::string& body) {
    const auto p = dir / name;
    std::ofstream os(p, std::ios::binary);
    os << body;
    return p.string();
  };

  const auto ragged = write("ragged.csv", "domain,label,f0,f1\na,0,1,2\na,0,1\n");
  CHECK_THROWS_WITH_AS(load_feature_csv(ragged), doctest::Contains(":3:"), DataError);

  const auto nonnum = write("nonnum.csv", "domain,label,f0\na,0,oops\n");
  CHECK_THROWS_WITH_AS(load_feature_csv(nonnum), doctest::Contains(":2:"), DataError);

  const auto badheader = write("badheader.csv", "dom,label,f0\na,0,1\n");
  CHECK_THROWS_AS(load_feature_csv(badheader), DataError);

  const auto badfeature = write("badfcol.csv", "domain,label,f0,g1\na,0,1,2\n");
  CHECK_THROWS_AS(load_feature_csv(badfeature), DataError);
}

TEST_CASE("feature csv round-trips byte-identically once canonical") {
  SynthSpec spec;
  spec.n_domains = 2;
  spec.m_per_domain = 20;
  spec.feature_dim = 3;
  spec.num_classes = 2;
  spec.shift_scale = 0.7;
  spec.seed = 5;
  const Environment env = synth_environment(spec);

  const auto dir = temp_dir();
  const auto p1 = dir / "rt1.csv";
  const auto p2 = dir / "rt2.csv";
  save_feature_csv(env, p1.string());
  const Environment loaded = load_feature_csv(p1.string());
  save_feature_csv(loaded, p2.string());
  CHECK(read_file(p1) == read_file(p2));
}

namespace {

void write_be32(std::ofstream& os, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_idx_pair(const fs::path& images, const fs::path& labels,
                    const std::vector<std::vector<unsigned char>>& pixel_rows, uint32_t side,
                    const std::vector<unsigned char>& labs) {
  std::ofstream os(images, std::ios::binary);
  write_be32(os, 0x00000803u);
  write_be32(os, static_cast<uint32_t>(pixel_rows.size()));
  write_be32(os, side);
  write_be32(os, side);
  for (const auto& row : pixel_rows)
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  std::ofstream ls(labels, std::ios::binary);
  write_be32(ls, 0x00000801u);
  write_be32(ls, static_cast<uint32_t>(labs.size()));
  ls.write(reinterpret_cast<const char*>(labs.data()), static_cast<std::streamsize>(labs.size()));
}

}  // namespace

TEST_CASE("idx loader reads hand-built files and scales pixels") {
  const auto dir = temp_dir();
  const auto images = dir / "imgs-idx3-ubyte";
  const auto labels = dir / "labs-idx1-ubyte";
  std::vector<std::vector<unsigned char>> pix(2, std::vector<unsigned char>(28 * 28, 0));
  write_idx_pair(images, labels, pix, 28, {3, 7});

  const Domain d = load_idx(images.string(), labels.string());
  CHECK(d.size() == 2);
  CHECK(d.feature_dim() == 28 * 28);
  CHECK(d.features.isZero(0.0));
  CHECK(d.labels(0) == 3);
  CHECK(d.labels(1) == 7);
}

TEST_CASE("idx loader matches an independent byte-offset reader") {
  const auto dir = temp_dir();
  const auto images = dir / "pat-idx3-ubyte";
  const auto labels = dir / "pat-idx1-ubyte";
  std::vector<std::vector<unsigned char>> pix;
  for (int i = 0; i < 3; ++i) {
    std::vector<unsigned char> row(16);
    for (int p = 0; p < 16; ++p) row[size_t(p)] = static_cast<unsigned char>((i * 37 + p * 11) % 251);
    pix.push_back(row);
  }
  write_idx_pair(images, labels, pix, 4, {1, 2, 3});
  const Domain d = load_idx(images.string(), labels.string());

  // Oracle: raw byte reads at offset 16 + i*16 + p.
  std::ifstream raw(images, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(raw)), std::istreambuf_iterator<char>());
  for (int i = 0; i < 3; ++i) {
    double oracle_sum = 0.0;
    for (int p = 0; p < 16; ++p)
      oracle_sum += static_cast<unsigned char>(bytes[size_t(16 + i * 16 + p)]) / 255.0;
    CHECK(d.features.row(i).sum() == doctest::Approx(oracle_sum).epsilon(1e-15));
  }
}

TEST_CASE("idx loader rejects bad magic, count mismatch and truncation") {
  const auto dir = temp_dir();
  const auto images = dir / "b-idx3-ubyte";
  const auto labels = dir / "b-idx1-ubyte";
  std::vector<std::vector<unsigned char>> pix(1, std::vector<unsigned char>(4, 9));
  write_idx_pair(images, labels, pix, 2, {0});

  // Labels file passed where images belong: wrong magic.
  CHECK_THROWS_WITH_AS(load_idx(labels.string(), labels.string()),
                       doctest::Contains("wrong magic"), DataError);

  const auto labels2 = dir / "b2-idx1-ubyte";
  {
    std::ofstream ls(labels2, std::ios::binary);
    write_be32(ls, 0x00000801u);
    write_be32(ls, 2);  // claims two labels
    const unsigned char lab = 0;
    ls.write(reinterpret_cast<const char*>(&lab), 1);
  }
  CHECK_THROWS_WITH_AS(load_idx(images.string(), labels2.string()), doctest::Contains("mismatch"),
                       DataError);

  const auto trunc = dir / "t-idx3-ubyte";
  {
    std::ofstream os(trunc, std::ios::binary);
    write_be32(os, 0x00000803u);
    write_be32(os, 1);
    write_be32(os, 2);
    write_be32(os, 2);
    const unsigned char px[2] = {1, 2};  // 2 of 4 pixels
    os.write(reinterpret_cast<const char*>(px), 2);
  }
  CHECK_THROWS_WITH_AS(load_idx(trunc.string(), labels.string()), doctest::Contains("truncated"),
                       DataError);
}

namespace {

Domain image_domain(const std::vector<double>& img, int side) {
  Domain d;
  d.id = "img";
  d.features.resize(1, side * side);
  for (int i = 0; i < side * side; ++i) d.features(0, i) = img[size_t(i)];
  d.labels.resize(1);
  d.labels(0) = 0;
  return d;
}

// Independent per-pixel inverse-mapping oracle for image rotation.
double oracle_rotated_pixel(const std::vector<double>& img, int side, double angle_deg, int r,
                            int c) {
  const double theta = angle_deg * M_PI / 180.0;
  const double centre = (side - 1) / 2.0;
  const double dr = r - centre, dc = c - centre;
  const double sr = centre + std::cos(theta) * dr - std::sin(theta) * dc;
  const double sc = centre + std::sin(theta) * dr + std::cos(theta) * dc;
  const int r0 = int(std::floor(sr)), c0 = int(std::floor(sc));
  const double fr = sr - r0, fc = sc - c0;
  auto at = [&](int rr, int cc) {
    if (rr < 0 || rr >= side || cc < 0 || cc >= side) return 0.0;
    return img[size_t(rr * side + cc)];
  };
  return (1 - fr) * (1 - fc) * at(r0, c0) + (1 - fr) * fc * at(r0, c0 + 1) +
         fr * (1 - fc) * at(r0 + 1, c0) + fr * fc * at(r0 + 1, c0 + 1);
}

}  // namespace

TEST_CASE("rotation by zero degrees is the identity") {
  Rng rng(31);
  std::vector<double> img(49);
  for (auto& v : img) v = rng.uniform();
  const Domain d = image_domain(img, 7);
  const Domain r = rotate_domain(d, 0.0);
  CHECK(r.features == d.features);
  CHECK(r.labels == d.labels);
}

TEST_CASE("rotating a constant image keeps the interior constant") {
  std::vector<double> img(81, 0.6);
  const Domain d = image_domain(img, 9);
  const Domain r = rotate_domain(d, 33.0);
  // Centre pixel maps to itself.
  CHECK(r.features(0, 4 * 9 + 4) == doctest::Approx(0.6).epsilon(1e-12));
  // Inner pixels stay constant; only frame-edge pixels may blend with padding.
  for (int rr = 2; rr < 7; ++rr)
    for (int cc = 2; cc < 7; ++cc)
      CHECK(r.features(0, rr * 9 + cc) == doctest::Approx(0.6).epsilon(1e-9));
  // Corners blend toward the zero padding.
  CHECK(r.features(0, 0) < 0.6);
}

TEST_CASE("rotation matches the brute-force inverse-map oracle") {
  const int side = 11;
  std::vector<double> img(size_t(side * side), 0.0);
  img[size_t(3 * side + 7)] = 1.0;  // single on pixel
  const Domain d = image_domain(img, side);
  const Domain r = rotate_domain(d, 15.0);
  for (int rr = 0; rr < side; ++rr)
    for (int cc = 0; cc < side; ++cc)
      CHECK(r.features(0, rr * side + cc) ==
            doctest::Approx(oracle_rotated_pixel(img, side, 15.0, rr, cc)).epsilon(1e-6));
}

TEST_CASE("rotation composed with its inverse restores smooth images") {
  const int side = 21;
  const double centre = (side - 1) / 2.0;
  std::vector<double> img(size_t(side * side));
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      const double dr = (r - centre) / 7.5, dc = (c - centre) / 7.5;
      img[size_t(r * side + c)] = std::exp(-(dr * dr + dc * dc));
    }
  const Domain d = image_domain(img, side);
  const Domain back = rotate_domain(rotate_domain(d, 20.0), -20.0);
  for (int i = 0; i < side * side; ++i) {
    // Skip the frame, where padding legitimately erases mass.
    const int r = i / side, c = i % side;
    if (r < 2 || r >= side - 2 || c < 2 || c >= side - 2) continue;
    CHECK(std::abs(back.features(0, i) - d.features(0, i)) < 2e-2);
  }
}

TEST_CASE("rotation rejects non-square feature counts") {
  Domain d;
  d.id = "bad";
  d.features.resize(1, 10);
  d.features.setZero();
  d.labels.resize(1);
  d.labels(0) = 0;
  CHECK_THROWS_AS(rotate_domain(d, 10.0), DataError);
}

namespace {

Environment toy_env(int n_domains, int per_class, int k, uint64_t seed) {
  SynthSpec spec;
  spec.n_domains = n_domains;
  spec.m_per_domain = per_class * k;
  spec.feature_dim = 3;
  spec.num_classes = k;
  spec.shift_scale = 1.0;
  spec.seed = seed;
  return synth_environment(spec);
}

}  // namespace

TEST_CASE("split keeps both classes on both sides of a 10-sample domain") {
  const Environment env = toy_env(1, 5, 2, 17);
  const auto [train, test] = split_environment(env, 0.5, 3);
  CHECK(train.domains[0].size() == 5);
  CHECK(test.domains[0].size() == 5);
  for (const auto* part : {&train, &test}) {
    std::set<int> classes;
    for (Eigen::Index i = 0; i < part->domains[0].size(); ++i)
      classes.insert(part->domains[0].labels(i));
    CHECK(classes.size() == 2);
  }
}

TEST_CASE("split is deterministic and partitions the multiset") {
  const Environment env = toy_env(3, 8, 3, 23);
  const auto [tr1, te1] = split_environment(env, 0.7, 99);
  const auto [tr2, te2] = split_environment(env, 0.7, 99);
  for (Eigen::Index j = 0; j < env.n_domains(); ++j) {
    CHECK(tr1.domains[size_t(j)].features == tr2.domains[size_t(j)].features);
    CHECK(te1.domains[size_t(j)].labels == te2.domains[size_t(j)].labels);

    // Multiset oracle: train + test == original, and they are disjoint by rows.
    auto combined = sample_multiset(tr1.domains[size_t(j)]);
    for (const auto& key : sample_multiset(te1.domains[size_t(j)])) combined.insert(key);
    CHECK(combined == sample_multiset(env.domains[size_t(j)]));
    CHECK(tr1.domains[size_t(j)].size() + te1.domains[size_t(j)].size() ==
          env.domains[size_t(j)].size());
  }
}

TEST_CASE("split refuses classes with fewer than two samples") {
  Domain d;
  d.id = "tiny";
  d.features.resize(3, 1);
  d.features << 0, 1, 2;
  d.labels.resize(3);
  d.labels << 0, 0, 1;  // class 1 has a single sample
  Environment env;
  env.domains.push_back(d);
  env.num_classes = 2;
  env.feature_dim = 1;
  CHECK_THROWS_WITH_AS(split_environment(env, 0.5, 1), doctest::Contains("split error"),
                       DataError);
}

TEST_CASE("equalize truncates to the minimum domain size") {
  Environment env = toy_env(3, 5, 2, 29);
  env.domains[1].features.conservativeResize(7, Eigen::NoChange);
  env.domains[1].labels.conservativeResize(7);
  env.domains[2].features.conservativeResize(9, Eigen::NoChange);
  env.domains[2].labels.conservativeResize(9);

  const Environment eq = equalize_m(env, 5);
  for (const auto& d : eq.domains) CHECK(d.size() == 7);

  // Each equalized domain is a sub-multiset of its original.
  for (size_t j = 0; j < env.domains.size(); ++j) {
    const auto orig = sample_multiset(env.domains[j]);
    for (const auto& key : sample_multiset(eq.domains[j])) CHECK(orig.count(key) >= 1);
  }
}

TEST_CASE("equalize leaves already-equal domains unchanged") {
  const Environment env = toy_env(3, 5, 2, 31);
  const Environment eq = equalize_m(env, 5);
  for (size_t j = 0; j < env.domains.size(); ++j) {
    CHECK(eq.domains[j].features == env.domains[j].features);
    CHECK(eq.domains[j].labels == env.domains[j].labels);
  }
}

TEST_CASE("environment validation catches inconsistencies") {
  Environment env;
  CHECK_THROWS_AS(env.validate(), DataError);

  Domain d;
  d.id = "a";
  d.features.resize(2, 2);
  d.features.setZero();
  d.labels.resize(2);
  d.labels << 0, 5;
  env.domains.push_back(d);
  env.num_classes = 2;
  env.feature_dim = 2;
  CHECK_THROWS_WITH_AS(env.validate(), doctest::Contains("out of range"), DataError);

  env.domains[0].labels << 0, 1;
  CHECK_NOTHROW(env.validate());
  env.domains[0].features(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(env.validate(), doctest::Contains("non-finite"), DataError);
}
