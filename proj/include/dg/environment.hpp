#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dg {

struct Sample {
  Eigen::VectorXd features;
  int label = 0;
};

// One data distribution's sample set. Samples are stored row-major in a
// feature matrix; row order is significant for round-trip guarantees.
struct Domain {
  std::string id;
  Eigen::MatrixXd features;  // one row per sample
  Eigen::VectorXi labels;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index feature_dim() const { return features.cols(); }
  Sample sample(Eigen::Index i) const { return {features.row(i).transpose(), labels(i)}; }
};

// A collection of domains drawn from a common environment distribution.
struct Environment {
  std::vector<Domain> domains;
  int num_classes = 0;
  int feature_dim = 0;

  Eigen::Index n_domains() const { return static_cast<Eigen::Index>(domains.size()); }
  Eigen::Index min_domain_size() const;
  const Domain& domain_by_id(const std::string& id) const;
  bool has_domain(const std::string& id) const;

  // Throws DataError if any invariant is violated: at least one nonempty
  // domain, consistent feature dimension, finite features, labels in [0, K).
  void validate() const;
};

// Synthetic multi-domain Gaussian generator. Each class has a shared anchor
// drawn from N(0, I); each (domain, class) pair adds an offset of exactly
// `shift_scale` norm drawn uniformly on the sphere. Samples are the mean plus
// unit-variance Gaussian noise, spread as evenly as possible over classes,
// and labels are flipped to a uniformly random other class with probability
// `label_noise`.
struct SynthSpec {
  int n_domains = 2;
  int m_per_domain = 100;
  int feature_dim = 2;
  int num_classes = 2;
  double shift_scale = 0.0;
  double label_noise = 0.0;
  uint64_t seed = 0;

  void validate() const;
};

// The deterministic mean structure behind synth_environment, exposed so the
// generator can be checked against its own definition.
struct SynthMeans {
  Eigen::MatrixXd anchors;                   // K x d shared class anchors
  std::vector<Eigen::MatrixXd> domain_means; // per domain: K x d anchor+offset
};

SynthMeans synth_means(const SynthSpec& spec);

// Per-dimension noise standard deviations used by the generator (log-spaced
// octaves; anchor contrasts track them, offsets are isotropic in raw units).
Eigen::VectorXd synth_noise_scales(int feature_dim);

Environment synth_environment(const SynthSpec& spec);

// Feature CSV interchange: header "domain,label,f0,...,f{d-1}", UTF-8,
// '.' decimal separator. One file holds one environment.
Environment load_feature_csv(const std::string& path);
void save_feature_csv(const Environment& env, const std::string& path);

// IDX image/label pair (big-endian, magics 0x00000803 / 0x00000801).
// Pixel features are scaled to [0,1]. The domain id is the image file stem.
Domain load_idx(const std::string& images_path, const std::string& labels_path);

// Rotates every image about its centre by `angle_deg` (bilinear sampling,
// zero padding outside the frame). Features must form square images.
Domain rotate_domain(const Domain& domain, double angle_deg);

// Per-domain stratified shuffle split; train/test are disjoint and their
// union is the input. Deterministic given the seed.
std::pair<Environment, Environment> split_environment(const Environment& env,
                                                      double train_frac, uint64_t seed);

// Truncates every domain to the minimum domain size by seeded uniform
// subsampling without replacement (original order preserved).
Environment equalize_m(const Environment& env, uint64_t seed);

// Pooled views used by trainers.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXi y;
  Eigen::Index size() const { return X.rows(); }
};

Dataset pool(const Environment& env);
Dataset pool_excluding(const Environment& env, const std::string& heldout_id);
Dataset domain_dataset(const Domain& d);
Environment drop_domain(const Environment& env, const std::string& id);

}  // namespace dg
