#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dg/environment.hpp"
#include "dg/rng.hpp"

namespace dg {

// Bias-free 2-layer ReLU network over fixed features. The initial first
// layer is retained (frozen) for distance-from-initialisation measures.
struct Mlp2 {
  Eigen::MatrixXd U;  // h x d first layer
  Eigen::MatrixXd V;  // K x h second layer
  std::shared_ptr<const Eigen::MatrixXd> U0;

  int hidden() const { return static_cast<int>(U.rows()); }
  int input_dim() const { return static_cast<int>(U.cols()); }
  int num_classes() const { return static_cast<int>(V.rows()); }
};

// Entries of U and V are uniform on +-1/sqrt(fan_in), so entry variance is
// 1/(3*fan_in). U0 is a frozen copy of the initial U.
Mlp2 init_mlp(int input_dim, int hidden, int num_classes, uint64_t seed);

struct TrainSchedule {
  int64_t steps = 3000;
  int64_t checkpoint_every = 300;
  double learning_rate = 1e-2;
  int batch_size = 64;
  uint64_t seed = 0;

  void validate() const;
};

enum class PenaltyKind { kErm, kVrex, kMixup };

struct PenaltyPlugin {
  PenaltyKind kind = PenaltyKind::kErm;
  double lambda = 0.0;  // vrex weight
  double alpha = 0.2;   // mixup Beta(alpha, alpha)

  void validate() const;
  static PenaltyPlugin erm() { return {}; }
  static PenaltyPlugin vrex(double lambda) { return {PenaltyKind::kVrex, lambda, 0.2}; }
  static PenaltyPlugin mixup(double alpha) { return {PenaltyKind::kMixup, 0.0, alpha}; }
};

struct MlpCheckpoint {
  int64_t step = 0;
  Eigen::MatrixXd U;
  Eigen::MatrixXd V;
  std::shared_ptr<const Eigen::MatrixXd> U0;
  double train_loss = 0.0;  // per-domain-mean cross-entropy on the full training set
};

// One minibatch drawn from a single domain.
struct DomainBatch {
  Eigen::MatrixXd X;
  Eigen::VectorXi y;
};

// Convex feature blend with paired targets; row i mixes with weight lam(i).
struct MixedBatch {
  Eigen::MatrixXd X;
  Eigen::VectorXi y_a, y_b;
  Eigen::VectorXd lam;
};

// lambda * population variance of the per-domain risks.
double vrex_penalty(const std::vector<double>& per_domain_risks, double lambda);

MixedBatch mixup_batch(const DomainBatch& a, const DomainBatch& b, double alpha, uint64_t seed);
MixedBatch mixup_batch(const DomainBatch& a, const DomainBatch& b, double alpha, Rng& rng);

// The deterministic blend behind mixup_batch, with caller-chosen weights.
MixedBatch mix_with_lambdas(const DomainBatch& a, const DomainBatch& b,
                            const Eigen::VectorXd& lambdas);

struct MlpGrads {
  Eigen::MatrixXd dU;
  Eigen::MatrixXd dV;
  double loss = 0.0;
};

// Objective on explicit batches: mean cross-entropy per domain, averaged
// across domains, plus the vrex penalty when configured. Factored out of the
// training loop so gradients can be checked against finite differences.
double mlp_loss(const Mlp2& mlp, const std::vector<DomainBatch>& batches,
                const PenaltyPlugin& plugin);
MlpGrads mlp_grad(const Mlp2& mlp, const std::vector<DomainBatch>& batches,
                  const PenaltyPlugin& plugin);

// Mixup objective: mean over mixed batches of the blended cross-entropy.
double mlp_loss_mixed(const Mlp2& mlp, const std::vector<MixedBatch>& batches);
MlpGrads mlp_grad_mixed(const Mlp2& mlp, const std::vector<MixedBatch>& batches);

// Minibatch SGD; checkpoints at step 0, every checkpoint_every steps, and the
// final step. Throws NumericError if the loss goes non-finite.
std::vector<MlpCheckpoint> train_mlp(const Environment& env_train, const TrainSchedule& schedule,
                                     const PenaltyPlugin& plugin, int hidden = 256);

double mlp_accuracy(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V, const Dataset& data);
double mlp_domain_mean_ce(const Mlp2& mlp, const Environment& env);

void save_checkpoint(const MlpCheckpoint& ckpt, const std::string& path);
MlpCheckpoint load_checkpoint(const std::string& path);

}  // namespace dg
