#include "dg/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dg/errors.hpp"
#include "dg/matrix_io.hpp"

namespace dg {

void TrainSchedule::validate() const {
  if (steps < 0) throw DataError("schedule: steps must be >= 0");
  if (checkpoint_every < 1) throw DataError("schedule: checkpoint_every must be >= 1");
  if (!(learning_rate > 0.0)) throw DataError("schedule: learning_rate must be positive");
  if (batch_size < 1) throw DataError("schedule: batch_size must be >= 1");
}

void PenaltyPlugin::validate() const {
  if (lambda < 0.0) throw DataError("penalty: lambda must be >= 0");
  if (!(alpha > 0.0)) throw DataError("penalty: alpha must be positive");
}

Mlp2 init_mlp(int input_dim, int hidden, int num_classes, uint64_t seed) {
  if (input_dim < 1 || hidden < 1 || num_classes < 1)
    throw DataError("init_mlp: dimensions must be >= 1");
  Mlp2 mlp;
  mlp.U.resize(hidden, input_dim);
  mlp.V.resize(num_classes, hidden);
  const double au = 1.0 / std::sqrt(double(input_dim));
  const double av = 1.0 / std::sqrt(double(hidden));
  Rng ur(derive_seed(seed, "mlp/init/U"));
  Rng vr(derive_seed(seed, "mlp/init/V"));
  for (int r = 0; r < hidden; ++r)
    for (int c = 0; c < input_dim; ++c) mlp.U(r, c) = ur.uniform(-au, au);
  for (int r = 0; r < num_classes; ++r)
    for (int c = 0; c < hidden; ++c) mlp.V(r, c) = vr.uniform(-av, av);
  mlp.U0 = std::make_shared<const Eigen::MatrixXd>(mlp.U);
  return mlp;
}

double vrex_penalty(const std::vector<double>& per_domain_risks, double lambda) {
  if (per_domain_risks.empty()) throw DataError("vrex_penalty: empty risk list");
  if (lambda < 0.0) throw DataError("vrex_penalty: lambda must be >= 0");
  const double n = double(per_domain_risks.size());
  const double mean = std::accumulate(per_domain_risks.begin(), per_domain_risks.end(), 0.0) / n;
  double var = 0.0;
  for (double r : per_domain_risks) var += (r - mean) * (r - mean);
  return lambda * var / n;
}

MixedBatch mix_with_lambdas(const DomainBatch& a, const DomainBatch& b,
                            const Eigen::VectorXd& lambdas) {
  if (a.X.rows() != b.X.rows() || a.X.cols() != b.X.cols())
    throw DataError("mixup_batch: batch shape mismatch");
  if (lambdas.size() != a.X.rows()) throw DataError("mixup_batch: lambda count mismatch");
  MixedBatch out;
  out.y_a = a.y;
  out.y_b = b.y;
  out.lam = lambdas;
  out.X.resize(a.X.rows(), a.X.cols());
  for (Eigen::Index i = 0; i < a.X.rows(); ++i)
    out.X.row(i) = lambdas(i) * a.X.row(i) + (1.0 - lambdas(i)) * b.X.row(i);
  return out;
}

MixedBatch mixup_batch(const DomainBatch& a, const DomainBatch& b, double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw DataError("mixup_batch: alpha must be positive");
  Eigen::VectorXd lambdas(a.X.rows());
  for (Eigen::Index i = 0; i < lambdas.size(); ++i) lambdas(i) = rng.beta(alpha, alpha);
  return mix_with_lambdas(a, b, lambdas);
}

MixedBatch mixup_batch(const DomainBatch& a, const DomainBatch& b, double alpha, uint64_t seed) {
  Rng rng(derive_seed(seed, "mixup"));
  return mixup_batch(a, b, alpha, rng);
}

namespace {

struct Forward {
  Eigen::MatrixXd Z;  // pre-activations, b x h
  Eigen::MatrixXd A;  // relu(Z)
  Eigen::MatrixXd P;  // softmax scores, b x K
  Eigen::VectorXd log_norm;
  Eigen::MatrixXd S;  // logits
};

Forward forward_pass(const Mlp2& mlp, const Eigen::MatrixXd& X) {
  Forward f;
  f.Z.noalias() = X * mlp.U.transpose();
  f.A = f.Z.cwiseMax(0.0);
  f.S.noalias() = f.A * mlp.V.transpose();
  f.P.resize(f.S.rows(), f.S.cols());
  f.log_norm.resize(f.S.rows());
  for (Eigen::Index i = 0; i < f.S.rows(); ++i) {
    const double mx = f.S.row(i).maxCoeff();
    const double lse = mx + std::log((f.S.row(i).array() - mx).exp().sum());
    f.log_norm(i) = lse;
    f.P.row(i) = (f.S.row(i).array() - lse).exp();
  }
  return f;
}

double batch_ce(const Forward& f, const Eigen::VectorXi& y) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) sum += f.log_norm(i) - f.S(i, y(i));
  return sum / double(y.size());
}

// Accumulates d(mean CE)/dU and dV for one batch given dS = (P - targets)/b.
void backward_into(const Mlp2& mlp, const Eigen::MatrixXd& X, const Forward& f,
                   const Eigen::MatrixXd& dS, double weight, Eigen::MatrixXd& dU,
                   Eigen::MatrixXd& dV) {
  dV.noalias() += weight * (dS.transpose() * f.A);
  Eigen::MatrixXd dA = dS * mlp.V;
  dA = (f.Z.array() > 0.0).select(dA, 0.0);
  dU.noalias() += weight * (dA.transpose() * X);
}

Eigen::MatrixXd ce_dS(const Forward& f, const Eigen::VectorXi& y) {
  Eigen::MatrixXd dS = f.P;
  for (Eigen::Index i = 0; i < y.size(); ++i) dS(i, y(i)) -= 1.0;
  return dS / double(y.size());
}

}  // namespace

double mlp_loss(const Mlp2& mlp, const std::vector<DomainBatch>& batches,
                const PenaltyPlugin& plugin) {
  if (batches.empty()) throw DataError("mlp_loss: no batches");
  std::vector<double> risks;
  risks.reserve(batches.size());
  for (const auto& b : batches) risks.push_back(batch_ce(forward_pass(mlp, b.X), b.y));
  const double mean = std::accumulate(risks.begin(), risks.end(), 0.0) / double(risks.size());
  if (plugin.kind == PenaltyKind::kVrex) return mean + vrex_penalty(risks, plugin.lambda);
  return mean;
}

MlpGrads mlp_grad(const Mlp2& mlp, const std::vector<DomainBatch>& batches,
                  const PenaltyPlugin& plugin) {
  if (batches.empty()) throw DataError("mlp_grad: no batches");
  const double n = double(batches.size());

  std::vector<Forward> fwd;
  std::vector<double> risks;
  fwd.reserve(batches.size());
  for (const auto& b : batches) {
    fwd.push_back(forward_pass(mlp, b.X));
    risks.push_back(batch_ce(fwd.back(), b.y));
  }
  const double mean = std::accumulate(risks.begin(), risks.end(), 0.0) / n;

  MlpGrads g;
  g.dU = Eigen::MatrixXd::Zero(mlp.U.rows(), mlp.U.cols());
  g.dV = Eigen::MatrixXd::Zero(mlp.V.rows(), mlp.V.cols());
  g.loss = mean;

  for (size_t j = 0; j < batches.size(); ++j) {
    double weight = 1.0 / n;
    if (plugin.kind == PenaltyKind::kVrex)
      weight += plugin.lambda * 2.0 / n * (risks[j] - mean);  // d(pop var)/d risk_j
    backward_into(mlp, batches[j].X, fwd[j], ce_dS(fwd[j], batches[j].y), weight, g.dU, g.dV);
  }
  if (plugin.kind == PenaltyKind::kVrex) g.loss += vrex_penalty(risks, plugin.lambda);
  return g;
}

double mlp_loss_mixed(const Mlp2& mlp, const std::vector<MixedBatch>& batches) {
  if (batches.empty()) throw DataError("mlp_loss_mixed: no batches");
  double total = 0.0;
  for (const auto& b : batches) {
    const Forward f = forward_pass(mlp, b.X);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < b.lam.size(); ++i)
      sum += b.lam(i) * (f.log_norm(i) - f.S(i, b.y_a(i))) +
             (1.0 - b.lam(i)) * (f.log_norm(i) - f.S(i, b.y_b(i)));
    total += sum / double(b.lam.size());
  }
  return total / double(batches.size());
}

MlpGrads mlp_grad_mixed(const Mlp2& mlp, const std::vector<MixedBatch>& batches) {
  if (batches.empty()) throw DataError("mlp_grad_mixed: no batches");
  MlpGrads g;
  g.dU = Eigen::MatrixXd::Zero(mlp.U.rows(), mlp.U.cols());
  g.dV = Eigen::MatrixXd::Zero(mlp.V.rows(), mlp.V.cols());
  const double n = double(batches.size());
  double total = 0.0;
  for (const auto& b : batches) {
    const Forward f = forward_pass(mlp, b.X);
    double sum = 0.0;
    Eigen::MatrixXd dS = f.P;
    for (Eigen::Index i = 0; i < b.lam.size(); ++i) {
      sum += b.lam(i) * (f.log_norm(i) - f.S(i, b.y_a(i))) +
             (1.0 - b.lam(i)) * (f.log_norm(i) - f.S(i, b.y_b(i)));
      dS(i, b.y_a(i)) -= b.lam(i);
      dS(i, b.y_b(i)) -= 1.0 - b.lam(i);
    }
    dS /= double(b.lam.size());
    total += sum / double(b.lam.size());
    backward_into(mlp, b.X, f, dS, 1.0 / n, g.dU, g.dV);
  }
  g.loss = total / n;
  return g;
}

double mlp_domain_mean_ce(const Mlp2& mlp, const Environment& env) {
  double sum = 0.0;
  for (const auto& d : env.domains) sum += batch_ce(forward_pass(mlp, d.features), d.labels);
  return sum / double(env.n_domains());
}

double mlp_accuracy(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V, const Dataset& data) {
  const Eigen::MatrixXd A = (data.X * U.transpose()).cwiseMax(0.0);
  const Eigen::MatrixXd S = A * V.transpose();
  double correct = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    int best = 0;
    for (int c = 1; c < S.cols(); ++c)
      if (S(i, c) > S(i, best)) best = c;
    if (best == data.y(i)) correct += 1.0;
  }
  return correct / double(data.size());
}

std::vector<MlpCheckpoint> train_mlp(const Environment& env_train, const TrainSchedule& schedule,
                                     const PenaltyPlugin& plugin, int hidden) {
  env_train.validate();
  schedule.validate();
  plugin.validate();

  Mlp2 mlp = init_mlp(env_train.feature_dim, hidden, env_train.num_classes,
                      derive_seed(schedule.seed, "mlp/init"));
  const auto n = static_cast<size_t>(env_train.n_domains());

  Rng batch_rng(derive_seed(schedule.seed, "mlp/batches"));
  Rng mix_rng(derive_seed(schedule.seed, "mlp/mixup"));

  std::vector<MlpCheckpoint> checkpoints;
  auto emit = [&](int64_t step) {
    checkpoints.push_back({step, mlp.U, mlp.V, mlp.U0, mlp_domain_mean_ce(mlp, env_train)});
  };
  emit(0);

  std::vector<size_t> pairing(n);
  std::iota(pairing.begin(), pairing.end(), 0);

  for (int64_t step = 1; step <= schedule.steps; ++step) {
    std::vector<DomainBatch> batches;
    batches.reserve(n);
    for (const auto& d : env_train.domains) {
      DomainBatch b;
      b.X.resize(schedule.batch_size, env_train.feature_dim);
      b.y.resize(schedule.batch_size);
      for (int i = 0; i < schedule.batch_size; ++i) {
        const auto r = static_cast<Eigen::Index>(batch_rng.uniform_int(0, d.size() - 1));
        b.X.row(i) = d.features.row(r);
        b.y(i) = d.labels(r);
      }
      batches.push_back(std::move(b));
    }

    MlpGrads g;
    if (plugin.kind == PenaltyKind::kMixup) {
      mix_rng.shuffle(pairing);
      std::vector<MixedBatch> mixed;
      mixed.reserve(n);
      for (size_t j = 0; j < n; ++j)
        mixed.push_back(
            mixup_batch(batches[pairing[j]], batches[pairing[(j + 1) % n]], plugin.alpha, mix_rng));
      g = mlp_grad_mixed(mlp, mixed);
    } else {
      g = mlp_grad(mlp, batches, plugin);
    }
    if (!std::isfinite(g.loss))
      throw NumericError("train_mlp: non-finite loss at step " + std::to_string(step) +
                         " (lr=" + std::to_string(schedule.learning_rate) + ")");

    mlp.U -= schedule.learning_rate * g.dU;
    mlp.V -= schedule.learning_rate * g.dV;

    if (step % schedule.checkpoint_every == 0 || step == schedule.steps) emit(step);
  }
  return checkpoints;
}

void save_checkpoint(const MlpCheckpoint& ckpt, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << ckpt.step << '\n';
  save_matrix(os, ckpt.U);
  save_matrix(os, *ckpt.U0);
  save_matrix(os, ckpt.V);
  if (!os) throw DataError("write failed: " + path);
}

MlpCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  MlpCheckpoint ckpt;
  if (!(is >> ckpt.step)) throw DataError(path + ": bad checkpoint header");
  ckpt.U = load_matrix(is);
  ckpt.U0 = std::make_shared<const Eigen::MatrixXd>(load_matrix(is));
  ckpt.V = load_matrix(is);
  return ckpt;
}

}  // namespace dg
