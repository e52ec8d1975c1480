#include "dg/linear_model.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "dg/errors.hpp"
#include "dg/matrix_io.hpp"
#include "dg/rng.hpp"

namespace dg {

void SvmConfig::validate() const {
  if (!(C > 0.0)) throw DataError("svm config: C must be positive");
  if (!(tol > 0.0)) throw DataError("svm config: tol must be positive");
  if (max_iter < 1) throw DataError("svm config: max_iter must be >= 1");
}

double ramp_loss(double margin) { return std::clamp(1.0 - margin, 0.0, 1.0); }

namespace {

Eigen::MatrixXd augment(const Eigen::MatrixXd& X, bool bias_feature) {
  if (!bias_feature) return X;
  Eigen::MatrixXd A(X.rows(), X.cols() + 1);
  A.leftCols(X.cols()) = X;
  A.col(X.cols()).setOnes();
  return A;
}

double primal_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& b,
                        const Eigen::VectorXd& w, double C, LossKind loss) {
  const double m = double(X.rows());
  const Eigen::VectorXd z = b.cwiseProduct(X * w);
  double sum = 0.0;
  if (loss == LossKind::kHinge) {
    for (Eigen::Index i = 0; i < z.size(); ++i) sum += std::max(0.0, 1.0 - z(i));
  } else {
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double zi = z(i);
      sum += zi >= 0.0 ? std::log1p(std::exp(-zi)) : -zi + std::log1p(std::exp(zi));
    }
  }
  return w.squaredNorm() + (C / m) * sum;
}

// Coordinate descent on the dual of the L2-regularised L1-loss problem.
//
//   min_a  0.5 a^T Q a - e^T a,   0 <= a_i <= C/(2m),  Q_ij = b_i b_j x_i.x_j
//
// with w = sum_i a_i b_i x_i. Each coordinate is minimised exactly, so the
// dual objective never increases; the scan order is a seeded permutation
// refreshed every outer pass.
SolverReport solve_hinge_dcd(const Eigen::MatrixXd& X, const Eigen::VectorXd& b,
                             const SvmConfig& cfg, uint64_t stream, Eigen::VectorXd& w) {
  const Eigen::Index m = X.rows();
  const double box = cfg.C / (2.0 * double(m));

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd qdiag(m);
  for (Eigen::Index i = 0; i < m; ++i) qdiag(i) = X.row(i).squaredNorm();
  w.setZero(X.cols());

  std::vector<Eigen::Index> order(static_cast<size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, "dcd", stream));

  SolverReport report;
  double prev = 0.0;  // dual value at alpha = 0
  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    rng.shuffle(order);
    for (const Eigen::Index i : order) {
      const double g = b(i) * w.dot(X.row(i)) - 1.0;
      double pg = g;
      if (alpha(i) <= 0.0)
        pg = std::min(g, 0.0);
      else if (alpha(i) >= box)
        pg = std::max(g, 0.0);
      if (std::abs(pg) < 1e-14) continue;
      double next;
      if (qdiag(i) > 0.0)
        next = std::clamp(alpha(i) - g / qdiag(i), 0.0, box);
      else
        next = g < 0.0 ? box : 0.0;  // degenerate zero row
      if (next != alpha(i)) {
        w += (next - alpha(i)) * b(i) * X.row(i).transpose();
        alpha(i) = next;
      }
    }
    const double dual = 0.5 * w.squaredNorm() - alpha.sum();
    report.objective_history.push_back(dual);
    report.iterations = iter;
    if (iter > 1 && std::abs(prev - dual) < cfg.tol) {
      report.converged = true;
      break;
    }
    prev = dual;
  }
  return report;
}

// Damped Newton on the primal logistic objective; Armijo backtracking keeps
// the recorded objective monotone.
SolverReport solve_logistic_newton(const Eigen::MatrixXd& X, const Eigen::VectorXd& b,
                                   const SvmConfig& cfg, Eigen::VectorXd& w) {
  const Eigen::Index m = X.rows(), d = X.cols();
  const double scale = cfg.C / double(m);
  w.setZero(d);

  SolverReport report;
  double obj = primal_objective(X, b, w, cfg.C, LossKind::kLogistic);
  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    const Eigen::VectorXd z = b.cwiseProduct(X * w);
    Eigen::VectorXd sig(m);
    for (Eigen::Index i = 0; i < m; ++i) sig(i) = 1.0 / (1.0 + std::exp(-z(i)));

    Eigen::VectorXd grad = 2.0 * w;
    grad.noalias() -= scale * (X.transpose() * ((1.0 - sig.array()).matrix().cwiseProduct(b)));

    Eigen::MatrixXd hess = 2.0 * Eigen::MatrixXd::Identity(d, d);
    const Eigen::ArrayXd hd = sig.array() * (1.0 - sig.array());
    hess.noalias() += scale * (X.transpose() * hd.matrix().asDiagonal() * X);

    const Eigen::VectorXd dir = -hess.llt().solve(grad);
    const double slope = grad.dot(dir);

    double step = 1.0;
    double next = obj;
    while (step > 1e-12) {
      next = primal_objective(X, b, w + step * dir, cfg.C, LossKind::kLogistic);
      if (next <= obj + 1e-4 * step * slope) break;
      step *= 0.5;
    }
    w += step * dir;
    report.objective_history.push_back(next);
    report.iterations = iter;
    if (std::abs(obj - next) < cfg.tol) {
      report.converged = true;
      break;
    }
    obj = next;
  }
  return report;
}

}  // namespace

LinearModel train_linear(const Dataset& data, const SvmConfig& config) {
  config.validate();
  if (data.size() == 0) throw DataError("train_linear: empty dataset");
  if (!data.X.allFinite()) throw DataError("train_linear: non-finite feature");

  std::set<int> classes;
  int max_label = 0;
  for (Eigen::Index i = 0; i < data.y.size(); ++i) {
    if (data.y(i) < 0) throw DataError("train_linear: negative label");
    classes.insert(data.y(i));
    max_label = std::max(max_label, data.y(i));
  }
  const int k = max_label + 1;
  if (static_cast<int>(classes.size()) != k)
    throw DataError("train_linear: missing class in training data");
  if (k < 2) throw DataError("train_linear: need at least two classes");

  const Eigen::MatrixXd A = augment(data.X, config.fit_bias);

  LinearModel model;
  model.input_dim = static_cast<int>(data.X.cols());
  model.bias_feature = config.fit_bias;
  model.trained_C = config.C;
  model.W.resize(k, A.cols());
  model.reports.resize(k);

  for (int c = 0; c < k; ++c) {
    Eigen::VectorXd b(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i) b(i) = data.y(i) == c ? 1.0 : -1.0;
    Eigen::VectorXd w;
    SolverReport rep = config.loss == LossKind::kHinge
                           ? solve_hinge_dcd(A, b, config, static_cast<uint64_t>(c), w)
                           : solve_logistic_newton(A, b, config, w);
    rep.final_objective = primal_objective(A, b, w, config.C, config.loss);
    model.W.row(c) = w.transpose();
    model.reports[c] = std::move(rep);
  }
  return model;
}

Eigen::MatrixXd LinearModel::score_matrix(const Eigen::MatrixXd& X) const {
  if (X.cols() != input_dim)
    throw DataError("score: feature dim " + std::to_string(X.cols()) + " != model dim " +
                    std::to_string(input_dim));
  Eigen::MatrixXd s = X * W.leftCols(input_dim).transpose();
  if (bias_feature) s.rowwise() += W.col(input_dim).transpose();
  return s;
}

Eigen::VectorXd LinearModel::scores(const Eigen::VectorXd& x) const {
  return score_matrix(x.transpose()).row(0).transpose();
}

int LinearModel::predict(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd s = scores(x);
  int best = 0;
  for (int c = 1; c < s.size(); ++c)
    if (s(c) > s(best)) best = c;  // ties keep the lowest index
  return best;
}

Metrics evaluate(const LinearModel& model, const Dataset& data) {
  if (data.size() == 0) throw DataError("evaluate: empty dataset");
  const Eigen::MatrixXd S = model.score_matrix(data.X);
  const int k = model.num_classes();

  double correct = 0.0, ramp_sum = 0.0, margin_sum = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const int truth = data.y(i);
    if (truth < 0 || truth >= k)
      throw DataError("evaluate: label " + std::to_string(truth) + " outside model classes");
    int best = 0;
    for (int c = 1; c < k; ++c)
      if (S(i, c) > S(i, best)) best = c;
    if (best == truth) correct += 1.0;

    double rival = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != truth) rival = std::max(rival, S(i, c));
    const double margin = S(i, truth) - rival;
    margin_sum += margin;
    ramp_sum += ramp_loss(margin);
  }
  const double m = double(data.size());
  return {correct / m, ramp_sum / m, margin_sum / m};
}

WeightNorms weight_norm(const LinearModel& model) {
  WeightNorms out;
  out.per_class.reserve(static_cast<size_t>(model.W.rows()));
  for (Eigen::Index c = 0; c < model.W.rows(); ++c) {
    out.per_class.push_back(model.W.row(c).norm());
    out.max_norm = std::max(out.max_norm, out.per_class.back());
  }
  return out;
}

void save_model(const LinearModel& model, const std::string& path) {
  save_matrix(path, model.W);
}

LinearModel load_model(const std::string& path, bool bias_feature) {
  LinearModel model;
  model.W = load_matrix(path);
  model.bias_feature = bias_feature;
  model.input_dim = static_cast<int>(model.W.cols()) - (bias_feature ? 1 : 0);
  return model;
}

}  // namespace dg
