#include "leapvo/probmodel.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "leapvo/errors.hpp"

namespace leapvo {

namespace {

double log_normaliser(Eigen::Index s) {
  const double dim = static_cast<double>(s);
  return std::lgamma(0.5 * (1.0 + dim)) - std::lgamma(0.5) - 0.5 * dim * std::log(std::numbers::pi);
}

Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::kNotPositiveDefinite, "scale matrix Cholesky failed");
  return llt;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

Eigen::VectorXd TrackDistribution::uncertainty() const {
  return point_uncertainty(sigma_a, sigma_b);
}

Eigen::MatrixXd build_scale_matrix(const Eigen::MatrixXd& features, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sigma must be positive");
  Eigen::MatrixXd out = features * features.transpose();
  out.diagonal().array() += sigma;
  // the product is symmetric up to rounding; make it exact
  return 0.5 * (out + out.transpose());
}

TrackDistribution make_distribution(const Eigen::MatrixX2d& trajectory,
                                    const Eigen::MatrixXd& features_a,
                                    const Eigen::MatrixXd& features_b, double sigma) {
  TrackDistribution d;
  d.mu_a = trajectory.col(0);
  d.mu_b = trajectory.col(1);
  d.sigma_a = build_scale_matrix(features_a, sigma);
  d.sigma_b = build_scale_matrix(features_b, sigma);
  return d;
}

double cauchy_logpdf(const Eigen::VectorXd& a, const Eigen::VectorXd& mu,
                     const Eigen::MatrixXd& sigma) {
  const auto llt = factor(sigma);
  const Eigen::VectorXd white = llt.matrixL().solve(a - mu);
  const double q = white.squaredNorm();
  const double s = static_cast<double>(a.size());
  return log_normaliser(a.size()) - 0.5 * log_det(llt) - 0.5 * (1.0 + s) * std::log1p(q);
}

double cauchy_nll(const Eigen::VectorXd& a, const Eigen::VectorXd& mu,
                  const Eigen::MatrixXd& sigma, CauchyNllGradient* grad) {
  const auto llt = factor(sigma);
  const Eigen::VectorXd r = a - mu;
  const Eigen::VectorXd sr = llt.solve(r);  // Sigma^-1 r
  const double q = r.dot(sr);
  const double s = static_cast<double>(a.size());
  const double nll = -log_normaliser(a.size()) + 0.5 * log_det(llt) + 0.5 * (1.0 + s) * std::log1p(q);
  if (grad != nullptr) {
    const double c = (1.0 + s) / (1.0 + q);
    grad->d_mu = -c * sr;
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(a.size(), a.size()));
    grad->d_sigma = 0.5 * inv - 0.5 * c * sr * sr.transpose();
  }
  return nll;
}

double track_nll(const Eigen::MatrixX2d& trajectory, const Eigen::MatrixX2d& truth,
                 const Eigen::MatrixXd& sigma_a, const Eigen::MatrixXd& sigma_b,
                 TrackNllGradient* grad) {
  if (trajectory.rows() != truth.rows() || sigma_a.rows() != trajectory.rows() ||
      sigma_b.rows() != trajectory.rows())
    throw Error(ErrorCode::kInvalidArgument, "track_nll: shape mismatch");
  if (grad == nullptr) {
    return -cauchy_logpdf(truth.col(0), trajectory.col(0), sigma_a) -
           cauchy_logpdf(truth.col(1), trajectory.col(1), sigma_b);
  }
  CauchyNllGradient ga;
  CauchyNllGradient gb;
  const double nll = cauchy_nll(truth.col(0), trajectory.col(0), sigma_a, &ga) +
                     cauchy_nll(truth.col(1), trajectory.col(1), sigma_b, &gb);
  grad->d_trajectory.resize(trajectory.rows(), 2);
  grad->d_trajectory.col(0) = ga.d_mu;
  grad->d_trajectory.col(1) = gb.d_mu;
  grad->d_sigma_a = std::move(ga.d_sigma);
  grad->d_sigma_b = std::move(gb.d_sigma);
  return nll;
}

Eigen::MatrixXd scale_matrix_feature_gradient(const Eigen::MatrixXd& d_sigma,
                                              const Eigen::MatrixXd& features) {
  return (d_sigma + d_sigma.transpose()) * features;
}

double main_loss(const std::vector<RefinementIterate>& iterates, const Eigen::MatrixX2d& truth,
                 double gamma, std::vector<TrackNllGradient>* grads) {
  if (iterates.empty()) throw Error(ErrorCode::kInvalidArgument, "main_loss needs K >= 1");
  const auto k_total = static_cast<int>(iterates.size());
  if (grads != nullptr) grads->assign(iterates.size(), {});
  double loss = 0.0;
  for (int k = 1; k <= k_total; ++k) {
    const auto& it = iterates[static_cast<size_t>(k - 1)];
    const double weight = std::pow(gamma, k_total - k);
    TrackNllGradient* g = grads != nullptr ? &(*grads)[static_cast<size_t>(k - 1)] : nullptr;
    loss += weight * track_nll(it.trajectory, truth, it.sigma_a, it.sigma_b, g);
    if (g != nullptr) {
      g->d_trajectory *= weight;
      g->d_sigma_a *= weight;
      g->d_sigma_b *= weight;
    }
  }
  return loss;
}

double bce_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, Eigen::VectorXd* grad) {
  if (pred.size() != truth.size() || pred.size() == 0)
    throw Error(ErrorCode::kInvalidArgument, "bce_loss: shape mismatch");
  constexpr double kEps = 1e-7;
  const double n = static_cast<double>(pred.size());
  if (grad != nullptr) grad->resize(pred.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], kEps, 1.0 - kEps);
    const double g = truth[i];
    loss -= (1.0 - g) * std::log1p(-p) + g * std::log(p);
    if (grad != nullptr) {
      const bool clamped = pred[i] < kEps || pred[i] > 1.0 - kEps;
      (*grad)[i] = clamped ? 0.0 : ((1.0 - g) / (1.0 - p) - g / p) / n;
    }
  }
  return loss / n;
}

double total_loss(double main, double visibility, double dynamic, const LossWeights& w) {
  return w.main * main + w.visibility * visibility + w.dynamic * dynamic;
}

Eigen::VectorXd point_uncertainty(const Eigen::MatrixXd& sigma_a, const Eigen::MatrixXd& sigma_b) {
  return sigma_a.diagonal() + sigma_b.diagonal();
}

}  // namespace leapvo
