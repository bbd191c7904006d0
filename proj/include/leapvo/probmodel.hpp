#pragma once

#include <vector>

#include <Eigen/Core>

namespace leapvo {

/// Location and scale parameters of the two per-coordinate multivariate
/// Cauchy distributions describing one trajectory of S frames.
struct TrackDistribution {
  Eigen::VectorXd mu_a;     ///< x coordinates (pixels)
  Eigen::VectorXd mu_b;     ///< y coordinates (pixels)
  Eigen::MatrixXd sigma_a;  ///< S x S, SPD (pixels^2)
  Eigen::MatrixXd sigma_b;

  int length() const { return static_cast<int>(mu_a.size()); }
  /// Phi[s] = Sigma_a[s,s] + Sigma_b[s,s].
  Eigen::VectorXd uncertainty() const;
};

inline constexpr double kDefaultSigmaFloor = 1e-3;

/// Sigma = Fp Fp^T + sigma I for an S x D feature series Fp.
Eigen::MatrixXd build_scale_matrix(const Eigen::MatrixXd& features, double sigma);

/// Distribution with [mu_a; mu_b] tied to the S x 2 trajectory and scale
/// matrices built from the projected feature series.
TrackDistribution make_distribution(const Eigen::MatrixX2d& trajectory,
                                    const Eigen::MatrixXd& features_a,
                                    const Eigen::MatrixXd& features_b, double sigma);

/// log of the S-variate Cauchy density, evaluated through a Cholesky factor.
/// Throws NotPositiveDefinite when the factorisation fails.
double cauchy_logpdf(const Eigen::VectorXd& a, const Eigen::VectorXd& mu,
                     const Eigen::MatrixXd& sigma);

/// Gradients of the negative log-density w.r.t. the location and scale.
struct CauchyNllGradient {
  Eigen::VectorXd d_mu;
  Eigen::MatrixXd d_sigma;  ///< symmetric
};

/// -cauchy_logpdf with its gradient.
double cauchy_nll(const Eigen::VectorXd& a, const Eigen::VectorXd& mu,
                  const Eigen::MatrixXd& sigma, CauchyNllGradient* grad);

struct TrackNllGradient {
  Eigen::MatrixX2d d_trajectory;  ///< w.r.t. the predicted S x 2 trajectory
  Eigen::MatrixXd d_sigma_a;
  Eigen::MatrixXd d_sigma_b;
};

/// Negative log-likelihood of the ground-truth trajectory `truth` under the
/// distribution located at `trajectory`.
double track_nll(const Eigen::MatrixX2d& trajectory, const Eigen::MatrixX2d& truth,
                 const Eigen::MatrixXd& sigma_a, const Eigen::MatrixXd& sigma_b,
                 TrackNllGradient* grad = nullptr);

/// Chain rule through Sigma = F F^T + sigma I: dL/dF = (G + G^T) F.
Eigen::MatrixXd scale_matrix_feature_gradient(const Eigen::MatrixXd& d_sigma,
                                              const Eigen::MatrixXd& features);

/// One refinement iterate: trajectory and the scale matrices predicted with it.
struct RefinementIterate {
  Eigen::MatrixX2d trajectory;
  Eigen::MatrixXd sigma_a;
  Eigen::MatrixXd sigma_b;
};

inline constexpr double kIterateDecay = 0.8;

/// sum_k gamma^(K-k) track_nll(X^k, X*, Sigma_a^k, Sigma_b^k), k = 1..K.
/// `grads`, when given, receives one gradient per iterate.
double main_loss(const std::vector<RefinementIterate>& iterates, const Eigen::MatrixX2d& truth,
                 double gamma = kIterateDecay, std::vector<TrackNllGradient>* grads = nullptr);

/// Mean binary cross-entropy -[(1-g) ln(1-p) + g ln p]; p clamped to [1e-7, 1-1e-7].
/// `grad` receives dL/dp (zero where the clamp is active).
double bce_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth,
                Eigen::VectorXd* grad = nullptr);

struct LossWeights {
  double main = 1.0;
  double visibility = 0.5;
  double dynamic = 0.5;
};

double total_loss(double main, double visibility, double dynamic, const LossWeights& w = {});

Eigen::VectorXd point_uncertainty(const Eigen::MatrixXd& sigma_a, const Eigen::MatrixXd& sigma_b);

}  // namespace leapvo
