#pragma once

// Hinge-loss pseudo-likelihood, its scale-mixture augmentation and the conjugate
// conditionals of the classifier weights and the augmentation variables.

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "m3lak/distributions.hpp"
#include "m3lak/error.hpp"

namespace m3lak {

struct Classifier {
  VectorXd beta;     // length 2M+1, last entry multiplies the bias feature
  double v = 1e-2;   // prior precision of beta
  double C = 1.0;    // regularization
};

struct Augmentation {
  VectorXd lambdas;  // one per instance
};

/// exp(-2C max(0, 1 - y score)).
inline double pseudo_likelihood(double y, double score, double c) {
  return std::exp(-2.0 * c * std::max(0.0, 1.0 - y * score));
}

/// Integrand of the augmentation: (2 pi lambda)^{-1/2} exp(-(lambda + margin)^2 / (2 lambda)).
/// Integrated over lambda > 0 it gives exp(-2 max(0, margin)).
inline double augmented_joint(double lambda, double margin) {
  if (!(lambda > 0.0)) throw InvalidParameter("augmented_joint: lambda must be positive");
  const double t = lambda + margin;
  return std::exp(-t * t / (2.0 * lambda)) / std::sqrt(2.0 * M_PI * lambda);
}

inline double hinge(double y, double score) { return std::max(0.0, 1.0 - y * score); }

inline double mean_hinge_loss(const VectorXd& y, const VectorXd& scores) {
  if (y.size() == 0) return 0.0;
  return (1.0 - (y.array() * scores.array())).max(0.0).mean();
}

/// beta | rest in information form:
///   precision v I + C^2 sum_n phi_n phi_n^T / lambda_n,
///   linear    sum_n (C + C^2 / lambda_n) y_n phi_n.
/// `features` holds phi~(h^n) in its columns.
inline PrecisionGaussian beta_conditional(const MatrixXd& features, const VectorXd& y, const VectorXd& lambdas,
                                          double v, double c) {
  if (features.cols() != y.size() || y.size() != lambdas.size())
    throw InvalidParameter("beta_conditional: features, labels and lambdas disagree on N");
  if (!(v > 0.0) || !(c > 0.0)) throw InvalidParameter("beta_conditional: v and C must be positive");
  if ((lambdas.array() <= 0.0).any()) throw InvalidParameter("beta_conditional: lambdas must be positive");
  const auto dim = features.rows();
  const VectorXd inv_lambda = lambdas.cwiseInverse();
  MatrixXd precision = MatrixXd::Identity(dim, dim) * v;
  const MatrixXd scaled = features * (c * inv_lambda.cwiseSqrt()).asDiagonal();
  precision.selfadjointView<Eigen::Lower>().rankUpdate(scaled);
  precision = precision.selfadjointView<Eigen::Lower>();
  const VectorXd weights = (c + c * c * inv_lambda.array()).matrix().cwiseProduct(y);
  return PrecisionGaussian(precision, features * weights, "sample_beta");
}

inline VectorXd sample_beta(const MatrixXd& features, const VectorXd& y, const VectorXd& lambdas, double v, double c,
                            RngStream& rng) {
  return beta_conditional(features, y, lambdas, v, c).draw(rng);
}

/// lambda | rest ~ GIG(1/2, 1, C^2 (1 - y score)^2).
inline GigHalfParams lambda_conditional(double y, double score, double c) {
  const double margin = c * (1.0 - y * score);
  return {1.0, margin * margin};
}

inline double sample_lambda(double y, double score, double c, RngStream& rng) {
  return gig_half_draw(lambda_conditional(y, score, c), rng);
}

inline double predict_score(const VectorXd& beta, const VectorXd& features) {
  if (beta.size() != features.size())
    throw InvalidParameter("predict_score: beta has length " + std::to_string(beta.size()) + ", features " +
                           std::to_string(features.size()));
  return beta.dot(features);
}

/// Sign with ties going to +1.
inline int predict_label(double score) { return score >= 0.0 ? 1 : -1; }

}  // namespace m3lak
