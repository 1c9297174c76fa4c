#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "m3lak/error.hpp"
#include "m3lak/rng.hpp"

namespace m3lak {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Floor applied to the GIG chi parameter so a zero hinge violation keeps the draw defined.
inline constexpr double kGigChiFloor = 1e-12;

/// Parameters of GIG(1/2, a, chi), density proportional to
/// lambda^{-1/2} exp(-(a lambda + chi / lambda) / 2).
struct GigHalfParams {
  double a = 1.0;
  double chi = 0.0;
};

// ---------------------------------------------------------------------------
// Scalar draws

inline double uniform_draw(double lo, double hi, RngStream& rng) {
  if (!(std::isfinite(lo) && std::isfinite(hi)) || !(hi > lo))
    throw InvalidParameter("uniform_draw: need finite lo < hi");
  return lo + (hi - lo) * rng.uniform();
}

inline double gamma_draw(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate))
    throw InvalidParameter("gamma_draw: shape and rate must be positive and finite (got shape=" +
                           std::to_string(shape) + ", rate=" + std::to_string(rate) + ")");
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  double x = dist(rng.engine());
  // Tiny shapes can underflow to exactly zero.
  return std::max(x, std::numeric_limits<double>::min());
}

inline double beta_draw(double a, double b, RngStream& rng) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidParameter("beta_draw: parameters must be positive");
  const double x = gamma_draw(a, 1.0, rng);
  const double y = gamma_draw(b, 1.0, rng);
  return x / (x + y);
}

/// GIG(1/2, a, chi) through the reciprocal inverse-Gaussian identity:
/// 1/lambda ~ InverseGaussian(mean sqrt(a/chi), shape a).
inline double gig_half_draw(GigHalfParams params, RngStream& rng) {
  if (!std::isfinite(params.a) || !std::isfinite(params.chi))
    throw InvalidParameter("gig_half_draw: non-finite parameter");
  if (!(params.a > 0.0) || params.chi < 0.0)
    throw InvalidParameter("gig_half_draw: need a > 0 and chi >= 0");
  const double chi = std::max(params.chi, kGigChiFloor);
  const double mu = std::sqrt(params.a / chi);
  const double z = rng.normal();
  const double phi = mu * z * z / (2.0 * params.a);
  // Michael-Schucany-Haas root, written as mu / denom to avoid cancellation for large mu.
  const double denom = 1.0 + phi + std::sqrt(phi * phi + 2.0 * phi);
  const double x = mu / denom;
  const double u = rng.uniform();
  double lambda = (u <= mu / (mu + x)) ? denom / mu : 1.0 / (mu * denom);
  return std::clamp(lambda, std::numeric_limits<double>::min(), std::numeric_limits<double>::max());
}

/// Index drawn with probability proportional to exp(log_weights[k]); -inf entries are excluded.
inline std::size_t categorical_draw_log(std::span<const double> log_weights, RngStream& rng) {
  double top = -std::numeric_limits<double>::infinity();
  for (double w : log_weights) top = std::max(top, w);
  if (!std::isfinite(top)) throw InternalInvariant("categorical_draw_log: no eligible category");
  double total = 0.0;
  for (double w : log_weights) total += std::exp(w - top);
  double target = rng.uniform() * total;
  std::size_t last = 0;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    if (log_weights[k] == -std::numeric_limits<double>::infinity()) continue;
    last = k;
    target -= std::exp(log_weights[k] - top);
    if (target <= 0.0) return k;
  }
  return last;
}

inline VectorXd dirichlet_draw(std::span<const double> concentration, RngStream& rng) {
  VectorXd out(static_cast<Eigen::Index>(concentration.size()));
  for (std::size_t k = 0; k < concentration.size(); ++k)
    out[static_cast<Eigen::Index>(k)] = gamma_draw(concentration[k], 1.0, rng);
  out /= out.sum();
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra helpers

inline bool is_symmetric(const MatrixXd& a, double tol = 1e-10) {
  if (a.rows() != a.cols()) return false;
  const double scale = 1.0 + a.cwiseAbs().maxCoeff();
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

/// Lower Cholesky factor of a symmetric matrix. When plain factorization fails,
/// adds f * mean(diag) * I for f = 1e-10, 1e-9, ..., 1e-4 before giving up.
inline MatrixXd jittered_cholesky(const MatrixXd& a, const char* what = "cholesky") {
  if (a.rows() != a.cols()) throw InvalidParameter(std::string(what) + ": matrix is not square");
  if (!a.allFinite()) throw NumericalDegeneracy(std::string(what) + ": non-finite matrix entries");
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite())
    return llt.matrixL();
  double scale = a.diagonal().mean();
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
  const auto n = a.rows();
  for (double f = 1e-10; f <= 1e-4 * 1.0000001; f *= 10.0) {
    llt.compute(a + (f * scale) * MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalDegeneracy(std::string(what) + ": factorization failed after maximum jitter");
}

/// Log-density of N(x; mean, L L^T) given the lower Cholesky factor L.
inline double log_normal_density(const VectorXd& x, const VectorXd& mean, const MatrixXd& chol_lower) {
  const VectorXd z = chol_lower.triangularView<Eigen::Lower>().solve(x - mean);
  const double log_det = 2.0 * chol_lower.diagonal().array().log().sum();
  return -0.5 * (z.squaredNorm() + log_det + static_cast<double>(x.size()) * std::log(2.0 * M_PI));
}

inline VectorXd standard_normal_vector(Eigen::Index n, RngStream& rng) {
  VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  return z;
}

// ---------------------------------------------------------------------------
// Multivariate draws

inline VectorXd mvn_draw(const VectorXd& mean, const MatrixXd& covariance, RngStream& rng) {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size())
    throw InvalidParameter("mvn_draw: covariance shape does not match mean");
  if (!is_symmetric(covariance)) throw InvalidParameter("mvn_draw: covariance is not symmetric");
  const MatrixXd l = jittered_cholesky(covariance, "mvn_draw");
  return mean + l * standard_normal_vector(mean.size(), rng);
}

/// Gaussian in information form: precision P and linear term b, so mean = P^{-1} b.
struct PrecisionGaussian {
  MatrixXd chol;  // lower factor of P
  VectorXd mean;

  PrecisionGaussian(const MatrixXd& precision, const VectorXd& linear, const char* what = "gaussian")
      : chol(jittered_cholesky(precision, what)) {
    if (linear.size() != precision.rows()) throw InvalidParameter(std::string(what) + ": shape mismatch");
    mean = chol.transpose().triangularView<Eigen::Upper>().solve(
        chol.triangularView<Eigen::Lower>().solve(linear));
  }

  MatrixXd covariance() const {
    const MatrixXd inv_l = chol.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(chol.rows(), chol.cols()));
    return inv_l.transpose() * inv_l;
  }

  VectorXd draw(RngStream& rng) const {
    return mean + chol.transpose().triangularView<Eigen::Upper>().solve(standard_normal_vector(mean.size(), rng));
  }
};

/// Sigma ~ InverseWishart(psi, nu) with E[Sigma] = psi / (nu - d - 1), via the Bartlett decomposition.
inline MatrixXd inverse_wishart_draw(const MatrixXd& psi, double nu, RngStream& rng) {
  const auto d = psi.rows();
  if (psi.cols() != d || !is_symmetric(psi)) throw InvalidParameter("inverse_wishart_draw: scale must be symmetric");
  if (!(nu > static_cast<double>(d) - 1.0)) throw InvalidParameter("inverse_wishart_draw: need nu > d - 1");
  const MatrixXd l = jittered_cholesky(psi, "inverse_wishart_draw");
  MatrixXd a = MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(gamma_draw(0.5 * (nu - static_cast<double>(i)), 0.5, rng));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  // W = L^{-T} A A^T L^{-1} ~ Wishart(psi^{-1}, nu); Sigma = W^{-1} = (L A^{-T})(L A^{-T})^T.
  const MatrixXd a_inv_t =
      a.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(d, d)).transpose();
  const MatrixXd m = l * a_inv_t;
  MatrixXd sigma = m * m.transpose();
  return 0.5 * (sigma + sigma.transpose());
}

}  // namespace m3lak
