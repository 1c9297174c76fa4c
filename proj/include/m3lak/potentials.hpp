#pragma once

// Potential energies (negative log conditionals) of a shared latent h^n and of one
// random frequency w_j, with analytic gradients for HMC.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "m3lak/hmc.hpp"
#include "m3lak/multiview_lvm.hpp"

namespace m3lak {

/// Gaussian part of every h^n conditional, shared across one sweep:
///   sum_i tau_i/2 |x_i - W_i h - V_i u_i|^2 = 1/2 h^T G h - h^T b_n + c_n.
struct LatentCoupling {
  MatrixXd gram;       // G = sum_i tau_i W_i^T W_i
  MatrixXd linear;     // b_n columns, m x N
  VectorXd constants;  // c_n
};

inline LatentCoupling latent_coupling(const MultiViewDataset& data, const std::vector<ViewParams>& params,
                                      const LatentState& latent) {
  const auto m = params.front().latent_dim();
  LatentCoupling out{MatrixXd::Zero(m, m), MatrixXd::Zero(m, data.num_instances()),
                     VectorXd::Zero(data.num_instances())};
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const MatrixXd target = data.views[i] - p.V * latent.U[i];
    out.gram += p.tau * p.W.transpose() * p.W;
    out.linear += p.tau * p.W.transpose() * target;
    out.constants += 0.5 * p.tau * target.colwise().squaredNorm().transpose();
  }
  return out;
}

/// U(h) = |h|^2/2 + sum_i tau_i/2 |x_i - W_i h - V_i u_i|^2 + (lambda + Lambda(h))^2 / (2 lambda),
/// Lambda(h) = C (1 - y beta^T phi~(h)).
struct LatentPotential {
  const MatrixXd& gram;
  VectorXd linear;
  double constant;
  const MatrixXd& omegas;
  const VectorXd& beta;
  double y;
  double lambda;
  double c;

  /// Classifier score beta^T phi~(h) and its gradient in h.
  double score(const VectorXd& h, VectorXd* grad) const {
    const auto big_m = omegas.cols();
    const double scale = 1.0 / std::sqrt(static_cast<double>(big_m));
    const VectorXd proj = omegas.transpose() * h;
    double s = beta[2 * big_m];
    VectorXd coeff(big_m);
    for (Eigen::Index j = 0; j < big_m; ++j) {
      const double cs = std::cos(proj[j]);
      const double sn = std::sin(proj[j]);
      s += scale * (beta[j] * cs + beta[big_m + j] * sn);
      coeff[j] = scale * (beta[big_m + j] * cs - beta[j] * sn);
    }
    if (grad) *grad = omegas * coeff;
    return s;
  }

  PotentialEval operator()(const VectorXd& h) const {
    VectorXd ds;
    const double s = score(h, &ds);
    const double margin = c * (1.0 - y * s);
    const double t = lambda + margin;
    const VectorXd gh = gram * h;
    PotentialEval out;
    out.value = 0.5 * h.squaredNorm() + 0.5 * h.dot(gh) - h.dot(linear) + constant + t * t / (2.0 * lambda);
    out.gradient = h + gh - linear - (t / lambda) * c * y * ds;
    return out;
  }
};

/// U(w) = 1/2 (w - mu)^T Sigma^{-1} (w - mu) + sum_n (lambda_n + Lambda_n(w))^2 / (2 lambda_n),
/// where only the cosine/sine features of this frequency depend on w.
struct FrequencyPotential {
  VectorXd mean;
  MatrixXd chol;            // lower Cholesky factor of the component covariance
  const MatrixXd& latents;  // H, m x N
  VectorXd base_scores;     // scores with this frequency's two features removed
  const VectorXd& y;
  const VectorXd& lambdas;
  double beta_cos;
  double beta_sin;
  double scale;             // 1/sqrt(M)
  double c;

  VectorXd scores(const VectorXd& w) const {
    const VectorXd proj = latents.transpose() * w;
    return base_scores + scale * (beta_cos * proj.array().cos() + beta_sin * proj.array().sin()).matrix();
  }

  PotentialEval operator()(const VectorXd& w) const {
    const VectorXd z = chol.triangularView<Eigen::Lower>().solve(w - mean);
    PotentialEval out;
    out.value = 0.5 * z.squaredNorm();
    out.gradient = chol.transpose().triangularView<Eigen::Upper>().solve(z);
    const VectorXd proj = latents.transpose() * w;
    const auto n = proj.size();
    VectorXd coeff(n);
    double energy = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double cs = std::cos(proj[k]);
      const double sn = std::sin(proj[k]);
      const double s = base_scores[k] + scale * (beta_cos * cs + beta_sin * sn);
      const double t = lambdas[k] + c * (1.0 - y[k] * s);
      energy += t * t / (2.0 * lambdas[k]);
      // d/dw of t^2/(2 lambda) = (t / lambda) * (-C y) * d s/dw, d s/dw = scale (beta_sin cos - beta_cos sin) h
      coeff[k] = -(t / lambdas[k]) * c * y[k] * scale * (beta_sin * cs - beta_cos * sn);
    }
    out.value += energy;
    out.gradient += latents * coeff;
    return out;
  }
};

}  // namespace m3lak
