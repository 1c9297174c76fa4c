#pragma once

// Multi-view latent variable model with a low-rank per-view covariance:
//   h, u_i ~ N(0, I),   x_i ~ N(W_i h + V_i u_i, tau_i^{-1} I)
// with ARD precisions r_ij on the columns of W_i and a shared precision eta on V_i.
// Data matrices are stored feature-major: X_i is D_i x N, H is m x N, U_i is K_i x N.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "m3lak/distributions.hpp"
#include "m3lak/error.hpp"
#include "m3lak/rng.hpp"

namespace m3lak {

struct MultiViewDataset {
  std::vector<MatrixXd> views;
  std::optional<VectorXd> labels;

  Eigen::Index num_instances() const { return views.empty() ? 0 : views.front().cols(); }
  std::size_t num_views() const { return views.size(); }
  bool labeled() const { return labels.has_value(); }

  std::vector<Eigen::Index> feature_dims() const {
    std::vector<Eigen::Index> dims;
    for (const auto& x : views) dims.push_back(x.rows());
    return dims;
  }

  void validate() const {
    if (views.empty()) throw InvalidData("dataset has no views");
    const auto n = views.front().cols();
    for (std::size_t i = 0; i < views.size(); ++i) {
      if (views[i].cols() != n)
        throw InvalidData("view " + std::to_string(i) + " has " + std::to_string(views[i].cols()) +
                          " instances, expected " + std::to_string(n));
      if (views[i].rows() == 0) throw InvalidData("view " + std::to_string(i) + " has no features");
      if (!views[i].allFinite()) throw InvalidData("view " + std::to_string(i) + " has non-finite values");
    }
    if (labels) {
      if (labels->size() != n)
        throw InvalidData("label count " + std::to_string(labels->size()) + " does not match " +
                          std::to_string(n) + " instances");
      for (Eigen::Index k = 0; k < labels->size(); ++k)
        if ((*labels)[k] != 1.0 && (*labels)[k] != -1.0)
          throw InvalidData("label at index " + std::to_string(k) + " is not +1 or -1");
    }
  }
};

struct ViewParams {
  MatrixXd W;   // D x m
  MatrixXd V;   // D x K
  double tau = 1.0;
  VectorXd r;   // length m
  double eta = 1e3;

  Eigen::Index dim() const { return W.rows(); }
  Eigen::Index latent_dim() const { return W.cols(); }
  Eigen::Index private_dim() const { return V.cols(); }

  void validate() const {
    if (V.rows() != W.rows()) throw InvalidParameter("ViewParams: W and V row counts differ");
    if (r.size() != W.cols()) throw InvalidParameter("ViewParams: r length must equal the columns of W");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidParameter("ViewParams: tau must be positive");
    if (!(eta > 0.0)) throw InvalidParameter("ViewParams: eta must be positive");
    if ((r.array() <= 0.0).any() || !r.allFinite()) throw InvalidParameter("ViewParams: r must be positive");
    if (!W.allFinite() || !V.allFinite()) throw InvalidParameter("ViewParams: non-finite projection");
  }
};

struct LatentState {
  MatrixXd H;              // m x N
  std::vector<MatrixXd> U;  // K_i x N per view
};

struct LvmHyper {
  double a_r = 1e-1;
  double b_r = 1e-5;
  double a_tau = 1e-2;
  double b_tau = 1e-5;
  double eta = 1e3;

  void validate() const {
    if (!(a_r > 0 && b_r > 0 && a_tau > 0 && b_tau > 0 && eta > 0))
      throw InvalidParameter("LvmHyper: all hyperparameters must be positive");
  }
};

struct GammaParams {
  double shape;
  double rate;
};

/// Isotropic Gaussian over one projection column: N(mean, variance * I).
struct ColumnConditional {
  VectorXd mean;
  double variance;
};

struct GaussianMoments {
  VectorXd mean;
  MatrixXd covariance;
};

struct SyntheticData {
  MultiViewDataset dataset;
  LatentState latent;
};

// ---------------------------------------------------------------------------
// Construction

inline SyntheticData generate_synthetic(const std::vector<ViewParams>& params, Eigen::Index n, RngStream& rng) {
  if (n <= 0) throw InvalidParameter("generate_synthetic: N must be positive");
  if (params.empty()) throw InvalidParameter("generate_synthetic: no views");
  const auto m = params.front().latent_dim();
  for (const auto& p : params) {
    p.validate();
    if (p.latent_dim() != m) throw InvalidParameter("generate_synthetic: views disagree on latent dimension");
  }
  SyntheticData out;
  out.latent.H.resize(m, n);
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index j = 0; j < m; ++j) out.latent.H(j, k) = rng.normal();
  for (const auto& p : params) {
    MatrixXd u(p.private_dim(), n);
    for (Eigen::Index k = 0; k < n; ++k)
      for (Eigen::Index j = 0; j < u.rows(); ++j) u(j, k) = rng.normal();
    MatrixXd x = p.W * out.latent.H + p.V * u;
    const double sd = 1.0 / std::sqrt(p.tau);
    for (Eigen::Index k = 0; k < n; ++k)
      for (Eigen::Index d = 0; d < x.rows(); ++d) x(d, k) += sd * rng.normal();
    out.dataset.views.push_back(std::move(x));
    out.latent.U.push_back(std::move(u));
  }
  return out;
}

/// Diffuse start: W, V entries ~ N(0, 0.01), tau = 1, r at its prior mean.
inline ViewParams init_view_params(Eigen::Index dim, Eigen::Index m, Eigen::Index k, const LvmHyper& hyper,
                                   RngStream& rng) {
  ViewParams p;
  p.W.resize(dim, m);
  p.V.resize(dim, k);
  for (Eigen::Index c = 0; c < m; ++c)
    for (Eigen::Index d = 0; d < dim; ++d) p.W(d, c) = 0.1 * rng.normal();
  for (Eigen::Index c = 0; c < k; ++c)
    for (Eigen::Index d = 0; d < dim; ++d) p.V(d, c) = 0.1 * rng.normal();
  p.tau = 1.0;
  p.r = VectorXd::Constant(m, hyper.a_r / hyper.b_r);
  p.eta = hyper.eta;
  return p;
}

/// R = X - W H - V U.
inline MatrixXd view_residual(const MatrixXd& x, const ViewParams& p, const MatrixXd& h, const MatrixXd& u) {
  return x - p.W * h - p.V * u;
}

// ---------------------------------------------------------------------------
// View-private latents u

/// u | x, h ~ N(S tau V^T (x - W h), S) with S = (I + tau V^T V)^{-1}.
/// The precision is shared by every instance of a view, so it is factored once.
class UConditional {
 public:
  explicit UConditional(const ViewParams& p)
      : tau_v_t_(p.tau * p.V.transpose()),
        gaussian_(MatrixXd::Identity(p.private_dim(), p.private_dim()) + p.tau * p.V.transpose() * p.V,
                  VectorXd::Zero(p.private_dim()), "sample_u") {}

  /// `shared_residual` is x - W h.
  VectorXd mean(const VectorXd& shared_residual) const { return solve(tau_v_t_ * shared_residual); }

  MatrixXd covariance() const { return gaussian_.covariance(); }

  VectorXd draw(const VectorXd& shared_residual, RngStream& rng) const {
    const auto& l = gaussian_.chol;
    return mean(shared_residual) +
           l.transpose().triangularView<Eigen::Upper>().solve(standard_normal_vector(l.rows(), rng));
  }

 private:
  VectorXd solve(const VectorXd& b) const {
    const auto& l = gaussian_.chol;
    return l.transpose().triangularView<Eigen::Upper>().solve(l.triangularView<Eigen::Lower>().solve(b));
  }

  MatrixXd tau_v_t_;
  PrecisionGaussian gaussian_;
};

inline VectorXd sample_u(const ViewParams& p, const VectorXd& x, const VectorXd& h, RngStream& rng) {
  if (x.size() != p.dim() || h.size() != p.latent_dim()) throw InvalidParameter("sample_u: dimension mismatch");
  return UConditional(p).draw(x - p.W * h, rng);
}

// ---------------------------------------------------------------------------
// Projection columns

namespace detail {

// Conditional of one column b_j of B in R = X - B Z - (rest), given the full residual R
// (which still contains b_j z_j^T) and an isotropic prior precision.
inline ColumnConditional column_conditional(const MatrixXd& residual, const VectorXd& column,
                                            const VectorXd& latent_row, double prior_precision, double tau) {
  const double energy = latent_row.squaredNorm();
  const double precision = prior_precision + tau * energy;
  // (R + b_j z_j^T) z_j = R z_j + b_j |z_j|^2
  VectorXd linear = tau * (residual * latent_row + column * energy);
  return {linear / precision, 1.0 / precision};
}

inline void draw_column(MatrixXd& residual, Eigen::Ref<VectorXd> column, const VectorXd& latent_row,
                        const ColumnConditional& cond, RngStream& rng) {
  const double sd = std::sqrt(cond.variance);
  VectorXd fresh = cond.mean;
  for (Eigen::Index d = 0; d < fresh.size(); ++d) fresh[d] += sd * rng.normal();
  residual.noalias() -= (fresh - column) * latent_row.transpose();
  column = fresh;
}

}  // namespace detail

/// Conditional of column j of W given the full residual R = X - W H - V U.
inline ColumnConditional w_column_conditional(const MatrixXd& residual, const ViewParams& p, const MatrixXd& h,
                                              Eigen::Index j) {
  return detail::column_conditional(residual, p.W.col(j), h.row(j).transpose(), p.r[j], p.tau);
}

inline ColumnConditional v_column_conditional(const MatrixXd& residual, const ViewParams& p, const MatrixXd& u,
                                              Eigen::Index j) {
  return detail::column_conditional(residual, p.V.col(j), u.row(j).transpose(), p.eta, p.tau);
}

/// Draws column j of W and rank-1 updates the cached residual.
inline void sample_w_column(MatrixXd& residual, ViewParams& p, const MatrixXd& h, Eigen::Index j, RngStream& rng) {
  const auto cond = w_column_conditional(residual, p, h, j);
  detail::draw_column(residual, p.W.col(j), h.row(j).transpose(), cond, rng);
}

inline void sample_v_column(MatrixXd& residual, ViewParams& p, const MatrixXd& u, Eigen::Index j, RngStream& rng) {
  const auto cond = v_column_conditional(residual, p, u, j);
  detail::draw_column(residual, p.V.col(j), u.row(j).transpose(), cond, rng);
}

// ---------------------------------------------------------------------------
// Precisions

inline GammaParams r_conditional(const ViewParams& p, const LvmHyper& hyper, Eigen::Index j) {
  return {hyper.a_r + 0.5 * static_cast<double>(p.dim()), hyper.b_r + 0.5 * p.W.col(j).squaredNorm()};
}

inline void sample_r(ViewParams& p, const LvmHyper& hyper, RngStream& rng) {
  for (Eigen::Index j = 0; j < p.latent_dim(); ++j) {
    const auto g = r_conditional(p, hyper, j);
    p.r[j] = gamma_draw(g.shape, g.rate, rng);
  }
}

inline GammaParams tau_conditional(const MatrixXd& residual, const LvmHyper& hyper) {
  return {hyper.a_tau + 0.5 * static_cast<double>(residual.size()), hyper.b_tau + 0.5 * residual.squaredNorm()};
}

inline void sample_tau(ViewParams& p, const MatrixXd& residual, const LvmHyper& hyper, RngStream& rng) {
  const auto g = tau_conditional(residual, hyper);
  p.tau = gamma_draw(g.shape, g.rate, rng);
}

// ---------------------------------------------------------------------------
// Shared latents with u marginalized (prediction path)

struct LatentPosterior {
  MatrixXd means;       // m x N
  MatrixXd covariance;  // m x m, shared by all instances
};

/// p(h | x_1..x_V) for every column of the test views, with Psi_i = V_i V_i^T + tau_i^{-1} I
/// inverted through the Woodbury identity (only K_i x K_i systems are factored).
inline LatentPosterior infer_test_latents(const std::vector<MatrixXd>& views, const std::vector<ViewParams>& params) {
  if (views.size() != params.size() || params.empty())
    throw InvalidParameter("infer_test_latents: expected " + std::to_string(params.size()) + " views, got " +
                           std::to_string(views.size()));
  const auto m = params.front().latent_dim();
  const auto n = views.front().cols();
  MatrixXd precision = MatrixXd::Identity(m, m);
  MatrixXd linear = MatrixXd::Zero(m, n);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const auto& x = views[i];
    if (x.rows() != p.dim())
      throw InvalidParameter("infer_test_latents: view " + std::to_string(i) + " expected D=" +
                             std::to_string(p.dim()) + ", got " + std::to_string(x.rows()));
    if (x.cols() != n) throw InvalidParameter("infer_test_latents: views disagree on instance count");
    const auto k = p.private_dim();
    const MatrixXd s = MatrixXd::Identity(k, k) + p.tau * p.V.transpose() * p.V;
    const Eigen::LLT<MatrixXd> s_llt(s);
    if (s_llt.info() != Eigen::Success) throw NumericalDegeneracy("infer_test_latents: Woodbury core not SPD");
    const MatrixXd vtw = p.V.transpose() * p.W;
    precision += p.tau * p.W.transpose() * p.W - p.tau * p.tau * vtw.transpose() * s_llt.solve(vtw);
    linear += p.tau * p.W.transpose() * x - p.tau * p.tau * vtw.transpose() * s_llt.solve(p.V.transpose() * x);
  }
  const MatrixXd l = jittered_cholesky(0.5 * (precision + precision.transpose()), "infer_test_latents");
  LatentPosterior out;
  out.means = l.transpose().triangularView<Eigen::Upper>().solve(l.triangularView<Eigen::Lower>().solve(linear));
  const MatrixXd inv_l = l.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(m, m));
  out.covariance = inv_l.transpose() * inv_l;
  return out;
}

inline GaussianMoments infer_test_latent(const std::vector<VectorXd>& x, const std::vector<ViewParams>& params) {
  std::vector<MatrixXd> cols;
  for (const auto& v : x) cols.emplace_back(v);
  auto post = infer_test_latents(cols, params);
  return {post.means.col(0), post.covariance};
}

// ---------------------------------------------------------------------------
// Gibbs block

/// Exact Gibbs draw of every h^n given u (used when no classifier is attached).
inline void sample_h_given_views(const MultiViewDataset& data, const std::vector<ViewParams>& params, LatentState& latent,
                                 std::uint64_t seed, std::uint64_t sweep) {
  const auto m = latent.H.rows();
  MatrixXd precision = MatrixXd::Identity(m, m);
  MatrixXd linear = MatrixXd::Zero(m, data.num_instances());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    precision += p.tau * p.W.transpose() * p.W;
    linear += p.tau * p.W.transpose() * (data.views[i] - p.V * latent.U[i]);
  }
  const MatrixXd l = jittered_cholesky(precision, "sample_h_given_views");
  MatrixXd means = l.transpose().triangularView<Eigen::Upper>().solve(l.triangularView<Eigen::Lower>().solve(linear));
  for (Eigen::Index n = 0; n < means.cols(); ++n) {
    auto rng = RngStream::keyed(seed, {sweep, tag(StreamTag::latent_h), static_cast<std::uint64_t>(n)});
    latent.H.col(n) = means.col(n) + l.transpose().triangularView<Eigen::Upper>().solve(standard_normal_vector(m, rng));
  }
}

/// One pass of the conjugate LVM updates in the order U, W, V, r, tau.
/// The residual is rebuilt from scratch and then maintained by rank-1 updates.
inline void lvm_gibbs_block(const MultiViewDataset& data, std::vector<ViewParams>& params, LatentState& latent,
                            const LvmHyper& hyper, std::uint64_t seed, std::uint64_t sweep) {
  const auto n_inst = data.num_instances();
  std::vector<MatrixXd> residual(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& u = latent.U[i];
    const MatrixXd shared = data.views[i] - p.W * latent.H;
    const UConditional cond(p);
    for (Eigen::Index n = 0; n < n_inst; ++n) {
      auto rng = RngStream::keyed(seed, {sweep, tag(StreamTag::latent_u), i, static_cast<std::uint64_t>(n)});
      u.col(n) = cond.draw(shared.col(n), rng);
    }
    residual[i] = shared - p.V * u;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto rng = RngStream::keyed(seed, {sweep, tag(StreamTag::w_columns), i});
    for (Eigen::Index j = 0; j < params[i].latent_dim(); ++j) sample_w_column(residual[i], params[i], latent.H, j, rng);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto rng = RngStream::keyed(seed, {sweep, tag(StreamTag::v_columns), i});
    for (Eigen::Index j = 0; j < params[i].private_dim(); ++j)
      sample_v_column(residual[i], params[i], latent.U[i], j, rng);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto rng = RngStream::keyed(seed, {sweep, tag(StreamTag::ard), i});
    sample_r(params[i], hyper, rng);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto rng = RngStream::keyed(seed, {sweep, tag(StreamTag::noise), i});
    sample_tau(params[i], residual[i], hyper, rng);
  }
}

}  // namespace m3lak
