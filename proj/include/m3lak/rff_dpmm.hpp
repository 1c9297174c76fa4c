#pragma once

// Random Fourier feature map and the Dirichlet-process Gaussian mixture over its
// frequencies, updated by slice sampling (slices, stick extension, assignment,
// component parameters, weights).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "m3lak/distributions.hpp"
#include "m3lak/error.hpp"
#include "m3lak/rng.hpp"

namespace m3lak {

inline constexpr std::size_t kMaxStickExtensions = 10000;

struct FrequencyBank {
  MatrixXd omegas;                       // m x M, one frequency per column
  std::vector<std::size_t> assignments;  // z_j, 0-based component index
  VectorXd slices;                       // t_j

  Eigen::Index size() const { return omegas.cols(); }
  Eigen::Index dim() const { return omegas.rows(); }
};

struct MixtureComponent {
  VectorXd mean;
  MatrixXd covariance;
  double weight = 0.0;
  double stick = 0.0;
};

struct MixtureComponents {
  std::vector<MixtureComponent> components;
  double remainder = 1.0;  // unallocated stick mass
  double alpha = 1.0;

  std::size_t active() const { return components.size(); }

  double total_weight() const {
    double s = remainder;
    for (const auto& c : components) s += c.weight;
    return s;
  }
};

/// Normal-Inverse-Wishart base measure: Sigma ~ IW(psi0, nu0), mu ~ N(mu0, Sigma / kappa0).
struct NiwBase {
  VectorXd mu0;
  double kappa0 = 0.01;
  MatrixXd psi0;
  double nu0 = 4.0;

  static NiwBase defaults(Eigen::Index m) {
    return {VectorXd::Zero(m), 0.01, MatrixXd::Identity(m, m), static_cast<double>(m) + 2.0};
  }

  Eigen::Index dim() const { return mu0.size(); }

  void validate() const {
    if (psi0.rows() != mu0.size() || psi0.cols() != mu0.size()) throw InvalidParameter("NiwBase: shape mismatch");
    if (!(kappa0 > 0.0)) throw InvalidParameter("NiwBase: kappa0 must be positive");
    if (!(nu0 > static_cast<double>(mu0.size()) - 1.0)) throw InvalidParameter("NiwBase: need nu0 > m - 1");
    if (!is_symmetric(psi0)) throw InvalidParameter("NiwBase: psi0 must be symmetric");
  }
};

struct NiwPosterior {
  VectorXd mu;
  double kappa;
  MatrixXd psi;
  double nu;
};

// ---------------------------------------------------------------------------
// Feature map

/// phi~(h) = (M^{-1/2}[cos(w_1.h) .. cos(w_M.h), sin(w_1.h) .. sin(w_M.h)], 1).
inline VectorXd feature_map(const VectorXd& h, const MatrixXd& omegas) {
  if (h.size() != omegas.rows())
    throw InvalidParameter("feature_map: latent has dimension " + std::to_string(h.size()) + ", frequencies have " +
                           std::to_string(omegas.rows()));
  const auto big_m = omegas.cols();
  VectorXd out(2 * big_m + 1);
  const double scale = big_m > 0 ? 1.0 / std::sqrt(static_cast<double>(big_m)) : 0.0;
  const VectorXd proj = omegas.transpose() * h;
  for (Eigen::Index j = 0; j < big_m; ++j) {
    out[j] = scale * std::cos(proj[j]);
    out[big_m + j] = scale * std::sin(proj[j]);
  }
  out[2 * big_m] = 1.0;
  return out;
}

inline VectorXd feature_map(const VectorXd& h, const FrequencyBank& bank) { return feature_map(h, bank.omegas); }

/// Columnwise feature map of an m x N latent matrix, (2M+1) x N.
inline MatrixXd feature_matrix(const MatrixXd& h, const MatrixXd& omegas) {
  if (h.rows() != omegas.rows()) throw InvalidParameter("feature_matrix: dimension mismatch");
  const auto big_m = omegas.cols();
  const double scale = big_m > 0 ? 1.0 / std::sqrt(static_cast<double>(big_m)) : 0.0;
  const MatrixXd proj = omegas.transpose() * h;
  MatrixXd out(2 * big_m + 1, h.cols());
  out.topRows(big_m) = scale * proj.array().cos().matrix();
  out.middleRows(big_m, big_m) = scale * proj.array().sin().matrix();
  out.row(2 * big_m).setOnes();
  return out;
}

// ---------------------------------------------------------------------------
// Initialization

inline FrequencyBank init_frequency_bank(Eigen::Index m, Eigen::Index big_m, RngStream& rng) {
  FrequencyBank bank;
  bank.omegas.resize(m, big_m);
  for (Eigen::Index j = 0; j < big_m; ++j)
    for (Eigen::Index d = 0; d < m; ++d) bank.omegas(d, j) = rng.normal();
  bank.assignments.assign(static_cast<std::size_t>(big_m), 0);
  bank.slices = VectorXd::Zero(big_m);
  return bank;
}

inline MixtureComponent draw_from_base(const NiwBase& base, RngStream& rng) {
  MixtureComponent c;
  c.covariance = inverse_wishart_draw(base.psi0, base.nu0, rng);
  c.mean = mvn_draw(base.mu0, c.covariance / base.kappa0, rng);
  return c;
}

/// One component drawn from the base, holding weight 1/(1+alpha).
inline MixtureComponents init_mixture(const NiwBase& base, double alpha, RngStream& rng) {
  if (!(alpha > 0.0)) throw InvalidParameter("init_mixture: alpha must be positive");
  MixtureComponents mix;
  mix.alpha = alpha;
  auto c = draw_from_base(base, rng);
  c.stick = 1.0 / (1.0 + alpha);
  c.weight = c.stick;
  mix.remainder = 1.0 - c.weight;
  mix.components.push_back(std::move(c));
  return mix;
}

// ---------------------------------------------------------------------------
// Slice sampler steps

/// t_j ~ U(0, weight of z_j); returns t* = min_j t_j.
inline double slice_step(FrequencyBank& bank, const MixtureComponents& mix, RngStream& rng) {
  double t_star = std::numeric_limits<double>::infinity();
  if (bank.slices.size() != bank.size()) bank.slices.resize(bank.size());
  for (Eigen::Index j = 0; j < bank.size(); ++j) {
    const auto z = bank.assignments[static_cast<std::size_t>(j)];
    if (z >= mix.active()) throw InternalInvariant("slice_step: assignment to inactive component");
    const double t = mix.components[z].weight * rng.uniform();
    bank.slices[j] = t;
    t_star = std::min(t_star, t);
  }
  return t_star;
}

/// Breaks new sticks off the remainder until it falls below t*.
inline void stick_extend(MixtureComponents& mix, double t_star, const NiwBase& base, RngStream& rng) {
  std::size_t added = 0;
  while (mix.remainder >= t_star) {
    if (++added > kMaxStickExtensions)
      throw DegenerateSlice("stick_extend: more than " + std::to_string(kMaxStickExtensions) +
                            " new components needed (t* = " + std::to_string(t_star) + ")");
    auto c = draw_from_base(base, rng);
    c.stick = beta_draw(1.0, mix.alpha, rng);
    c.weight = mix.remainder * c.stick;
    mix.remainder *= 1.0 - c.stick;
    mix.components.push_back(std::move(c));
  }
}

/// z_j drawn with probability proportional to N(w_j; mu_k, Sigma_k) over components with weight >= t_j.
inline void assign_components(FrequencyBank& bank, const MixtureComponents& mix, RngStream& rng) {
  const auto k_count = mix.active();
  std::vector<MatrixXd> chol(k_count);
  for (std::size_t k = 0; k < k_count; ++k)
    chol[k] = jittered_cholesky(mix.components[k].covariance, "assign_components");
  std::vector<double> logp(k_count);
  for (Eigen::Index j = 0; j < bank.size(); ++j) {
    const VectorXd w = bank.omegas.col(j);
    bool any = false;
    for (std::size_t k = 0; k < k_count; ++k) {
      if (mix.components[k].weight >= bank.slices[j]) {
        logp[k] = log_normal_density(w, mix.components[k].mean, chol[k]);
        any = true;
      } else {
        logp[k] = -std::numeric_limits<double>::infinity();
      }
    }
    if (!any) throw InternalInvariant("assign_components: no component is eligible for frequency " + std::to_string(j));
    bank.assignments[static_cast<std::size_t>(j)] = categorical_draw_log(logp, rng);
  }
}

/// Conjugate NIW update from the columns of `points` (m x s, s may be zero).
inline NiwPosterior niw_posterior(const NiwBase& base, const MatrixXd& points) {
  const double s = static_cast<double>(points.cols());
  NiwPosterior post{base.mu0, base.kappa0, base.psi0, base.nu0};
  if (points.cols() == 0) return post;
  const VectorXd mean = points.rowwise().mean();
  const MatrixXd centered = points.colwise() - mean;
  const VectorXd diff = mean - base.mu0;
  post.kappa = base.kappa0 + s;
  post.nu = base.nu0 + s;
  post.mu = (base.kappa0 * base.mu0 + s * mean) / post.kappa;
  post.psi = base.psi0 + centered * centered.transpose() + (base.kappa0 * s / post.kappa) * diff * diff.transpose();
  post.psi = 0.5 * (post.psi + post.psi.transpose());
  return post;
}

inline MixtureComponent sample_component_params(const MatrixXd& points, const NiwBase& base, RngStream& rng) {
  const auto post = niw_posterior(base, points);
  MixtureComponent c;
  c.covariance = inverse_wishart_draw(post.psi, post.nu, rng);
  c.mean = mvn_draw(post.mu, c.covariance / post.kappa, rng);
  return c;
}

/// (w_1..w_K, w*) ~ Dirichlet(s_1..s_K, alpha); the last entry of the result is the remainder.
inline VectorXd sample_weights(const std::vector<std::size_t>& counts, double alpha, RngStream& rng) {
  std::vector<double> conc;
  conc.reserve(counts.size() + 1);
  for (auto c : counts) {
    if (c == 0) throw InvalidParameter("sample_weights: empty components must be pruned first");
    conc.push_back(static_cast<double>(c));
  }
  conc.push_back(alpha);
  return dirichlet_draw(conc, rng);
}

/// Drops components without assigned frequencies and renumbers z. Returns the surviving counts.
inline std::vector<std::size_t> prune_empty(FrequencyBank& bank, MixtureComponents& mix) {
  std::vector<std::size_t> counts(mix.active(), 0);
  for (auto z : bank.assignments) ++counts[z];
  std::vector<std::size_t> remap(mix.active(), 0);
  std::vector<MixtureComponent> kept;
  std::vector<std::size_t> kept_counts;
  for (std::size_t k = 0; k < mix.active(); ++k) {
    if (counts[k] == 0) continue;
    remap[k] = kept.size();
    kept.push_back(std::move(mix.components[k]));
    kept_counts.push_back(counts[k]);
  }
  for (auto& z : bank.assignments) z = remap[z];
  mix.components = std::move(kept);
  return kept_counts;
}

/// Sticks consistent with the current weights: nu_k = w_k / (1 - sum_{l<k} w_l).
inline void refresh_sticks(MixtureComponents& mix) {
  double left = 1.0;
  for (auto& c : mix.components) {
    c.stick = left > 0.0 ? std::clamp(c.weight / left, 0.0, 1.0) : 0.0;
    left -= c.weight;
  }
}

/// One full slice-sampler sweep over the mixture with the frequencies held fixed.
inline void dpmm_sweep(FrequencyBank& bank, MixtureComponents& mix, const NiwBase& base, std::uint64_t seed,
                       std::uint64_t sweep) {
  auto slice_rng = RngStream::keyed(seed, {sweep, tag(StreamTag::slice)});
  const double t_star = slice_step(bank, mix, slice_rng);

  auto stick_rng = RngStream::keyed(seed, {sweep, tag(StreamTag::stick)});
  stick_extend(mix, t_star, base, stick_rng);

  auto assign_rng = RngStream::keyed(seed, {sweep, tag(StreamTag::assign)});
  assign_components(bank, mix, assign_rng);

  const auto counts = prune_empty(bank, mix);

  auto comp_rng = RngStream::keyed(seed, {sweep, tag(StreamTag::component)});
  for (std::size_t k = 0; k < mix.active(); ++k) {
    MatrixXd pts(bank.dim(), static_cast<Eigen::Index>(counts[k]));
    Eigen::Index col = 0;
    for (Eigen::Index j = 0; j < bank.size(); ++j)
      if (bank.assignments[static_cast<std::size_t>(j)] == k) pts.col(col++) = bank.omegas.col(j);
    auto fresh = sample_component_params(pts, base, comp_rng);
    mix.components[k].mean = std::move(fresh.mean);
    mix.components[k].covariance = std::move(fresh.covariance);
  }

  auto weight_rng = RngStream::keyed(seed, {sweep, tag(StreamTag::weights)});
  const VectorXd w = sample_weights(counts, mix.alpha, weight_rng);
  for (std::size_t k = 0; k < mix.active(); ++k) mix.components[k].weight = w[static_cast<Eigen::Index>(k)];
  mix.remainder = w[w.size() - 1];
  refresh_sticks(mix);
}

}  // namespace m3lak
