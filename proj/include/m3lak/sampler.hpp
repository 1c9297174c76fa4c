#pragma once

// Full post-data posterior sampler: one sweep updates beta, lambda, the frequencies
// and shared latents (HMC), the frequency mixture (slice sampler) and the LVM block
// (U, W, V, r, tau), in that order.

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "m3lak/distributions.hpp"
#include "m3lak/error.hpp"
#include "m3lak/hmc.hpp"
#include "m3lak/maxmargin.hpp"
#include "m3lak/multiview_lvm.hpp"
#include "m3lak/potentials.hpp"
#include "m3lak/rff_dpmm.hpp"
#include "m3lak/rng.hpp"

namespace m3lak {

struct Hyperparameters {
  Eigen::Index m = 20;                  // shared latent dimension
  Eigen::Index M = 100;                 // number of random frequencies
  std::vector<Eigen::Index> K = {5};    // private dimension per view; a single entry applies to all views
  double eta = 1e3;
  double alpha = 1.0;
  double C = 1.0;
  double v = 1e-2;
  double a_r = 1e-1;
  double b_r = 1e-5;
  double a_tau = 1e-2;
  double b_tau = 1e-5;
  std::optional<NiwBase> niw;           // NiwBase::defaults(m) when unset

  LvmHyper lvm() const { return {a_r, b_r, a_tau, b_tau, eta}; }

  Eigen::Index private_dim(std::size_t view) const {
    if (K.empty()) throw InvalidParameter("Hyperparameters: K is empty");
    return K.size() == 1 ? K.front() : K.at(view);
  }

  NiwBase base() const { return niw ? *niw : NiwBase::defaults(m); }

  void validate(std::size_t views) const {
    if (m < 1 || M < 1) throw InvalidParameter("Hyperparameters: m and M must be positive");
    if (K.size() != 1 && K.size() != views)
      throw InvalidParameter("Hyperparameters: K needs one entry or one per view (" + std::to_string(views) + ")");
    for (auto k : K)
      if (k < 1) throw InvalidParameter("Hyperparameters: every K must be positive");
    if (!(alpha > 0.0 && C > 0.0 && v > 0.0)) throw InvalidParameter("Hyperparameters: alpha, C and v must be positive");
    lvm().validate();
    base().validate();
    if (base().dim() != m) throw InvalidParameter("Hyperparameters: NIW base dimension differs from m");
  }
};

struct SamplerConfig {
  std::size_t max_iter = 1000;
  std::size_t burn_in = 800;
  std::size_t collect_count = 200;
  std::size_t thinning = 1;
  std::uint64_t seed = 1;
  std::size_t cv_folds = 5;
  Hyperparameters hyper;
  HmcConfig hmc_h{};
  HmcConfig hmc_omega{};
  bool adapt_step_size = true;
  // LVM-only Gibbs sweeps between initialization and the first full sweep.
  std::size_t lvm_warmup = 50;

  void validate() const {
    if (max_iter == 0 || collect_count == 0 || thinning == 0)
      throw InvalidParameter("SamplerConfig: max_iter, collect_count and thinning must be positive");
    if (burn_in + collect_count * thinning > max_iter)
      throw InvalidParameter("SamplerConfig: burn_in + collect_count * thinning exceeds max_iter");
    hmc_h.validate();
    hmc_omega.validate();
  }
};

struct ViewSnapshot {
  MatrixXd W;
  MatrixXd V;
  double tau;
};

struct Snapshot {
  std::size_t iteration = 0;
  std::vector<ViewSnapshot> views;
  MatrixXd omegas;  // m x M
  VectorXd beta;
  // mixture, kept for diagnostics
  std::vector<VectorXd> component_means;
  std::vector<MatrixXd> component_covariances;
  VectorXd component_weights;
  double remainder = 0.0;
};

/// Append-only collection of posterior snapshots; stored snapshots are never modified.
class PosteriorSamples {
 public:
  PosteriorSamples() = default;
  PosteriorSamples(Eigen::Index m, Eigen::Index big_m, std::vector<Eigen::Index> feature_dims,
                   std::vector<Eigen::Index> private_dims)
      : m_(m), big_m_(big_m), feature_dims_(std::move(feature_dims)), private_dims_(std::move(private_dims)) {}

  void append(Snapshot s) {
    if (s.views.size() != feature_dims_.size()) throw InvalidParameter("PosteriorSamples: snapshot view count");
    for (std::size_t i = 0; i < s.views.size(); ++i)
      if (s.views[i].W.rows() != feature_dims_[i] || s.views[i].W.cols() != m_ ||
          s.views[i].V.cols() != private_dims_[i])
        throw InvalidParameter("PosteriorSamples: snapshot shape differs from header");
    if (s.omegas.rows() != m_ || s.omegas.cols() != big_m_ || s.beta.size() != 2 * big_m_ + 1)
      throw InvalidParameter("PosteriorSamples: snapshot classifier shape differs from header");
    snapshots_.push_back(std::move(s));
  }

  const std::vector<Snapshot>& snapshots() const { return snapshots_; }
  std::size_t size() const { return snapshots_.size(); }
  Eigen::Index latent_dim() const { return m_; }
  Eigen::Index num_frequencies() const { return big_m_; }
  const std::vector<Eigen::Index>& feature_dims() const { return feature_dims_; }
  const std::vector<Eigen::Index>& private_dims() const { return private_dims_; }

 private:
  Eigen::Index m_ = 0;
  Eigen::Index big_m_ = 0;
  std::vector<Eigen::Index> feature_dims_;
  std::vector<Eigen::Index> private_dims_;
  std::vector<Snapshot> snapshots_;
};

struct ModelState {
  std::vector<ViewParams> views;
  LatentState latent;
  FrequencyBank bank;
  MixtureComponents mixture;
  NiwBase base;
  Classifier classifier;
  Augmentation augmentation;
  LvmHyper lvm;
  HmcConfig hmc_h;
  HmcConfig hmc_omega;
  std::uint64_t seed = 0;
  std::size_t sweeps_done = 0;

  // Caches consistent with (H, omegas, beta) after every step of a sweep.
  MatrixXd features;  // (2M+1) x N
  VectorXd scores;

  void refresh_features() {
    features = feature_matrix(latent.H, bank.omegas);
    scores = features.transpose() * classifier.beta;
  }

  /// Throws InternalInvariant when any member type invariant is broken.
  void check_invariants(const MultiViewDataset& data) const {
    const auto n = data.num_instances();
    const auto m = latent.H.rows();
    auto fail = [](const std::string& what) { throw InternalInvariant("state invariant violated: " + what); };
    if (latent.H.cols() != n || !latent.H.allFinite()) fail("H");
    if (views.size() != data.num_views() || latent.U.size() != views.size()) fail("view count");
    for (std::size_t i = 0; i < views.size(); ++i) {
      const auto& p = views[i];
      if (p.dim() != data.views[i].rows() || p.latent_dim() != m) fail("view " + std::to_string(i) + " shape");
      if (!(p.tau > 0.0) || !std::isfinite(p.tau)) fail("tau");
      if ((p.r.array() <= 0.0).any() || !p.r.allFinite()) fail("r");
      if (!p.W.allFinite() || !p.V.allFinite()) fail("W/V");
      if (latent.U[i].rows() != p.private_dim() || latent.U[i].cols() != n || !latent.U[i].allFinite()) fail("U");
    }
    if (bank.dim() != m || !bank.omegas.allFinite()) fail("omegas");
    for (auto z : bank.assignments)
      if (z >= mixture.active()) fail("assignment");
    if (std::abs(mixture.total_weight() - 1.0) > 1e-12) fail("mixture weights");
    for (const auto& c : mixture.components) {
      if (c.weight < 0.0) fail("negative weight");
      if (!is_symmetric(c.covariance)) fail("component covariance");
    }
    if (mixture.remainder < 0.0) fail("remainder");
    if (classifier.beta.size() != 2 * bank.size() + 1 || !classifier.beta.allFinite()) fail("beta");
    if (augmentation.lambdas.size() != n || (augmentation.lambdas.array() <= 0.0).any() ||
        !augmentation.lambdas.allFinite())
      fail("lambda");
  }
};

/// Carries the sweep/step where the chain failed and the last consistent snapshot.
class SamplerAbort : public NumericalDegeneracy {
 public:
  SamplerAbort(std::size_t sweep, std::string step, const std::string& cause, Snapshot last)
      : NumericalDegeneracy("sweep " + std::to_string(sweep) + ", step '" + step + "': " + cause),
        sweep_(sweep), step_(std::move(step)), last_(std::move(last)) {}

  std::size_t sweep() const { return sweep_; }
  const std::string& step() const { return step_; }
  const Snapshot& last_state() const { return last_; }

 private:
  std::size_t sweep_;
  std::string step_;
  Snapshot last_;
};

struct SweepStats {
  double accept_h = 0.0;
  double accept_omega = 0.0;
  std::size_t divergent = 0;
  double hinge_loss = 0.0;
  std::size_t active_components = 0;
  double seconds = 0.0;
};

struct TrainDiagnostics {
  double initial_hinge_loss = 0.0;
  std::vector<double> hinge_loss;
  std::vector<double> accept_h;
  std::vector<double> accept_omega;
  std::vector<std::size_t> active_components;
  std::vector<double> sweep_seconds;
  double final_step_size_h = 0.0;
  double final_step_size_omega = 0.0;
};

struct TrainResult {
  PosteriorSamples samples;
  TrainDiagnostics diagnostics;
};

inline Snapshot take_snapshot(const ModelState& state, std::size_t iteration) {
  Snapshot s;
  s.iteration = iteration;
  for (const auto& p : state.views) s.views.push_back({p.W, p.V, p.tau});
  s.omegas = state.bank.omegas;
  s.beta = state.classifier.beta;
  s.component_weights.resize(static_cast<Eigen::Index>(state.mixture.active()));
  for (std::size_t k = 0; k < state.mixture.active(); ++k) {
    s.component_means.push_back(state.mixture.components[k].mean);
    s.component_covariances.push_back(state.mixture.components[k].covariance);
    s.component_weights[static_cast<Eigen::Index>(k)] = state.mixture.components[k].weight;
  }
  s.remainder = state.mixture.remainder;
  return s;
}

inline const VectorXd& labels_of(const MultiViewDataset& data) {
  if (!data.labels) throw InvalidData("training requires labels");
  return *data.labels;
}

// ---------------------------------------------------------------------------

inline ModelState init_state(const MultiViewDataset& data, const SamplerConfig& config) {
  data.validate();
  labels_of(data);
  if (data.num_instances() == 0) throw InvalidData("dataset has no instances");
  config.validate();
  const auto& hp = config.hyper;
  hp.validate(data.num_views());

  ModelState s;
  s.seed = config.seed;
  s.lvm = hp.lvm();
  s.base = hp.base();
  s.hmc_h = config.hmc_h;
  s.hmc_omega = config.hmc_omega;
  const auto n = data.num_instances();

  auto rng = RngStream::keyed(config.seed, {0, tag(StreamTag::init)});
  for (std::size_t i = 0; i < data.num_views(); ++i)
    s.views.push_back(init_view_params(data.views[i].rows(), hp.m, hp.private_dim(i), s.lvm, rng));
  s.latent.H = MatrixXd(hp.m, n);
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index d = 0; d < hp.m; ++d) s.latent.H(d, k) = rng.normal();
  for (const auto& p : s.views) {
    MatrixXd u(p.private_dim(), n);
    for (Eigen::Index k = 0; k < n; ++k)
      for (Eigen::Index d = 0; d < u.rows(); ++d) u(d, k) = rng.normal();
    s.latent.U.push_back(std::move(u));
  }
  s.bank = init_frequency_bank(hp.m, hp.M, rng);
  s.mixture = init_mixture(s.base, hp.alpha, rng);
  s.classifier.beta = VectorXd::Zero(2 * hp.M + 1);
  s.classifier.v = hp.v;
  s.classifier.C = hp.C;
  s.augmentation.lambdas = VectorXd::Ones(n);
  s.refresh_features();
  return s;
}

/// Potential of h^n under the current state (builds the Gaussian coupling on demand).
inline LatentPotential potential_h(const ModelState& s, const MultiViewDataset& data, Eigen::Index n,
                                   const LatentCoupling& coupling) {
  return LatentPotential{coupling.gram, coupling.linear.col(n), coupling.constants[n], s.bank.omegas,
                         s.classifier.beta, labels_of(data)[n], s.augmentation.lambdas[n], s.classifier.C};
}

/// Potential of frequency j under the current state; base scores come from the cached scores.
inline FrequencyPotential potential_omega(const ModelState& s, const MultiViewDataset& data, Eigen::Index j) {
  const auto big_m = s.bank.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(big_m));
  const auto& comp = s.mixture.components.at(s.bank.assignments[static_cast<std::size_t>(j)]);
  const double bc = s.classifier.beta[j];
  const double bs = s.classifier.beta[big_m + j];
  const VectorXd proj = s.latent.H.transpose() * s.bank.omegas.col(j);
  VectorXd base = s.scores - scale * (bc * proj.array().cos() + bs * proj.array().sin()).matrix();
  return FrequencyPotential{comp.mean, jittered_cholesky(comp.covariance, "potential_omega"), s.latent.H,
                            std::move(base), labels_of(data), s.augmentation.lambdas, bc, bs, scale,
                            s.classifier.C};
}

/// One full sweep. Step-size adaptation runs only when `adapt` is set.
inline SweepStats sweep(ModelState& s, const MultiViewDataset& data, bool adapt) {
  const auto started = std::chrono::steady_clock::now();
  const auto iter = static_cast<std::uint64_t>(s.sweeps_done + 1);
  const auto& y = labels_of(data);
  const auto n = data.num_instances();
  const auto big_m = s.bank.size();
  SweepStats stats;
  std::string step;
  try {
    step = "beta";
    {
      auto rng = RngStream::keyed(s.seed, {iter, tag(StreamTag::beta)});
      s.classifier.beta = sample_beta(s.features, y, s.augmentation.lambdas, s.classifier.v, s.classifier.C, rng);
      s.scores = s.features.transpose() * s.classifier.beta;
    }

    step = "lambda";
    for (Eigen::Index k = 0; k < n; ++k) {
      auto rng = RngStream::keyed(s.seed, {iter, tag(StreamTag::lambda), static_cast<std::uint64_t>(k)});
      s.augmentation.lambdas[k] = sample_lambda(y[k], s.scores[k], s.classifier.C, rng);
    }

    step = "omega";
    StepSizeAdapter omega_tally;
    for (Eigen::Index j = 0; j < big_m; ++j) {
      auto rng = RngStream::keyed(s.seed, {iter, tag(StreamTag::omega), static_cast<std::uint64_t>(j)});
      const auto pot = potential_omega(s, data, j);
      auto out = hmc_step(VectorXd(s.bank.omegas.col(j)), pot, s.hmc_omega, rng);
      omega_tally.record(out.accepted);
      if (out.divergent) ++stats.divergent;
      if (out.accepted) {
        s.bank.omegas.col(j) = out.position;
        s.scores = pot.scores(out.position);
      }
    }
    stats.accept_omega = omega_tally.rate();

    step = "latent_h";
    StepSizeAdapter h_tally;
    {
      const auto coupling = latent_coupling(data, s.views, s.latent);
      for (Eigen::Index k = 0; k < n; ++k) {
        auto rng = RngStream::keyed(s.seed, {iter, tag(StreamTag::latent_h), static_cast<std::uint64_t>(k)});
        const auto pot = potential_h(s, data, k, coupling);
        auto out = hmc_step(VectorXd(s.latent.H.col(k)), pot, s.hmc_h, rng);
        h_tally.record(out.accepted);
        if (out.divergent) ++stats.divergent;
        if (out.accepted) s.latent.H.col(k) = out.position;
      }
    }
    stats.accept_h = h_tally.rate();
    s.refresh_features();

    step = "dpmm";
    dpmm_sweep(s.bank, s.mixture, s.base, s.seed, iter);

    step = "lvm";
    lvm_gibbs_block(data, s.views, s.latent, s.lvm, s.seed, iter);

    step = "invariants";
    s.check_invariants(data);
    if (!s.scores.allFinite()) throw NumericalDegeneracy("non-finite classifier scores");

    if (adapt) {
      omega_tally.adapt(s.hmc_omega);
      h_tally.adapt(s.hmc_h);
    }
  } catch (const Error& e) {
    throw SamplerAbort(static_cast<std::size_t>(iter), step, e.what(), take_snapshot(s, static_cast<std::size_t>(iter)));
  }
  ++s.sweeps_done;
  stats.hinge_loss = mean_hinge_loss(y, s.scores);
  stats.active_components = s.mixture.active();
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return stats;
}

/// Runs `sweeps` unsupervised LVM sweeps (H, then U, W, V, r, tau) on a fresh state.
inline void warm_start(ModelState& s, const MultiViewDataset& data, std::size_t sweeps) {
  // Keys with the top bit set never coincide with a regular sweep index.
  for (std::size_t w = 0; w < sweeps; ++w) {
    const std::uint64_t key = (std::uint64_t{1} << 63) | static_cast<std::uint64_t>(w + 1);
    sample_h_given_views(data, s.views, s.latent, s.seed, key);
    lvm_gibbs_block(data, s.views, s.latent, s.lvm, s.seed, key);
  }
  s.refresh_features();
  s.check_invariants(data);
}

using SweepCallback = std::function<void(std::size_t iteration, const SweepStats&)>;

inline TrainResult train(const MultiViewDataset& data, const SamplerConfig& config, const SweepCallback& on_sweep = {}) {
  ModelState s = init_state(data, config);
  warm_start(s, data, config.lvm_warmup);
  std::vector<Eigen::Index> private_dims;
  for (const auto& p : s.views) private_dims.push_back(p.private_dim());
  TrainResult out{PosteriorSamples(config.hyper.m, config.hyper.M, data.feature_dims(), private_dims), {}};
  auto& diag = out.diagnostics;
  diag.initial_hinge_loss = mean_hinge_loss(labels_of(data), s.scores);

  for (std::size_t it = 0; it < config.max_iter; ++it) {
    const bool burning = it < config.burn_in;
    const auto stats = sweep(s, data, burning && config.adapt_step_size);
    diag.hinge_loss.push_back(stats.hinge_loss);
    diag.accept_h.push_back(stats.accept_h);
    diag.accept_omega.push_back(stats.accept_omega);
    diag.active_components.push_back(stats.active_components);
    diag.sweep_seconds.push_back(stats.seconds);
    if (!burning && out.samples.size() < config.collect_count && (it - config.burn_in + 1) % config.thinning == 0)
      out.samples.append(take_snapshot(s, it + 1));
    if (on_sweep) on_sweep(it + 1, stats);
  }
  diag.final_step_size_h = s.hmc_h.step_size;
  diag.final_step_size_omega = s.hmc_omega.step_size;
  return out;
}

// ---------------------------------------------------------------------------
// Prediction

enum class LatentMode {
  per_snapshot,  // test latents re-inferred under every snapshot's LVM parameters
  averaged,      // one latent per instance, averaged over snapshots, shared by every classifier
};

struct Prediction {
  VectorXd scores;
  std::vector<int> labels;
};

inline std::vector<ViewParams> snapshot_views(const Snapshot& snap) {
  std::vector<ViewParams> out;
  for (const auto& v : snap.views) {
    ViewParams p;
    p.W = v.W;
    p.V = v.V;
    p.tau = v.tau;
    p.r = VectorXd::Ones(v.W.cols());
    out.push_back(std::move(p));
  }
  return out;
}

inline Prediction predict(const PosteriorSamples& samples, const std::vector<MatrixXd>& test_views,
                          LatentMode mode = LatentMode::per_snapshot) {
  if (samples.size() == 0) throw InvalidParameter("predict: no posterior snapshots");
  const auto& dims = samples.feature_dims();
  if (test_views.size() != dims.size())
    throw InvalidParameter("predict: expected " + std::to_string(dims.size()) + " views, got " +
                           std::to_string(test_views.size()));
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (test_views[i].rows() != dims[i])
      throw InvalidParameter("predict: view " + std::to_string(i) + " expected D=" + std::to_string(dims[i]) +
                             ", got D=" + std::to_string(test_views[i].rows()));
  const auto n = test_views.front().cols();
  VectorXd total = VectorXd::Zero(n);
  const auto& snaps = samples.snapshots();
  if (mode == LatentMode::per_snapshot) {
    for (const auto& snap : snaps) {
      const auto latent = infer_test_latents(test_views, snapshot_views(snap));
      total += feature_matrix(latent.means, snap.omegas).transpose() * snap.beta;
    }
  } else {
    MatrixXd mean_latent = MatrixXd::Zero(samples.latent_dim(), n);
    for (const auto& snap : snaps) mean_latent += infer_test_latents(test_views, snapshot_views(snap)).means;
    mean_latent /= static_cast<double>(snaps.size());
    for (const auto& snap : snaps) total += feature_matrix(mean_latent, snap.omegas).transpose() * snap.beta;
  }
  Prediction out;
  out.scores = total / static_cast<double>(snaps.size());
  out.labels.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) out.labels.push_back(predict_label(out.scores[k]));
  return out;
}

}  // namespace m3lak
