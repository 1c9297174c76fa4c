#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "m3lak/distributions.hpp"
#include "m3lak/error.hpp"
#include "m3lak/rng.hpp"

namespace m3lak {

struct HmcConfig {
  double step_size = 0.05;
  int leapfrog_steps = 10;
  // Burn-in adaptation keeps the acceptance rate inside [target_low, target_high].
  double target_low = 0.6;
  double target_high = 0.9;

  void validate() const {
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw InvalidParameter("HmcConfig: step size must be positive");
    if (leapfrog_steps < 1) throw InvalidParameter("HmcConfig: need at least one leapfrog step");
    if (!(target_low < target_high)) throw InvalidParameter("HmcConfig: empty acceptance target");
  }
};

/// Potential energy U(q) = -log density (up to a constant) and its gradient.
struct PotentialEval {
  double value = 0.0;
  VectorXd gradient;

  bool finite() const { return std::isfinite(value) && gradient.allFinite(); }
};

template <class F>
concept Potential = requires(const F& f, const VectorXd& q) {
  { f(q) } -> std::convertible_to<PotentialEval>;
};

struct Trajectory {
  VectorXd position;
  VectorXd momentum;
  PotentialEval end;
  bool divergent = false;
};

/// Half kick, L alternating drifts and kicks, half kick. Identity mass matrix.
template <Potential F>
Trajectory leapfrog(VectorXd q, VectorXd p, const F& potential, double step_size, int steps,
                    std::optional<PotentialEval> start = std::nullopt) {
  if (!(step_size > 0.0) || steps < 1) throw InvalidParameter("leapfrog: need step size > 0 and L >= 1");
  if (q.size() != p.size()) throw InvalidParameter("leapfrog: position and momentum sizes differ");
  PotentialEval eval = start ? std::move(*start) : potential(q);
  if (!eval.finite()) return {std::move(q), std::move(p), std::move(eval), true};
  p -= 0.5 * step_size * eval.gradient;
  for (int s = 0; s < steps; ++s) {
    q += step_size * p;
    eval = potential(q);
    if (!eval.finite() || !q.allFinite()) return {std::move(q), std::move(p), std::move(eval), true};
    if (s + 1 < steps) p -= step_size * eval.gradient;
  }
  p -= 0.5 * step_size * eval.gradient;
  const bool bad = !p.allFinite();
  return {std::move(q), std::move(p), std::move(eval), bad};
}

struct HmcOutcome {
  VectorXd position;
  PotentialEval eval;
  bool accepted = false;
  bool divergent = false;
  double accept_prob = 0.0;
};

/// One HMC transition: fresh N(0, I) momentum, leapfrog proposal, Metropolis correction.
template <Potential F>
HmcOutcome hmc_step(const VectorXd& q, const F& potential, const HmcConfig& config, RngStream& rng,
                    std::optional<PotentialEval> current = std::nullopt) {
  PotentialEval here = current ? std::move(*current) : potential(q);
  if (!here.finite()) throw NumericalDegeneracy("hmc_step: potential is not finite at the current position");
  const VectorXd p0 = standard_normal_vector(q.size(), rng);
  const double h0 = here.value + 0.5 * p0.squaredNorm();
  auto traj = leapfrog(q, p0, potential, config.step_size, config.leapfrog_steps, here);
  const double u = rng.uniform();
  if (traj.divergent) return {q, std::move(here), false, true, 0.0};
  const double h1 = traj.end.value + 0.5 * traj.momentum.squaredNorm();
  const double accept_prob = std::isfinite(h1) ? std::min(1.0, std::exp(h0 - h1)) : 0.0;
  if (u < accept_prob) return {std::move(traj.position), std::move(traj.end), true, false, accept_prob};
  return {q, std::move(here), false, false, accept_prob};
}

/// Multiplicative step-size tuning: x1.1 above the target band, x0.9 below it.
class StepSizeAdapter {
 public:
  void record(bool accepted) {
    ++proposals_;
    if (accepted) ++accepted_;
  }

  double rate() const {
    return proposals_ == 0 ? std::numeric_limits<double>::quiet_NaN()
                           : static_cast<double>(accepted_) / static_cast<double>(proposals_);
  }

  /// Applies one adaptation step from the tallies since the last call, then resets them.
  void adapt(HmcConfig& config) {
    if (proposals_ > 0) {
      const double r = rate();
      if (r > config.target_high) config.step_size *= 1.1;
      else if (r < config.target_low) config.step_size *= 0.9;
    }
    reset();
  }

  void reset() { proposals_ = accepted_ = 0; }

 private:
  std::size_t proposals_ = 0;
  std::size_t accepted_ = 0;
};

}  // namespace m3lak
