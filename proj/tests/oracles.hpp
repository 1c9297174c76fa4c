#pragma once

// Independent reference computations used by the tests: adaptive quadrature,
// brute-force grids, dense linear algebra, finite differences and Monte Carlo
// summaries. Nothing here calls into the sampler code it is checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <Eigen/Dense>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Integral of f over (0, inf).
inline double integrate_half_line(const std::function<double(double)>& f) {
  boost::math::quadrature::exp_sinh<double> integrator;
  return integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity());
}

inline double integrate(const std::function<double(double)>& f, double lo, double hi) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 20, 1e-13);
}

struct Moments {
  double mean;
  double variance;
};

/// Mean and variance of the unnormalized 1-d density exp(log_density) on a uniform grid.
inline Moments grid_moments(const std::function<double(double)>& log_density, double lo, double hi,
                            int points = 200001) {
  std::vector<double> lp(points);
  const double dx = (hi - lo) / (points - 1);
  double top = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < points; ++k) {
    lp[k] = log_density(lo + k * dx);
    top = std::max(top, lp[k]);
  }
  double z = 0, s1 = 0, s2 = 0;
  for (int k = 0; k < points; ++k) {
    const double x = lo + k * dx;
    const double w = std::exp(lp[k] - top);
    z += w;
    s1 += w * x;
    s2 += w * x * x;
  }
  const double mean = s1 / z;
  return {mean, s2 / z - mean * mean};
}

/// Moments of GIG(1/2, a, chi) by quadrature of lambda^{-1/2} exp(-(a lambda + chi/lambda)/2).
inline Moments gig_half_moments(double a, double chi) {
  auto dens = [&](double l, int power) {
    if (l <= 0) return 0.0;
    return std::pow(l, power - 0.5) * std::exp(-0.5 * (a * l + chi / l));
  };
  const double z = integrate_half_line([&](double l) { return dens(l, 0); });
  const double m1 = integrate_half_line([&](double l) { return dens(l, 1); }) / z;
  const double m2 = integrate_half_line([&](double l) { return dens(l, 2); }) / z;
  return {m1, m2 - m1 * m1};
}

/// Central differences of a scalar function.
inline VectorXd finite_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                                double step = 1e-5) {
  VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd hi = x, lo = x;
    hi[i] += step;
    lo[i] -= step;
    g[i] = (f(hi) - f(lo)) / (2 * step);
  }
  return g;
}

/// Largest entrywise relative error, with an absolute floor for entries near zero.
inline double gradient_error(const VectorXd& analytic, const VectorXd& numeric, double floor = 1.0) {
  double worst = 0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double mu = mean(v);
  double s = 0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size() - 1);
}

/// Standard error of the mean of independent draws.
inline double iid_standard_error(const std::vector<double>& v) {
  return std::sqrt(variance(v) / static_cast<double>(v.size()));
}

/// Standard error of the mean of a correlated chain by non-overlapping batch means.
inline double batch_standard_error(const std::vector<double>& v, std::size_t batches = 50) {
  const std::size_t len = v.size() / batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0;
    for (std::size_t k = b * len; k < (b + 1) * len; ++k) s += v[k];
    means.push_back(s / static_cast<double>(len));
  }
  return std::sqrt(variance(means) / static_cast<double>(batches));
}

/// Total variation distance between two discrete distributions on the same support.
inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0;
  for (std::size_t k = 0; k < p.size(); ++k) s += std::abs(p[k] - q[k]);
  return 0.5 * s;
}

/// Largest principal angle (degrees) between the column spaces of a and b.
inline double principal_angle_degrees(const MatrixXd& a, const MatrixXd& b) {
  const MatrixXd qa = Eigen::HouseholderQR<MatrixXd>(a).householderQ() * MatrixXd::Identity(a.rows(), a.cols());
  const MatrixXd qb = Eigen::HouseholderQR<MatrixXd>(b).householderQ() * MatrixXd::Identity(b.rows(), b.cols());
  Eigen::JacobiSVD<MatrixXd> svd(qa.transpose() * qb);
  const double smallest = std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
  return std::acos(smallest) * 180.0 / M_PI;
}

/// Logistic regression by iteratively reweighted least squares; x holds one instance per column,
/// an intercept is added. Returns the fitted classifier's accuracy on (x_test, y_test).
inline double logistic_accuracy(const MatrixXd& x, const VectorXd& y, const MatrixXd& x_test, const VectorXd& y_test) {
  const auto d = x.rows() + 1;
  auto design = [](const MatrixXd& m) {
    MatrixXd z(m.rows() + 1, m.cols());
    z.topRows(m.rows()) = m;
    z.row(m.rows()).setOnes();
    return z;
  };
  const MatrixXd z = design(x);
  VectorXd w = VectorXd::Zero(d);
  for (int it = 0; it < 50; ++it) {
    const VectorXd eta = z.transpose() * w;
    VectorXd p(eta.size()), weight(eta.size());
    for (Eigen::Index k = 0; k < eta.size(); ++k) {
      p[k] = 1.0 / (1.0 + std::exp(-eta[k]));
      weight[k] = std::max(p[k] * (1 - p[k]), 1e-10);
    }
    const VectorXd target = (y.array() > 0).cast<double>().matrix();
    const MatrixXd hess = z * weight.asDiagonal() * z.transpose() + 1e-8 * MatrixXd::Identity(d, d);
    w += hess.ldlt().solve(z * (target - p));
  }
  const VectorXd s = design(x_test).transpose() * w;
  double hit = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k) hit += ((s[k] >= 0) == (y_test[k] > 0));
  return hit / static_cast<double>(s.size());
}

}  // namespace oracle
