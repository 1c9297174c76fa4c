#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "m3lak/distributions.hpp"
#include "oracles.hpp"

using namespace m3lak;
using Catch::Approx;

namespace {

constexpr int kDraws = 100000;

std::vector<double> gig_sample(double a, double chi, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<double> out(kDraws);
  for (auto& x : out) x = gig_half_draw({a, chi}, rng);
  return out;
}

}  // namespace

TEST_CASE("quadrature oracle agrees with the closed-form GIG(1/2,1,chi) mean") {
  for (double chi : {1e-12, 0.01, 1.0, 4.0, 25.0}) {
    const auto m = oracle::gig_half_moments(1.0, chi);
    CHECK(m.mean == Approx(std::sqrt(chi) + 1.0).epsilon(1e-8));
  }
}

TEST_CASE("gig_half_draw mean at chi = 4 is 3") {
  const auto xs = gig_sample(1.0, 4.0, 11);
  CHECK(std::abs(oracle::mean(xs) - 3.0) < 0.05);
}

TEST_CASE("gig_half_draw with chi = 0 uses the floor and has mean 1") {
  const auto xs = gig_sample(1.0, 0.0, 12);
  CHECK(std::abs(oracle::mean(xs) - 1.0) < 0.05);
  for (double x : xs) REQUIRE((x > 0.0 && std::isfinite(x)));
}

TEST_CASE("gig_half_draw mean is within 3 standard errors across chi") {
  std::uint64_t seed = 100;
  for (double chi : {0.01, 1.0, 4.0, 25.0}) {
    const auto xs = gig_sample(1.0, chi, ++seed);
    const auto exact = oracle::gig_half_moments(1.0, chi);
    INFO("chi = " << chi);
    CHECK(std::abs(oracle::mean(xs) - exact.mean) < 3.0 * oracle::iid_standard_error(xs));
    CHECK(oracle::variance(xs) == Approx(exact.variance).epsilon(0.05));
    for (double x : xs) REQUIRE((x > 0.0 && std::isfinite(x)));
  }
}

TEST_CASE("gig_half_draw with a != 1 matches quadrature") {
  const auto xs = gig_sample(2.5, 0.7, 7);
  const auto exact = oracle::gig_half_moments(2.5, 0.7);
  CHECK(std::abs(oracle::mean(xs) - exact.mean) < 3.0 * oracle::iid_standard_error(xs));
}

TEST_CASE("gig_half_draw rejects bad parameters") {
  RngStream rng(1);
  CHECK_THROWS_AS(gig_half_draw({1.0, std::nan("")}, rng), InvalidParameter);
  CHECK_THROWS_AS(gig_half_draw({std::numeric_limits<double>::infinity(), 1.0}, rng), InvalidParameter);
  CHECK_THROWS_AS(gig_half_draw({0.0, 1.0}, rng), InvalidParameter);
  CHECK_THROWS_AS(gig_half_draw({1.0, -1.0}, rng), InvalidParameter);
}

TEST_CASE("gamma_draw moments and errors") {
  RngStream rng(3);
  std::vector<double> xs(kDraws);
  for (auto& x : xs) x = gamma_draw(2.0, 4.0, rng);
  CHECK(std::abs(oracle::mean(xs) - 0.5) < 0.01);

  int below = 0;
  for (int k = 0; k < kDraws; ++k) below += gamma_draw(1.0, 1.0, rng) <= 1.0;
  CHECK(std::abs(below / double(kDraws) - (1.0 - std::exp(-1.0))) < 0.01);

  CHECK_THROWS_AS(gamma_draw(0.0, 1.0, rng), InvalidParameter);
  CHECK_THROWS_AS(gamma_draw(1.0, 0.0, rng), InvalidParameter);
  CHECK_THROWS_AS(gamma_draw(-1.0, 1.0, rng), InvalidParameter);
}

TEST_CASE("gamma_draw stays positive for tiny shapes") {
  RngStream rng(4);
  for (int k = 0; k < 1000; ++k) REQUIRE(gamma_draw(1e-3, 1.0, rng) > 0.0);
}

TEST_CASE("mvn_draw with zero covariance falls back to the jitter floor") {
  RngStream rng(5);
  const VectorXd mean = (VectorXd(2) << 1.0, 2.0).finished();
  const VectorXd x = mvn_draw(mean, MatrixXd::Zero(2, 2), rng);
  CHECK((x - mean).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("mvn_draw sample covariance of the identity case") {
  RngStream rng(6);
  MatrixXd acc = MatrixXd::Zero(3, 3);
  VectorXd sum = VectorXd::Zero(3);
  for (int k = 0; k < kDraws; ++k) {
    const VectorXd x = mvn_draw(VectorXd::Zero(3), MatrixXd::Identity(3, 3), rng);
    acc += x * x.transpose();
    sum += x;
  }
  const VectorXd mu = sum / kDraws;
  const MatrixXd cov = acc / kDraws - mu * mu.transpose();
  CHECK((cov - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("mvn_draw rejects a non-symmetric covariance") {
  RngStream rng(7);
  MatrixXd cov(2, 2);
  cov << 1.0, 0.5, 0.0, 1.0;
  CHECK_THROWS_AS(mvn_draw(VectorXd::Zero(2), cov, rng), InvalidParameter);
}

TEST_CASE("jittered_cholesky reports failure past the maximum jitter") {
  MatrixXd a(2, 2);
  a << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(jittered_cholesky(a), NumericalDegeneracy);
  MatrixXd singular(2, 2);
  singular << 1.0, 1.0, 1.0, 1.0;
  const MatrixXd l = jittered_cholesky(singular);
  CHECK((l * l.transpose() - singular).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("PrecisionGaussian matches a dense inverse") {
  MatrixXd a = MatrixXd::Random(4, 4);
  const MatrixXd p = a * a.transpose() + MatrixXd::Identity(4, 4);
  const VectorXd b = VectorXd::Random(4);
  const PrecisionGaussian g(p, b);
  const MatrixXd inv = p.inverse();
  CHECK((g.mean - inv * b).norm() < 1e-10);
  CHECK((g.covariance() - inv).norm() < 1e-10);
}

TEST_CASE("beta_draw mean for the stick-breaking law") {
  for (double alpha : {0.5, 1.0, 5.0}) {
    RngStream rng(static_cast<std::uint64_t>(alpha * 10));
    std::vector<double> xs(kDraws);
    for (auto& x : xs) x = beta_draw(1.0, alpha, rng);
    CHECK(std::abs(oracle::mean(xs) - 1.0 / (1.0 + alpha)) < 3.0 * oracle::iid_standard_error(xs));
  }
}

TEST_CASE("dirichlet_draw component means") {
  const std::vector<double> s = {1.0, 3.0, 0.5, 2.0};
  const double total = 6.5;
  RngStream rng(8);
  std::vector<std::vector<double>> draws(s.size());
  for (int k = 0; k < kDraws; ++k) {
    const VectorXd w = dirichlet_draw(s, rng);
    REQUIRE(std::abs(w.sum() - 1.0) < 1e-12);
    for (std::size_t i = 0; i < s.size(); ++i) draws[i].push_back(w[static_cast<Eigen::Index>(i)]);
  }
  for (std::size_t i = 0; i < s.size(); ++i)
    CHECK(std::abs(oracle::mean(draws[i]) - s[i] / total) < 3.0 * oracle::iid_standard_error(draws[i]));
}

TEST_CASE("categorical_draw_log frequencies and exclusions") {
  const std::vector<double> logw = {std::log(0.2), -std::numeric_limits<double>::infinity(), std::log(0.5),
                                    std::log(0.3)};
  RngStream rng(9);
  std::vector<int> hits(4, 0);
  for (int k = 0; k < kDraws; ++k) ++hits[categorical_draw_log(logw, rng)];
  CHECK(hits[1] == 0);
  const double p[] = {0.2, 0.0, 0.5, 0.3};
  for (int k : {0, 2, 3}) {
    const double se = std::sqrt(p[k] * (1 - p[k]) / kDraws);
    CHECK(std::abs(hits[k] / double(kDraws) - p[k]) < 3 * se);
  }
  const std::vector<double> none(3, -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(categorical_draw_log(none, rng), InternalInvariant);
}

TEST_CASE("categorical_draw_log handles log weights far from zero") {
  const std::vector<double> logw = {-1000.0, -1000.0 + std::log(3.0)};
  RngStream rng(10);
  int second = 0;
  for (int k = 0; k < kDraws; ++k) second += categorical_draw_log(logw, rng) == 1;
  CHECK(std::abs(second / double(kDraws) - 0.75) < 3 * std::sqrt(0.75 * 0.25 / kDraws));
}

TEST_CASE("uniform_draw mean and support") {
  RngStream rng(11);
  std::vector<double> xs(kDraws);
  for (auto& x : xs) {
    x = uniform_draw(-1.0, 3.0, rng);
    REQUIRE((x > -1.0 && x < 3.0));
  }
  CHECK(std::abs(oracle::mean(xs) - 1.0) < 3 * oracle::iid_standard_error(xs));
}

TEST_CASE("inverse_wishart_draw mean") {
  MatrixXd psi(2, 2);
  psi << 2.0, 0.5, 0.5, 1.0;
  const double nu = 7.0;
  RngStream rng(12);
  std::vector<std::vector<double>> entries(4);
  for (int k = 0; k < kDraws; ++k) {
    const MatrixXd s = inverse_wishart_draw(psi, nu, rng);
    for (int e = 0; e < 4; ++e) entries[e].push_back(s(e / 2, e % 2));
  }
  const MatrixXd expected = psi / (nu - 2 - 1);
  for (int e = 0; e < 4; ++e)
    CHECK(std::abs(oracle::mean(entries[e]) - expected(e / 2, e % 2)) < 3 * oracle::iid_standard_error(entries[e]));
}

TEST_CASE("identical streams reproduce draws bit for bit") {
  RngStream a(42, 7), b(42, 7);
  for (int k = 0; k < 1000; ++k) {
    REQUIRE(gig_half_draw({1.0, 2.0}, a) == gig_half_draw({1.0, 2.0}, b));
    REQUIRE(gamma_draw(0.3, 2.0, a) == gamma_draw(0.3, 2.0, b));
    REQUIRE(a.normal() == b.normal());
  }
  auto c = RngStream::keyed(42, {3, 1, 9});
  auto d = RngStream::keyed(42, {3, 1, 9});
  CHECK(c.uniform() == d.uniform());
}

TEST_CASE("distinct stream ids are uncorrelated") {
  RngStream a(42, 1), b(42, 2);
  auto c = RngStream::keyed(42, {1, 2, 3});
  auto d = RngStream::keyed(42, {1, 2, 4});
  const int n = 20000;
  double sab = 0, scd = 0;
  for (int k = 0; k < n; ++k) {
    sab += a.normal() * b.normal();
    scd += c.normal() * d.normal();
  }
  CHECK(std::abs(sab / n) < 4 / std::sqrt(double(n)));
  CHECK(std::abs(scd / n) < 4 / std::sqrt(double(n)));
  CHECK(RngStream(42, 1).engine()() != RngStream(42, 2).engine()());
}
