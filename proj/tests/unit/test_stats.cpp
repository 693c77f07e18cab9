#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "barw/stats.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace barw;

namespace {

Eigen::VectorXd gaussian(std::int64_t n, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

/// Ensemble of Brownian paths: d independent Gaussian random walks with unit
/// step variance, sampled at the checkpoints.
EnsembleSummary brownian(int d, std::int64_t n, const std::vector<std::int64_t>& ks, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Eigen::MatrixXd> samples(ks.size(), Eigen::MatrixXd(n, d));
  for (std::int64_t p = 0; p < n; ++p) {
    for (int a = 0; a < d; ++a) {
      double x = 0.0;
      std::int64_t k = 0;
      for (std::size_t c = 0; c < ks.size(); ++c) {
        x += std::sqrt(static_cast<double>(ks[c] - k)) * g(rng);
        k = ks[c];
        samples[c](p, a) = x;
      }
    }
  }
  return summarize(ks, samples);
}

EnsembleSummary srw(int d, std::int64_t R, std::int64_t n, const std::vector<std::int64_t>& ks,
                    std::uint64_t seed) {
  const auto pos = oracle::srw_ensemble(d, R, n, ks, seed);
  std::vector<Eigen::MatrixXd> samples;
  for (const auto& at : pos) {
    Eigen::MatrixXd m(n, d);
    for (std::int64_t p = 0; p < n; ++p)
      for (int a = 0; a < d; ++a) m(p, a) = static_cast<double>(at[static_cast<std::size_t>(p)][a]);
    samples.push_back(m);
  }
  return summarize(ks, samples);
}

}  // namespace

TEST_CASE("moments") {
  Eigen::MatrixXd x(4, 2);
  x << 1, 2, 3, 4, 5, 6, 7, 9;
  CHECK(sample_mean(x)[0] == 4.0);
  const Eigen::MatrixXd c = sample_covariance(x);
  CHECK(c(0, 0) == doctest::Approx(20.0 / 3.0));
  CHECK(c(0, 1) == c(1, 0));
  CHECK(sample_correlation(Eigen::VectorXd(x.col(0)), Eigen::VectorXd(2.0 * x.col(0))) == doctest::Approx(1.0));
}

TEST_CASE("kolmogorov tail at reference points") {
  CHECK(kolmogorov_tail(0.0) == 1.0);
  CHECK(kolmogorov_tail(1.0) == doctest::Approx(0.26999967).epsilon(1e-6));
  CHECK(kolmogorov_tail(1.3580986) == doctest::Approx(0.05).epsilon(1e-4));
  CHECK(kolmogorov_tail(1.6276236) == doctest::Approx(0.01).epsilon(1e-4));
  CHECK(kolmogorov_tail(5.0) < 1e-20);
}

TEST_CASE("KS statistic against a direct computation") {
  const Eigen::VectorXd x = gaussian(300, 1.0, 3);
  std::vector<double> v(x.data(), x.data() + x.size());
  std::sort(v.begin(), v.end());
  double D = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double F = oracle::normal_cdf(v[i]);
    D = std::max({D, (i + 1.0) / 300.0 - F, F - i / 300.0});
  }
  const TestResult r = ks_normal(x, 0.0, 1.0);
  CHECK(r.statistic == doctest::Approx(D).epsilon(1e-12));
  CHECK(r.pass);
  CHECK_FALSE(ks_normal(x, 1.0, 1.0).pass);
}

TEST_CASE("chi-square tests agree with the incomplete gamma oracle") {
  const std::vector<std::int64_t> obs{18, 22, 31, 29};
  const std::vector<double> probs{0.25, 0.25, 0.25, 0.25};
  const ChiSquare cs = chi_square_gof(obs, probs);
  const auto o = oracle::chi2_stat(obs, probs);
  CHECK(cs.statistic == doctest::Approx(o[0]));
  CHECK(cs.df == 3);
  CHECK(cs.p_value == doctest::Approx(oracle::chi2_upper(o[0], 3)).epsilon(1e-9));
  // pooling small cells
  const ChiSquare pooled = chi_square_gof({50, 1, 1, 48}, {0.49, 0.01, 0.01, 0.49});
  CHECK(pooled.bins == 2);
  const ChiSquare same = chi_square_homogeneity({100, 200, 300}, {110, 190, 305});
  CHECK(same.df == 2);
  CHECK(same.p_value > 0.5);
  CHECK(chi_square_homogeneity({300, 0, 300}, {0, 600, 0}).p_value < 1e-10);
}

TEST_CASE("correlation and equal-variance tests") {
  const Eigen::VectorXd a = gaussian(1000, 1.0, 1);
  const Eigen::VectorXd b = gaussian(1000, 1.0, 2);
  CHECK(correlation_test(a, b).pass);
  CHECK_FALSE(correlation_test(a, Eigen::VectorXd(a + 0.1 * b)).pass);
  CHECK(pitman_morgan(a, b).pass);
  CHECK_FALSE(pitman_morgan(a, Eigen::VectorXd(2.0 * b)).pass);
  CHECK(z_test_mean(a).pass);
  CHECK_FALSE(z_test_mean(Eigen::VectorXd(a.array() + 0.5)).pass);
}

TEST_CASE("linear fit of an exact line") {
  Eigen::VectorXd x(5), y(5);
  x << 1, 2, 3, 4, 5;
  y = 3.0 * x.array() + 2.0;
  const LinearFit f = linear_fit(x, y);
  CHECK(f.slope == doctest::Approx(3.0));
  CHECK(f.intercept == doctest::Approx(2.0));
  CHECK(f.r2 == doctest::Approx(1.0));
}

TEST_CASE("LLN: zero ensemble and SRW decay") {
  const std::vector<std::int64_t> ks{16, 32, 64, 128};
  std::vector<Eigen::MatrixXd> zeros(4, Eigen::MatrixXd::Zero(50, 2));
  const LlnReport z = lln_diagnostic(summarize(ks, zeros), 0.01);
  CHECK(z.pass);
  for (double v : z.mean_abs_over_k) CHECK(v == 0.0);
  const LlnReport s = lln_diagnostic(srw(1, 5, 2000, {64, 128, 256, 512, 1024}, 4), 0.05);
  CHECK(s.pass);
  for (std::size_t i = 1; i < s.mean_abs_over_k.size(); ++i)
    CHECK(s.mean_abs_over_k[i] < s.mean_abs_over_k[i - 1]);
  // c / sqrt(k) decay: k grows 16-fold, the ratio falls 4-fold
  CHECK(s.mean_abs_over_k[4] / s.mean_abs_over_k[0] == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("CLT: Gaussian null and SRW variance R(R+1)/3") {
  const EnsembleSummary g = brownian(2, 2000, {100, 400}, 7);
  const CltReport cg = clt_diagnostic(g, 400);
  CHECK(cg.pass);
  for (int a = 0; a < 2; ++a) CHECK(cg.sigma2[a] == doctest::Approx(1.0).epsilon(0.05));
  const std::int64_t R = 5;
  const EnsembleSummary s = srw(2, R, 2000, {64, 256}, 8);
  const CltReport cs = clt_diagnostic(s, 256);
  CHECK(cs.pass);
  for (int a = 0; a < 2; ++a) CHECK(cs.sigma2[a] == doctest::Approx(R * (R + 1) / 3.0).epsilon(0.05));
  CHECK_THROWS_AS(clt_diagnostic(brownian(1, 100, {10, 20}, 1), 20), InsufficientSamples);
}

TEST_CASE("FCLT: Brownian and SRW ensembles pass") {
  CHECK(fclt_diagnostic(brownian(2, 1000, {64, 128, 256, 512}, 9)).pass);
  const FcltReport f = fclt_diagnostic(srw(1, 5, 1000, {64, 128, 256, 512}, 10));
  CHECK(f.pass);
  CHECK(f.variance_fit.r2 > 0.99);
  CHECK(std::abs(f.relative_intercept) < 0.1);
  // a non-Brownian ensemble: X_k = k Z has variance k^2, not linear in k
  std::vector<Eigen::MatrixXd> ballistic;
  const Eigen::VectorXd z = gaussian(600, 1.0, 11);
  for (std::int64_t k : {1, 2, 3, 4, 5, 6, 7, 8}) ballistic.push_back(static_cast<double>(k) * z);
  CHECK_FALSE(fclt_diagnostic(summarize({1, 2, 3, 4, 5, 6, 7, 8}, ballistic)).pass);
}

TEST_CASE("reports serialise with the documented fields") {
  const nlohmann::json j = to_json(TestResult{"ks", 0.1, 0.5, true});
  CHECK(j.at("test") == "ks");
  CHECK(j.at("p_value") == 0.5);
  std::ostringstream out;
  write_moments_csv(out, brownian(2, 10, {1, 2}, 1));
  CHECK(out.str().rfind("k,mean1,mean2,var1,var2\n", 0) == 0);
}
