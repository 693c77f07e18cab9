#pragma once

#include "barw/lineage.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace barw {

class InsufficientSamples : public std::invalid_argument {
 public:
  InsufficientSamples(std::int64_t have, std::int64_t need)
      : std::invalid_argument("need at least " + std::to_string(need) + " samples, have " +
                              std::to_string(have)),
        have(have),
        need(need) {}
  std::int64_t have;
  std::int64_t need;
};

// ---------------------------------------------------------------------------
// Sample moments of an n x d sample matrix (one observation per row).

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> sample_mean(
    const Eigen::MatrixBase<Derived>& x) {
  return x.colwise().mean().transpose();
}

/// Unbiased covariance (divisor n - 1).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> sample_covariance(
    const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const auto centred = (x.rowwise() - x.colwise().mean()).eval();
  return (centred.transpose() * centred) / Scalar(x.rows() - 1);
}

template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar sample_correlation(const Eigen::MatrixBase<DerivedX>& x,
                                             const Eigen::MatrixBase<DerivedY>& y) {
  const auto xc = (x.array() - x.mean()).matrix().eval();
  const auto yc = (y.array() - y.mean()).matrix().eval();
  return xc.dot(yc) / std::sqrt(xc.squaredNorm() * yc.squaredNorm());
}

// ---------------------------------------------------------------------------
// Tests. All p-values are two-sided unless noted.

struct TestResult {
  std::string test;
  double statistic = 0.0;
  double p_value = 1.0;
  bool pass = true;
};

inline constexpr double kPValueFloor = 0.01;

/// Limiting Kolmogorov tail P(K > lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2).
double kolmogorov_tail(double lambda);

/// One-sample KS against N(mean, sd^2); p-value from the limiting law with the
/// (sqrt(n) + 0.12 + 0.11 / sqrt(n)) small-sample scaling.
TestResult ks_normal(const Eigen::VectorXd& x, double mean, double sd,
                     const std::string& name = "ks_normal");

/// KS against a normal fitted by sample mean and standard deviation.
TestResult ks_fitted_normal(const Eigen::VectorXd& x, const std::string& name = "ks_fitted_normal");

/// z-test of mean == mu0 with the sample standard error.
TestResult z_test_mean(const Eigen::VectorXd& x, double mu0 = 0.0,
                       const std::string& name = "z_mean");

/// Pearson correlation t-test, t = r sqrt((n-2)/(1-r^2)).
TestResult correlation_test(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                            const std::string& name = "correlation");

/// Pitman-Morgan test of Var(x) == Var(y) for paired samples.
TestResult pitman_morgan(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                         const std::string& name = "pitman_morgan");

struct ChiSquare {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  int bins = 0;  // after pooling
};

/// Goodness of fit of counts to probabilities. Adjacent bins are pooled until
/// each expected count reaches `min_expected`.
ChiSquare chi_square_gof(const std::vector<std::int64_t>& observed,
                         const std::vector<double>& probs, double min_expected = 5.0);

/// Two-sample homogeneity test on a 2 x B table; bins with small pooled
/// expected counts are merged with their neighbours.
ChiSquare chi_square_homogeneity(const std::vector<std::int64_t>& a,
                                 const std::vector<std::int64_t>& b, double min_expected = 5.0);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LinearFit linear_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// ---------------------------------------------------------------------------
// Lineage ensembles.

struct EnsembleSummary {
  int d = 1;
  std::int64_t n = 0;
  std::vector<std::int64_t> ks;             // checkpoints
  std::vector<Eigen::MatrixXd> samples;     // n x d per checkpoint
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
  std::vector<std::uint64_t> seeds;

  std::size_t index_of(std::int64_t k) const;
};

EnsembleSummary summarize(const std::vector<LineagePath>& paths,
                          const std::vector<std::int64_t>& checkpoints);
/// Summary from ready-made samples: samples[i] is n x d at checkpoint ks[i].
EnsembleSummary summarize(std::vector<std::int64_t> ks, std::vector<Eigen::MatrixXd> samples);

struct LlnReport {
  std::vector<double> mean_norm_over_k;      // |mean(X_k)| / k
  std::vector<double> mean_abs_over_k;       // mean(|X_k|) / k
  std::vector<double> band;                  // 3 sd / (k sqrt n) per checkpoint
  double threshold = 0.0;
  bool below_threshold = false;
  bool tail_nonincreasing = false;
  bool pass = false;
};

LlnReport lln_diagnostic(const EnsembleSummary& s, double threshold);

struct CltReport {
  std::int64_t k = 0;
  std::int64_t n = 0;
  std::vector<TestResult> tests;
  Eigen::VectorXd sigma2;  // per-component variance of X_k / sqrt(k)
  Eigen::VectorXd mean_over_se;
  bool pass = false;
};

/// Requires n >= min_samples (500 by default).
CltReport clt_diagnostic(const EnsembleSummary& s, std::int64_t k,
                         std::int64_t min_samples = 500);

struct FcltReport {
  LinearFit variance_fit;  // mean per-component Var(X_k) against k
  double relative_intercept = 0.0;
  std::vector<TestResult> tests;
  bool pass = false;
};

/// Variance linearity (R^2 > r2_min), increment/position decorrelation and
/// KS of normalised increments between consecutive checkpoints.
FcltReport fclt_diagnostic(const EnsembleSummary& s, double r2_min = 0.99,
                           std::int64_t min_samples = 500);

nlohmann::json to_json(const TestResult& t);
nlohmann::json to_json(const LlnReport& r);
nlohmann::json to_json(const CltReport& r);
nlohmann::json to_json(const FcltReport& r);
/// Columns k, mean1..d, var1..d.
void write_moments_csv(std::ostream& out, const EnsembleSummary& s);

}  // namespace barw
