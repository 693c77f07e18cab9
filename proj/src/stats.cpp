#include "barw/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>

namespace barw {

namespace {

double two_sided_t(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

double two_sided_z(double z) {
  if (!std::isfinite(z)) return 0.0;
  boost::math::normal dist;
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(z)));
}

double chi2_upper(double x, int df) {
  if (df < 1) return 1.0;
  boost::math::chi_squared dist(df);
  return boost::math::cdf(boost::math::complement(dist, x));
}

TestResult make_result(std::string name, double stat, double p) {
  return {std::move(name), stat, p, p > kPValueFloor};
}

}  // namespace

double kolmogorov_tail(double lambda) {
  if (lambda < 0.2) return 1.0;  // series converges slowly; the tail is 1 to 1e-9 here
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

TestResult ks_normal(const Eigen::VectorXd& x, double mean, double sd, const std::string& name) {
  const auto n = x.size();
  if (n < 1) throw InsufficientSamples(0, 1);
  if (!(sd > 0.0)) return make_result(name, 1.0, 0.0);
  std::vector<double> v(x.data(), x.data() + n);
  std::sort(v.begin(), v.end());
  boost::math::normal dist(mean, sd);
  double D = 0.0;
  const double nn = static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double F = boost::math::cdf(dist, v[static_cast<std::size_t>(i)]);
    D = std::max({D, static_cast<double>(i + 1) / nn - F, F - static_cast<double>(i) / nn});
  }
  const double sq = std::sqrt(nn);
  return make_result(name, D, kolmogorov_tail((sq + 0.12 + 0.11 / sq) * D));
}

TestResult ks_fitted_normal(const Eigen::VectorXd& x, const std::string& name) {
  if (x.size() < 2) throw InsufficientSamples(x.size(), 2);
  const double m = x.mean();
  const double sd = std::sqrt((x.array() - m).square().sum() / static_cast<double>(x.size() - 1));
  return ks_normal(x, m, sd, name);
}

TestResult z_test_mean(const Eigen::VectorXd& x, double mu0, const std::string& name) {
  if (x.size() < 2) throw InsufficientSamples(x.size(), 2);
  const double n = static_cast<double>(x.size());
  const double m = x.mean();
  const double sd = std::sqrt((x.array() - m).square().sum() / (n - 1.0));
  if (!(sd > 0.0)) return make_result(name, 0.0, m == mu0 ? 1.0 : 0.0);
  const double z = (m - mu0) / (sd / std::sqrt(n));
  return make_result(name, z, two_sided_z(z));
}

TestResult correlation_test(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                            const std::string& name) {
  if (x.size() != y.size()) throw DomainError("correlation_test: length mismatch");
  if (x.size() < 3) throw InsufficientSamples(x.size(), 3);
  const double n = static_cast<double>(x.size());
  const double r = sample_correlation(x, y);
  if (!std::isfinite(r)) return make_result(name, 0.0, 1.0);
  const double t = r * std::sqrt((n - 2.0) / std::max(1e-300, 1.0 - r * r));
  return make_result(name, t, two_sided_t(t, n - 2.0));
}

TestResult pitman_morgan(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const std::string& name) {
  const Eigen::VectorXd s = x + y;
  const Eigen::VectorXd d = x - y;
  return correlation_test(s, d, name);
}

ChiSquare chi_square_gof(const std::vector<std::int64_t>& observed,
                         const std::vector<double>& probs, double min_expected) {
  if (observed.size() != probs.size()) throw DomainError("chi_square_gof: size mismatch");
  const double n = static_cast<double>(std::accumulate(observed.begin(), observed.end(), std::int64_t{0}));
  std::vector<double> obs;
  std::vector<double> exp;
  double o = 0.0;
  double e = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    o += static_cast<double>(observed[i]);
    e += probs[i] * n;
    if (e >= min_expected) {
      obs.push_back(o);
      exp.push_back(e);
      o = e = 0.0;
    }
  }
  if (e > 0.0 || o > 0.0) {
    if (exp.empty()) {
      obs.push_back(o);
      exp.push_back(e);
    } else {
      obs.back() += o;
      exp.back() += e;
    }
  }
  ChiSquare cs;
  cs.bins = static_cast<int>(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i)
    if (exp[i] > 0.0) cs.statistic += (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
  cs.df = cs.bins - 1;
  cs.p_value = chi2_upper(cs.statistic, cs.df);
  return cs;
}

ChiSquare chi_square_homogeneity(const std::vector<std::int64_t>& a,
                                 const std::vector<std::int64_t>& b, double min_expected) {
  if (a.size() != b.size()) throw DomainError("chi_square_homogeneity: size mismatch");
  const double na = static_cast<double>(std::accumulate(a.begin(), a.end(), std::int64_t{0}));
  const double nb = static_cast<double>(std::accumulate(b.begin(), b.end(), std::int64_t{0}));
  const double N = na + nb;
  if (!(na > 0.0 && nb > 0.0)) throw InsufficientSamples(0, 1);
  const double small = std::min(na, nb) / N;
  std::vector<double> pa;
  std::vector<double> pb;
  double sa = 0.0;
  double sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += static_cast<double>(a[i]);
    sb += static_cast<double>(b[i]);
    if ((sa + sb) * small >= min_expected) {
      pa.push_back(sa);
      pb.push_back(sb);
      sa = sb = 0.0;
    }
  }
  if (sa + sb > 0.0) {
    if (pa.empty()) {
      pa.push_back(sa);
      pb.push_back(sb);
    } else {
      pa.back() += sa;
      pb.back() += sb;
    }
  }
  ChiSquare cs;
  cs.bins = static_cast<int>(pa.size());
  for (std::size_t j = 0; j < pa.size(); ++j) {
    const double col = pa[j] + pb[j];
    const double ea = na * col / N;
    const double eb = nb * col / N;
    cs.statistic += (pa[j] - ea) * (pa[j] - ea) / ea + (pb[j] - eb) * (pb[j] - eb) / eb;
  }
  cs.df = cs.bins - 1;
  cs.p_value = chi2_upper(cs.statistic, cs.df);
  return cs;
}

LinearFit linear_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("linear_fit: need two or more matched points");
  const double mx = x.mean();
  const double my = y.mean();
  const double sxx = (x.array() - mx).square().sum();
  const double sxy = ((x.array() - mx) * (y.array() - my)).sum();
  const double syy = (y.array() - my).square().sum();
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  const double sse = (y.array() - (f.intercept + f.slope * x.array())).square().sum();
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return f;
}

std::size_t EnsembleSummary::index_of(std::int64_t k) const {
  const auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw DomainError("checkpoint " + std::to_string(k) + " not in summary");
  return static_cast<std::size_t>(it - ks.begin());
}

EnsembleSummary summarize(std::vector<std::int64_t> ks, std::vector<Eigen::MatrixXd> samples) {
  if (ks.size() != samples.size() || ks.empty()) throw DomainError("summarize: one sample matrix per checkpoint");
  EnsembleSummary s;
  s.ks = std::move(ks);
  s.samples = std::move(samples);
  s.n = s.samples.front().rows();
  s.d = static_cast<int>(s.samples.front().cols());
  for (const auto& m : s.samples) {
    if (m.rows() != s.n) throw DomainError("summarize: ragged ensemble");
    s.means.push_back(sample_mean(m));
    s.covariances.push_back(s.n > 1 ? Eigen::MatrixXd(sample_covariance(m))
                                    : Eigen::MatrixXd::Zero(s.d, s.d));
  }
  return s;
}

EnsembleSummary summarize(const std::vector<LineagePath>& paths,
                          const std::vector<std::int64_t>& checkpoints) {
  if (paths.empty()) throw InsufficientSamples(0, 1);
  const int d = paths.front().d;
  std::vector<Eigen::MatrixXd> samples;
  for (std::int64_t k : checkpoints) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(paths.size()), d);
    for (std::size_t p = 0; p < paths.size(); ++p) {
      if (paths[p].steps() < k) throw DomainError("summarize: path shorter than checkpoint");
      const Site& x = paths[p].positions[static_cast<std::size_t>(k)];
      for (int a = 0; a < d; ++a) m(static_cast<Eigen::Index>(p), a) = static_cast<double>(x[a]);
    }
    samples.push_back(std::move(m));
  }
  return summarize(checkpoints, std::move(samples));
}

LlnReport lln_diagnostic(const EnsembleSummary& s, double threshold) {
  if (s.ks.size() < 2) throw DomainError("lln_diagnostic: need at least two checkpoints");
  LlnReport r;
  r.threshold = threshold;
  const double sqn = std::sqrt(static_cast<double>(s.n));
  std::vector<double> abs_band;
  for (std::size_t i = 0; i < s.ks.size(); ++i) {
    const double k = static_cast<double>(std::max<std::int64_t>(s.ks[i], 1));
    r.mean_norm_over_k.push_back(s.means[i].norm() / k);
    const Eigen::VectorXd norms = s.samples[i].rowwise().norm();
    const double m = norms.mean();
    r.mean_abs_over_k.push_back(m / k);
    const double sd_abs = s.n > 1 ? std::sqrt((norms.array() - m).square().sum() / static_cast<double>(s.n - 1)) : 0.0;
    abs_band.push_back(3.0 * sd_abs / (k * sqn));
    const double sd = std::sqrt(std::max(0.0, s.covariances[i].trace()));
    r.band.push_back(3.0 * sd / (k * sqn));
  }
  r.below_threshold = r.mean_norm_over_k.back() < threshold;
  r.tail_nonincreasing = true;
  for (std::size_t i = s.ks.size() / 2; i + 1 < s.ks.size(); ++i)
    if (r.mean_abs_over_k[i + 1] > r.mean_abs_over_k[i] + abs_band[i] + abs_band[i + 1])
      r.tail_nonincreasing = false;
  r.pass = r.below_threshold && r.tail_nonincreasing;
  return r;
}

CltReport clt_diagnostic(const EnsembleSummary& s, std::int64_t k, std::int64_t min_samples) {
  if (s.n < min_samples) throw InsufficientSamples(s.n, min_samples);
  if (k < 1) throw DomainError("clt_diagnostic: checkpoint must be positive");
  const std::size_t i = s.index_of(k);
  CltReport r;
  r.k = k;
  r.n = s.n;
  const Eigen::MatrixXd z = s.samples[i] / std::sqrt(static_cast<double>(k));
  r.sigma2 = sample_covariance(z).diagonal();
  r.mean_over_se.resize(s.d);
  for (int a = 0; a < s.d; ++a) {
    const Eigen::VectorXd col = z.col(a);
    const std::string c = std::to_string(a + 1);
    r.tests.push_back(ks_fitted_normal(col, "ks_normal_" + c));
    const TestResult zt = z_test_mean(col, 0.0, "z_mean_" + c);
    r.mean_over_se[a] = zt.statistic;
    r.tests.push_back(zt);
  }
  for (int a = 0; a < s.d; ++a) {
    for (int b = a + 1; b < s.d; ++b) {
      const std::string tag = std::to_string(a + 1) + std::to_string(b + 1);
      r.tests.push_back(correlation_test(z.col(a), z.col(b), "corr_" + tag));
      r.tests.push_back(pitman_morgan(z.col(a), z.col(b), "equal_var_" + tag));
    }
  }
  r.pass = std::all_of(r.tests.begin(), r.tests.end(), [](const TestResult& t) { return t.pass; });
  return r;
}

FcltReport fclt_diagnostic(const EnsembleSummary& s, double r2_min, std::int64_t min_samples) {
  if (s.n < min_samples) throw InsufficientSamples(s.n, min_samples);
  if (s.ks.size() < 3) throw DomainError("fclt_diagnostic: need at least three checkpoints");
  FcltReport r;
  Eigen::VectorXd kx(static_cast<Eigen::Index>(s.ks.size()));
  Eigen::VectorXd vy(kx.size());
  for (std::size_t i = 0; i < s.ks.size(); ++i) {
    kx[static_cast<Eigen::Index>(i)] = static_cast<double>(s.ks[i]);
    vy[static_cast<Eigen::Index>(i)] = s.covariances[i].trace() / s.d;
  }
  r.variance_fit = linear_fit(kx, vy);
  r.relative_intercept = r.variance_fit.intercept / (r.variance_fit.slope * kx.maxCoeff());
  for (std::size_t i = 0; i + 1 < s.ks.size(); ++i) {
    const std::int64_t j = s.ks[i];
    const std::int64_t k = s.ks[i + 1];
    if (j < 1 || k <= j) continue;
    const Eigen::MatrixXd inc = (s.samples[i + 1] - s.samples[i]) / std::sqrt(static_cast<double>(k - j));
    for (int a = 0; a < s.d; ++a) {
      const std::string tag = std::to_string(j) + "_" + std::to_string(k) + "_" + std::to_string(a + 1);
      r.tests.push_back(correlation_test(inc.col(a), s.samples[i].col(a), "increment_cov_" + tag));
      r.tests.push_back(ks_fitted_normal(inc.col(a), "increment_ks_" + tag));
    }
  }
  r.pass = r.variance_fit.r2 > r2_min &&
           std::all_of(r.tests.begin(), r.tests.end(), [](const TestResult& t) { return t.pass; });
  return r;
}

nlohmann::json to_json(const TestResult& t) {
  return {{"test", t.test}, {"statistic", t.statistic}, {"p_value", t.p_value}, {"pass", t.pass}};
}

nlohmann::json to_json(const LlnReport& r) {
  return {{"mean_norm_over_k", r.mean_norm_over_k},
          {"mean_abs_over_k", r.mean_abs_over_k},
          {"band", r.band},
          {"threshold", r.threshold},
          {"below_threshold", r.below_threshold},
          {"tail_nonincreasing", r.tail_nonincreasing},
          {"pass", r.pass}};
}

nlohmann::json to_json(const CltReport& r) {
  auto tests = nlohmann::json::array();
  for (const auto& t : r.tests) tests.push_back(to_json(t));
  return {{"k", r.k},
          {"n", r.n},
          {"sigma2", std::vector<double>(r.sigma2.data(), r.sigma2.data() + r.sigma2.size())},
          {"tests", tests},
          {"p_value_floor", kPValueFloor},
          {"note", "per-test thresholds, no family-wise correction"},
          {"pass", r.pass}};
}

nlohmann::json to_json(const FcltReport& r) {
  auto tests = nlohmann::json::array();
  for (const auto& t : r.tests) tests.push_back(to_json(t));
  return {{"variance_slope", r.variance_fit.slope},
          {"variance_intercept", r.variance_fit.intercept},
          {"variance_r2", r.variance_fit.r2},
          {"relative_intercept", r.relative_intercept},
          {"tests", tests},
          {"pass", r.pass}};
}

void write_moments_csv(std::ostream& out, const EnsembleSummary& s) {
  out << 'k';
  for (int a = 1; a <= s.d; ++a) out << ",mean" << a;
  for (int a = 1; a <= s.d; ++a) out << ",var" << a;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < s.ks.size(); ++i) {
    out << s.ks[i];
    for (int a = 0; a < s.d; ++a) out << ',' << s.means[i][a];
    for (int a = 0; a < s.d; ++a) out << ',' << s.covariances[i](a, a);
    out << '\n';
  }
}

}  // namespace barw
