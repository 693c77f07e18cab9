#pragma once

#include "barw/noise.hpp"
#include "barw/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace barw {

/**
 * Bracketing sequences alpha_1 < alpha_2 < ... < theta < ... < beta_2 < beta_1
 * with varphi([alpha_m, beta_m]) strictly inside (alpha_{m+1}, beta_{m+1}).
 *
 * Indices are 1-based to match the staircase levels: alpha(1) is the floor.
 */
struct AlphaBetaSeq {
  double mu = 2.0;
  double gamma = 0.1;
  std::vector<double> alpha_values;
  std::vector<double> beta_values;

  int size() const { return static_cast<int>(alpha_values.size()); }
  double alpha(int m) const { return alpha_values.at(static_cast<std::size_t>(m - 1)); }
  double beta(int m) const { return beta_values.at(static_cast<std::size_t>(m - 1)); }
};

class NestingFailure : public std::runtime_error {
 public:
  NestingFailure(int index, const std::string& what)
      : std::runtime_error(what), index(index) {}
  int index;
};

/// Each new endpoint keeps a fraction `gamma` of the gap between the old
/// endpoint and the extremum of varphi over [alpha_m, beta_m]:
///   alpha_{m+1} = alpha_m + (1 - gamma) (min varphi - alpha_m)
///   beta_{m+1}  = beta_m  - (1 - gamma) (beta_m - max varphi)
/// so the image sits strictly inside and both ends converge to theta.
AlphaBetaSeq build_alpha_beta(double mu, double alpha1, double beta1,
                              int m_max, double gamma = 0.1);

/// Least m with alpha_m, beta_m in [theta - eps_fp, theta + eps_fp].
/// Throws std::out_of_range when the sequence is too short.
int m0(const AlphaBetaSeq& seq, double eps_fp);

/// Geometry of the staircase comparison profiles at averaging radius r.
struct ProfileParams {
  int d = 1;
  std::int64_t r = 1;
  std::int64_t R_max = 2;
  double s = 0.25;   // front speed: ceil(s r) sites per step
  double w = 2.0;    // front width multiplier: ceil(w r) sites
  double eps0 = 0.01;
  int m0 = 1;
  int k0 = 1;
  AlphaBetaSeq seq;

  std::int64_t front_step() const;
  std::int64_t front_width() const;
  /// Radius of the strongest-control plateau, R_max + k ceil(s r).
  std::int64_t plateau_radius(int k) const { return R_max + k * front_step(); }
  /// Outer edge of the support of the lower profile at time k.
  std::int64_t support_radius(int k) const {
    return plateau_radius(k) + m0 * r + front_width();
  }
};

/// Auxiliary front family: alpha_1 on the inner box, product of linear ramps
/// falling to eps0 at plateau + m0 r + ceil(w r), zero beyond.
double chi(const ProfileParams& p, int k, const Site& x);

enum class Bound { lower, upper };

/// Staircase profiles zeta_k^{r,-} (Bound::lower) and zeta_k^{r,+}.
double zeta(const ProfileParams& p, int k, const Site& x, Bound which);

/**
 * A family of comparison profiles k = 0..k0 given by evaluators.
 *
 * `support_radius(k)` bounds the support of the lower profile in sup-norm;
 * `symmetric` promises invariance under coordinate permutations and sign
 * flips, which the certifier uses to restrict to a fundamental domain.
 */
struct ProfilePair {
  int d = 1;
  std::int64_t r = 1;
  int k0 = 1;
  bool symmetric = true;
  std::function<double(int, const Site&)> lower;
  std::function<double(int, const Site&)> upper;
  std::function<std::int64_t(int)> support_radius;
  std::optional<ProfileParams> params;
};

ProfilePair make_profile_pair(const ProfileParams& p);

struct CdpViolation {
  enum class Kind { order, floor, lower_sum, upper_sum };
  Kind kind;
  int k = 0;
  Site x = Site::Zero();
  double value = 0.0;  // observed quantity
  double bound = 0.0;  // required bound
};

struct CdpStepSummary {
  int k = 0;
  std::int64_t sites = 0;
  double min_lower_margin = 0.0;  // min of lower_sum - (1+delta) zeta_{k+1}^-
  double min_upper_margin = 0.0;  // min of (1-delta) zeta_{k+1}^+ - upper_sum
};

struct CdpReport {
  bool passed = false;
  double eps = 0.0;
  double delta = 0.0;
  double max_delta = 0.0;  // largest delta the averaging inequalities allow
  std::vector<CdpStepSummary> steps;
  std::vector<CdpViolation> violations;
  std::size_t violation_count = 0;
};

/// Checks the three comparison-profile conditions (ordering, floor eps on the
/// support, one-step averaging with margin delta) for every k < k0 and every
/// site of the lower support. Violations are reported, not thrown.
CdpReport certify_cdp(const ProfilePair& profile, double mu, double eps,
                      double delta, bool use_symmetry = true,
                      std::size_t max_listed = 64);

struct CdpSearchSpace {
  std::vector<double> s = {0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> w = {2, 3, 4, 5, 6, 7, 8};
  std::vector<double> eps0_fraction = {0.5, 0.2, 0.1, 0.05, 0.02, 0.01};  // of alpha_1
  std::vector<double> delta0 = {0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001};
};

struct CdpParams {
  double s = 0.0;
  double w = 0.0;
  double eps0 = 0.0;
  double delta0 = 0.0;
};

/// Scans s ascending, then w ascending, eps0 descending, delta0 descending and
/// returns the first tuple that certifies. `base` supplies d, R_max, m0, k0 and
/// the alpha/beta sequence; its s, w, eps0 are overwritten. Requires R_max >= 2R.
std::optional<CdpParams> find_cdp_params(double mu, std::int64_t r,
                                         std::int64_t R, ProfileParams base,
                                         const CdpSearchSpace& space = {});

/// Concentration bound 2 exp(-c V_r^d), c = (delta eps) / (1/(2 delta eps) + 2/3).
struct BernsteinBound {
  double c = 0.0;
  double bound = 0.0;
  bool informative = false;       // bound < 1
  double threshold_volume = 0.0;  // V_r^d must exceed ln 2 / c
};

BernsteinBound bernstein(double eps, double delta, std::int64_t r, int d);
inline double bernstein_bound(double eps, double delta, std::int64_t r, int d) {
  return bernstein(eps, delta, r, d).bound;
}

struct UkEstimate {
  std::int64_t hits = 0;
  std::int64_t trials = 0;
  double estimate = 0.0;
  double sigma = 0.0;  // binomial standard error
};

/// Monte Carlo frequency of the one-step control event at (k, x): worst-case
/// Bernoulli parameters (argmin / argmax of varphi over the profile interval)
/// fed with one uniform block per trial. Trial t uses noise time index t.
UkEstimate estimate_uk_probability(const ProfilePair& profile, double mu,
                                   int k, const Site& x, std::int64_t trials,
                                   const NoiseField& noise);

nlohmann::json to_json(const CdpReport& report);
nlohmann::json to_json(const BernsteinBound& b);
nlohmann::json to_json(const ProfileParams& p);
std::string to_string(CdpViolation::Kind kind);

}  // namespace barw
