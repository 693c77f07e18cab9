#include "barw/profiles.hpp"

#include "barw/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace barw {

AlphaBetaSeq build_alpha_beta(double mu, double alpha1, double beta1,
                              int m_max, double gamma) {
  if (!(mu > 1.0 && mu < kMuCritical)) throw DomainError("build_alpha_beta: mu outside (1, e^2)");
  const double t = theta(mu);
  if (!(alpha1 > 0.0 && alpha1 < t)) throw DomainError("build_alpha_beta: need 0 < alpha1 < theta");
  if (!(beta1 > 1.0 / std::exp(1.0))) throw DomainError("build_alpha_beta: need beta1 > 1/e");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("build_alpha_beta: gamma outside (0,1)");
  if (m_max < 1) throw DomainError("build_alpha_beta: m_max must be >= 1");

  AlphaBetaSeq seq;
  seq.mu = mu;
  seq.gamma = gamma;
  seq.alpha_values.push_back(alpha1);
  seq.beta_values.push_back(beta1);
  for (int m = 1; m < m_max; ++m) {
    const double a = seq.alpha_values.back();
    const double b = seq.beta_values.back();
    const double lo = varphi_inf(mu, a, b);
    const double hi = varphi_sup(mu, a, b);
    if (!(lo > a)) throw NestingFailure(m, "alpha sequence stalls at index " + std::to_string(m));
    if (!(hi < b)) throw NestingFailure(m, "beta sequence stalls at index " + std::to_string(m));
    const double a_next = a + (1.0 - gamma) * (lo - a);
    const double b_next = b - (1.0 - gamma) * (b - hi);
    // strict nesting of the image; fails once the gaps underflow
    if (!(a_next < lo && hi < b_next && a < a_next && b_next < b))
      throw NestingFailure(m + 1, "nesting lost at index " + std::to_string(m + 1));
    seq.alpha_values.push_back(a_next);
    seq.beta_values.push_back(b_next);
  }
  return seq;
}

int m0(const AlphaBetaSeq& seq, double eps_fp) {
  const double t = theta(seq.mu);
  for (int m = 1; m <= seq.size(); ++m) {
    if (std::abs(seq.alpha(m) - t) <= eps_fp && std::abs(seq.beta(m) - t) <= eps_fp)
      return m;
  }
  throw std::out_of_range("m0: sequence does not enter the contraction window");
}

std::int64_t ProfileParams::front_step() const {
  return static_cast<std::int64_t>(std::ceil(s * static_cast<double>(r)));
}

std::int64_t ProfileParams::front_width() const {
  return static_cast<std::int64_t>(std::ceil(w * static_cast<double>(r)));
}

double chi(const ProfileParams& p, int k, const Site& x) {
  const double a1 = p.seq.alpha(1);
  const std::int64_t inner = p.plateau_radius(k) + p.m0 * p.r;
  if (sup_norm(x, p.d) <= inner) return a1;
  const std::int64_t edge = p.support_radius(k);
  const double width = static_cast<double>(p.front_width());
  const double floor_root = std::pow(p.eps0 / a1, 1.0 / p.d);
  double prod = a1;
  for (int i = 0; i < p.d; ++i) {
    const std::int64_t xi = std::abs(x[i]);
    if (xi > edge) return 0.0;
    const double ramp = floor_root + static_cast<double>(edge - xi) / width;
    prod *= std::min(ramp, 1.0);
  }
  return prod;
}

double zeta(const ProfileParams& p, int k, const Site& x, Bound which) {
  const std::int64_t norm = sup_norm(x, p.d);
  const std::int64_t plateau = p.plateau_radius(k);
  const auto level = [&](int m) {
    return which == Bound::lower ? p.seq.alpha(m) : p.seq.beta(m);
  };
  if (norm <= plateau) return level(p.m0);
  // first matching step: a site on a step boundary takes the inner level
  for (int j = 1; j <= p.m0; ++j)
    if (norm <= plateau + j * p.r) return level(p.m0 - j + 1);
  return which == Bound::lower ? chi(p, k, x) : std::max(1.0, p.seq.beta(1));
}

ProfilePair make_profile_pair(const ProfileParams& p) {
  if (p.seq.size() < p.m0) throw DomainError("profile: alpha/beta sequence shorter than m0");
  if (!(p.eps0 > 0.0 && p.eps0 < p.seq.alpha(1))) throw DomainError("profile: need 0 < eps0 < alpha_1");
  if (!(p.s > 0.0 && p.s < 1.0)) throw DomainError("profile: s outside (0,1)");
  if (!(p.w >= 2.0)) throw DomainError("profile: w must be >= 2");
  ProfilePair pair;
  pair.d = p.d;
  pair.r = p.r;
  pair.k0 = p.k0;
  pair.symmetric = true;
  pair.lower = [p](int k, const Site& x) { return zeta(p, k, x, Bound::lower); };
  pair.upper = [p](int k, const Site& x) { return zeta(p, k, x, Bound::upper); };
  pair.support_radius = [p](int k) { return p.support_radius(k); };
  pair.params = p;
  return pair;
}

namespace {

// Dense box [-L, L]^d of doubles with axis 0 fastest.
struct BoxGrid {
  int d;
  std::int64_t L;
  std::int64_t n;
  std::vector<double> v;

  BoxGrid(int d, std::int64_t L) : d(d), L(L), n(2 * L + 1), v(static_cast<std::size_t>(ipow(2 * L + 1, d))) {}

  std::int64_t index(const Site& x) const {
    std::int64_t idx = 0;
    for (int a = d - 1; a >= 0; --a) idx = idx * n + (x[a] + L);
    return idx;
  }
  Site site(std::int64_t idx) const {
    Site x = Site::Zero();
    for (int a = 0; a < d; ++a) {
      x[a] = idx % n - L;
      idx /= n;
    }
    return x;
  }
};

// Window sums of half-width r along every axis; entries within r of the box
// edge are partial sums and must not be read.
void box_window_sums(BoxGrid& g, std::int64_t r) {
  std::vector<double> line(static_cast<std::size_t>(g.n));
  std::int64_t stride = 1;
  const auto size = static_cast<std::int64_t>(g.v.size());
  for (int axis = 0; axis < g.d; ++axis) {
    const std::int64_t block = stride * g.n;
    for (std::int64_t outer = 0; outer < size; outer += block) {
      for (std::int64_t inner = 0; inner < stride; ++inner) {
        double* base = g.v.data() + outer + inner;
        // prefix sums then differences
        double acc = 0.0;
        for (std::int64_t i = 0; i < g.n; ++i) {
          acc += base[i * stride];
          line[static_cast<std::size_t>(i)] = acc;
        }
        for (std::int64_t i = 0; i < g.n; ++i) {
          const std::int64_t hi = std::min(i + r, g.n - 1);
          const std::int64_t lo = i - r - 1;
          base[i * stride] = line[static_cast<std::size_t>(hi)] -
                             (lo >= 0 ? line[static_cast<std::size_t>(lo)] : 0.0);
        }
      }
    }
    stride *= g.n;
  }
}

bool in_fundamental_domain(const Site& x, int d) {
  for (int a = 0; a < d; ++a) {
    if (x[a] < 0) return false;
    if (a + 1 < d && x[a] > x[a + 1]) return false;
  }
  return true;
}

}  // namespace

CdpReport certify_cdp(const ProfilePair& profile, double mu, double eps,
                      double delta, bool use_symmetry, std::size_t max_listed) {
  CdpReport rep;
  rep.eps = eps;
  rep.delta = delta;
  rep.max_delta = std::numeric_limits<double>::infinity();
  const int d = profile.d;
  const std::int64_t r = profile.r;
  const double volume = static_cast<double>(ipow(ball_side(r), d));
  const bool reduce = use_symmetry && profile.symmetric;

  auto record = [&](CdpViolation v) {
    ++rep.violation_count;
    if (rep.violations.size() < max_listed) rep.violations.push_back(v);
  };

  // ordering holds at every time index, including k0
  for (int k = 0; k <= profile.k0; ++k) {
    const std::int64_t L = profile.support_radius(k) + r;
    BoxGrid g(d, L);
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.v.size()); ++i) {
      const Site x = g.site(i);
      if (reduce && !in_fundamental_domain(x, d)) continue;
      const double lo = profile.lower(k, x);
      const double hi = profile.upper(k, x);
      if (lo > hi) record({CdpViolation::Kind::order, k, x, lo, hi});
      if (lo > 0.0 && lo < eps) record({CdpViolation::Kind::floor, k, x, lo, eps});
    }
  }

  for (int k = 0; k < profile.k0; ++k) {
    const std::int64_t supp = profile.support_radius(k);
    const std::int64_t L = supp + r;
    BoxGrid low(d, L);
    BoxGrid high(d, L);
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(low.v.size()); ++i) {
      const Site y = low.site(i);
      const double a = profile.lower(k, y);
      const double b = profile.upper(k, y);
      const double lo = std::min(a, b);
      const double hi = std::max(a, b);
      low.v[static_cast<std::size_t>(i)] = varphi_inf(mu, lo, hi);
      high.v[static_cast<std::size_t>(i)] = varphi_sup(mu, lo, hi);
    }
    box_window_sums(low, r);
    box_window_sums(high, r);

    CdpStepSummary sum;
    sum.k = k;
    sum.min_lower_margin = std::numeric_limits<double>::infinity();
    sum.min_upper_margin = std::numeric_limits<double>::infinity();
    const std::int64_t span = 2 * supp + 1;
    const std::int64_t cells = ipow(span, d);
    for (std::int64_t c = 0; c < cells; ++c) {
      Site x = Site::Zero();
      std::int64_t t = c;
      for (int a = 0; a < d; ++a) {
        x[a] = t % span - supp;
        t /= span;
      }
      if (reduce && !in_fundamental_domain(x, d)) continue;
      if (!(profile.lower(k, x) > 0.0)) continue;
      ++sum.sites;
      const std::int64_t idx = low.index(x);
      const double lower_sum = low.v[static_cast<std::size_t>(idx)] / volume;
      const double upper_sum = high.v[static_cast<std::size_t>(idx)] / volume;
      const double target_lo = profile.lower(k + 1, x);
      const double target_hi = profile.upper(k + 1, x);
      const double lm = lower_sum - (1.0 + delta) * target_lo;
      const double um = (1.0 - delta) * target_hi - upper_sum;
      sum.min_lower_margin = std::min(sum.min_lower_margin, lm);
      sum.min_upper_margin = std::min(sum.min_upper_margin, um);
      if (target_lo > 0.0) rep.max_delta = std::min(rep.max_delta, lower_sum / target_lo - 1.0);
      if (target_hi > 0.0) rep.max_delta = std::min(rep.max_delta, 1.0 - upper_sum / target_hi);
      if (lm < 0.0) record({CdpViolation::Kind::lower_sum, k, x, lower_sum, (1.0 + delta) * target_lo});
      if (um < 0.0) record({CdpViolation::Kind::upper_sum, k, x, upper_sum, (1.0 - delta) * target_hi});
    }
    rep.steps.push_back(sum);
  }
  rep.passed = rep.violation_count == 0;
  return rep;
}

std::optional<CdpParams> find_cdp_params(double mu, std::int64_t r,
                                         std::int64_t R, ProfileParams base,
                                         const CdpSearchSpace& space) {
  if (!(mu > 1.0 && mu < kMuCritical)) throw DomainError("find_cdp_params: mu outside (1, e^2)");
  if (base.R_max < 2 * R) throw DomainError("find_cdp_params: need R_max >= 2R");
  base.r = r;
  const double a1 = base.seq.alpha(1);
  for (double s : space.s) {
    for (double w : space.w) {
      for (double frac : space.eps0_fraction) {
        ProfileParams p = base;
        p.s = s;
        p.w = w;
        p.eps0 = frac * a1;
        const ProfilePair pair = make_profile_pair(p);
        // one pass yields the admissible delta range; confirm the pick
        const CdpReport probe = certify_cdp(pair, mu, p.eps0, 0.0, true, 0);
        if (probe.violation_count != 0) continue;
        for (double delta : space.delta0) {
          if (!(delta < probe.max_delta)) continue;
          if (certify_cdp(pair, mu, p.eps0, delta, true, 0).passed)
            return CdpParams{s, w, p.eps0, delta};
        }
      }
    }
  }
  return std::nullopt;
}

BernsteinBound bernstein(double eps, double delta, std::int64_t r, int d) {
  if (!(eps > 0.0 && delta > 0.0)) throw DomainError("bernstein: eps and delta must be positive");
  BernsteinBound b;
  const double de = delta * eps;
  b.c = de / (1.0 / (2.0 * de) + 2.0 / 3.0);
  const double volume = static_cast<double>(ipow(ball_side(r), d));
  b.bound = 2.0 * std::exp(-b.c * volume);
  b.informative = b.bound < 1.0;
  b.threshold_volume = std::log(2.0) / b.c;
  return b;
}

UkEstimate estimate_uk_probability(const ProfilePair& profile, double mu,
                                   int k, const Site& x, std::int64_t trials,
                                   const NoiseField& noise) {
  if (trials < 1) throw DomainError("estimate_uk_probability: trials must be >= 1");
  const int d = profile.d;
  const std::int64_t r = profile.r;
  const std::int64_t span = ball_side(r);
  const std::int64_t cells = ipow(span, d);
  std::vector<Site> offsets;
  std::vector<double> p_low;
  std::vector<double> p_high;
  for (std::int64_t c = 0; c < cells; ++c) {
    Site off = Site::Zero();
    std::int64_t t = c;
    for (int a = 0; a < d; ++a) {
      off[a] = t % span - r;
      t /= span;
    }
    const Site y = x + off;
    const double a = profile.lower(k, y);
    const double b = profile.upper(k, y);
    offsets.push_back(off);
    p_low.push_back(varphi_inf(mu, std::min(a, b), std::max(a, b)));
    p_high.push_back(varphi_sup(mu, std::min(a, b), std::max(a, b)));
  }
  const double volume = static_cast<double>(cells);
  const double lo_target = profile.lower(k + 1, x);
  const double hi_target = profile.upper(k + 1, x);

  UkEstimate est;
  est.trials = trials;
  for (std::int64_t t = 0; t < trials; ++t) {
    std::int64_t n_low = 0;
    std::int64_t n_high = 0;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      const double u = noise.uniform_at(offsets[i], t);
      n_low += u <= p_low[i];
      n_high += u <= p_high[i];
    }
    const bool ok = static_cast<double>(n_low) / volume >= lo_target &&
                    static_cast<double>(n_high) / volume <= hi_target;
    est.hits += ok;
  }
  est.estimate = static_cast<double>(est.hits) / static_cast<double>(trials);
  est.sigma = std::sqrt(std::max(est.estimate * (1.0 - est.estimate), 1e-300) /
                        static_cast<double>(trials));
  return est;
}

std::string to_string(CdpViolation::Kind kind) {
  switch (kind) {
    case CdpViolation::Kind::order: return "order";
    case CdpViolation::Kind::floor: return "floor";
    case CdpViolation::Kind::lower_sum: return "lower_sum";
    case CdpViolation::Kind::upper_sum: return "upper_sum";
  }
  return "unknown";
}

namespace {

nlohmann::json site_json(const Site& x, int d) {
  auto arr = nlohmann::json::array();
  for (int a = 0; a < d; ++a) arr.push_back(x[a]);
  return arr;
}

}  // namespace

nlohmann::json to_json(const CdpReport& report) {
  nlohmann::json j;
  j["passed"] = report.passed;
  j["eps"] = report.eps;
  j["delta"] = report.delta;
  j["max_delta"] = report.max_delta;
  j["violation_count"] = report.violation_count;
  auto steps = nlohmann::json::array();
  for (const auto& s : report.steps)
    steps.push_back({{"k", s.k},
                     {"sites", s.sites},
                     {"min_lower_margin", s.min_lower_margin},
                     {"min_upper_margin", s.min_upper_margin}});
  j["steps"] = steps;
  auto viol = nlohmann::json::array();
  for (const auto& v : report.violations)
    viol.push_back({{"kind", to_string(v.kind)},
                    {"k", v.k},
                    {"x", site_json(v.x, kMaxDim)},
                    {"value", v.value},
                    {"bound", v.bound}});
  j["violations"] = viol;
  return j;
}

nlohmann::json to_json(const BernsteinBound& b) {
  return {{"c", b.c},
          {"bound", b.bound},
          {"informative", b.informative},
          {"vacuous", !b.informative},
          {"threshold_volume", b.threshold_volume}};
}

nlohmann::json to_json(const ProfileParams& p) {
  return {{"d", p.d},         {"r", p.r},       {"R_max", p.R_max},
          {"s", p.s},         {"w", p.w},       {"eps0", p.eps0},
          {"m0", p.m0},       {"k0", p.k0},     {"alpha", p.seq.alpha_values},
          {"beta", p.seq.beta_values}, {"gamma", p.seq.gamma}};
}

}  // namespace barw
