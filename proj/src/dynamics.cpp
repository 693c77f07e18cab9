#include "barw/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace barw {

void ModelParams::validate(bool require_attractive) const {
  if (!(mu > 1.0)) throw DomainError("mu must exceed 1");
  if (require_attractive && !(mu < kMuCritical))
    throw DomainError("mu must lie below e^2");
  if (R < 1) throw DomainError("R must be at least 1");
  if (d < 1 || d > kMaxDim) throw DomainError("dimension must be 1..3");
}

double theta(double mu) {
  if (!(mu > 1.0)) throw DomainError("theta: mu must exceed 1");
  return std::log(mu) / mu;
}

double contraction_constant(double mu, double eps) {
  if (!(mu > 1.0) || mu > kMuCritical) throw DomainError("contraction_constant: mu outside (1, e^2]");
  if (!(eps >= 0.0)) throw DomainError("contraction_constant: negative eps");
  const double t = theta(mu);
  const double a = std::max(0.0, t - eps);
  const double b = t + eps;
  // |varphi'| is extremal at the endpoints or at the minimum of varphi', w = 2/mu
  double k = std::max(std::abs(varphi_prime(mu, a)), std::abs(varphi_prime(mu, b)));
  const double crit = 2.0 / mu;
  if (a <= crit && crit <= b) k = std::max(k, std::abs(varphi_prime(mu, crit)));
  return k;
}

double eps_fp(double mu, double margin) {
  if (!(mu > 1.0) || !(mu < kMuCritical)) throw DomainError("eps_fp: mu outside (1, e^2)");
  if (!(margin > 0.0 && margin < 1.0)) throw DomainError("eps_fp: margin outside (0,1)");
  const double target = 1.0 - margin;
  double lo = 0.0;
  double hi = theta(mu);  // |varphi'(0)| = mu > 1, so hi never qualifies
  if (contraction_constant(mu, lo) > target)
    throw DomainError("eps_fp: no contraction window for this margin");
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (contraction_constant(mu, mid) <= target)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

double varphi_inf(double mu, double a, double b) {
  return std::min(varphi(mu, a), varphi(mu, b));
}

double varphi_sup(double mu, double a, double b) {
  double s = std::max(varphi(mu, a), varphi(mu, b));
  const double peak = 1.0 / mu;
  if (a <= peak && peak <= b) s = std::max(s, varphi(mu, peak));
  return s;
}

namespace {

std::vector<double> survival_table(const ModelParams& params) {
  const std::int64_t volume = ipow(ball_side(params.R), params.d);
  std::vector<double> table(static_cast<std::size_t>(volume + 1));
  for (std::int64_t c = 0; c <= volume; ++c)
    table[static_cast<std::size_t>(c)] =
        varphi(params.mu, static_cast<double>(c) / static_cast<double>(volume));
  return table;
}

}  // namespace

Config step_from_counts(const Config& cfg, std::span<const std::int32_t> counts,
                        const ModelParams& params, const NoiseField& noise,
                        std::int64_t n) {
  const auto table = survival_table(params);
  const std::int64_t side = cfg.side();
  const int d = cfg.dim();
  Config child(d, side);
  const std::int64_t t = n + 1;
  const std::int64_t rows = cfg.size() / side;
  const bool planted = noise.has_plants();
  auto words = child.words();
  const double* phi = table.data();
  const std::int32_t* cnt = counts.data();
  for (std::int64_t row = 0; row < rows; ++row) {
    const std::int64_t x1 = d > 1 ? row % side : 0;
    const std::int64_t x2 = d > 2 ? row / side : 0;
    const std::uint64_t key = noise.row_key(x1, x2, t);
    const std::int64_t base = row * side;
    for (std::int64_t x0 = 0; x0 < side; ++x0) {
      const std::int64_t i = base + x0;
      const double u = planted ? noise.uniform_at(Site(x0, x1, x2), t)
                               : NoiseField::row_uniform(key, x0);
      // branch-free set: the child starts empty
      words[static_cast<std::size_t>(i >> 6)] |=
          static_cast<std::uint64_t>(u <= phi[cnt[i]]) << (i & 63);
    }
  }
  return child;
}

Config step(const Config& cfg, const ModelParams& params,
            const NoiseField& noise, std::int64_t n) {
  thread_local std::vector<std::int32_t> counts;
  thread_local std::vector<std::int32_t> scratch;
  box_counts_into(cfg, params.R, counts, scratch);
  return step_from_counts(cfg, counts, params, noise, n);
}

Config flow(const Config& cfg, const ModelParams& params,
            const NoiseField& noise, std::int64_t m, std::int64_t n) {
  if (!(m < n)) throw DomainError("flow: need m < n");
  Config cur = cfg;
  for (std::int64_t t = m; t < n; ++t) cur = step(cur, params, noise, t);
  return cur;
}

std::optional<Site> ParentMap::parent_of(std::int64_t index) const {
  auto it = std::lower_bound(child_index.begin(), child_index.end(), index);
  if (it == child_index.end() || *it != index) return std::nullopt;
  return parent_offset[static_cast<std::size_t>(it - child_index.begin())];
}

AgentStep step_agents(const Config& cfg, const ModelParams& params,
                      std::mt19937_64& rng) {
  require_ball_fits(params.R, cfg.side());
  const int d = cfg.dim();
  const std::int64_t size = cfg.size();
  // arrivals per site; the first arrival's parent is kept for singletons
  std::vector<std::uint8_t> hits(static_cast<std::size_t>(size), 0);
  std::vector<Site> first_parent(static_cast<std::size_t>(size), Site::Zero());
  std::poisson_distribution<int> offspring(params.mu);
  std::uniform_int_distribution<std::int64_t> hop(-params.R, params.R);

  for (std::int64_t i = 0; i < size; ++i) {
    if (!cfg.get(i)) continue;
    const Site parent = cfg.site_of(i);
    const int k = offspring(rng);
    for (int c = 0; c < k; ++c) {
      Site off = Site::Zero();
      for (int a = 0; a < d; ++a) off[a] = hop(rng);
      const std::int64_t j = cfg.index_of(parent + off);
      auto& h = hits[static_cast<std::size_t>(j)];
      if (h == 0) first_parent[static_cast<std::size_t>(j)] = -off;
      if (h < 2) ++h;
    }
  }

  AgentStep out{Config(d, cfg.side()), ParentMap{d, cfg.side(), {}, {}}};
  for (std::int64_t j = 0; j < size; ++j) {
    if (hits[static_cast<std::size_t>(j)] != 1) continue;
    out.child.set(j, true);
    out.parents.child_index.push_back(j);
    out.parents.parent_offset.push_back(first_parent[static_cast<std::size_t>(j)]);
  }
  return out;
}

BurnInResult burn_in_stationary(const ModelParams& params,
                                const NoiseField& noise, std::int64_t side,
                                std::int64_t steps, int retry_cap) {
  if (steps < 1) throw DomainError("burn_in_stationary: steps must be >= 1");
  params.validate();
  BurnInResult res;
  for (int attempt = 0;; ++attempt) {
    const NoiseField run = noise.with_stream(noise.stream_id() + static_cast<std::uint64_t>(attempt));
    Config cfg = bernoulli_product_init(run, 0, theta(params.mu), params.d, side);
    for (std::int64_t t = 0; t < steps && !cfg.empty(); ++t)
      cfg = step(cfg, params, run, t);
    res.config = std::move(cfg);
    res.retries = attempt;
    res.stream_id = run.stream_id();
    res.extinct = res.config.empty();
    if (!res.extinct || attempt >= retry_cap) return res;
  }
}

}  // namespace barw
