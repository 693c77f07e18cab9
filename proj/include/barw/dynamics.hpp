#pragma once

#include "barw/lattice.hpp"
#include "barw/noise.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace barw {

/// e^2, upper end of the regime with an attractive non-trivial fixpoint.
inline const double kMuCritical = std::exp(2.0);

struct ModelParams {
  double mu = 2.0;
  std::int64_t R = 1;
  int d = 1;

  /// Throws DomainError unless mu > 1 and R >= 1 (and mu < e^2 if requested).
  void validate(bool require_attractive = false) const;
};

// ---------------------------------------------------------------------------
// The offspring map w -> mu w exp(-mu w) and its fixpoint structure.

template <typename Scalar>
Scalar varphi(Scalar mu, Scalar w) {
  if (w < Scalar(0)) throw DomainError("varphi: negative density");
  return mu * w * std::exp(-mu * w);
}

/// First derivative mu e^{-mu w} (1 - mu w).
template <typename Scalar>
Scalar varphi_prime(Scalar mu, Scalar w) {
  return mu * std::exp(-mu * w) * (Scalar(1) - mu * w);
}

/// Non-trivial fixpoint log(mu) / mu.
double theta(double mu);

/// Lipschitz constant of varphi on [theta - eps, theta + eps] (clipped at 0).
/// A value >= 1 means the interval is not a contraction region.
double contraction_constant(double mu, double eps);

inline bool is_contraction(double kappa) { return kappa < 1.0; }

/// Largest eps (to 1e-9) with contraction_constant(mu, eps) <= 1 - margin.
double eps_fp(double mu, double margin);

/// inf / sup of varphi over [a, b], from unimodality (peak 1/e at w = 1/mu).
double varphi_inf(double mu, double a, double b);
double varphi_sup(double mu, double a, double b);

// ---------------------------------------------------------------------------
// PCA dynamics driven by the noise field.

/// One generation: child(x) = 1{U(x, n+1) <= varphi(delta_R(x; cfg))}.
Config step(const Config& cfg, const ModelParams& params,
            const NoiseField& noise, std::int64_t n);

/// Variant reusing precomputed R-box counts of `cfg`.
Config step_from_counts(const Config& cfg, std::span<const std::int32_t> counts,
                        const ModelParams& params, const NoiseField& noise,
                        std::int64_t n);

/// Flow map from time m to time n (m < n).
Config flow(const Config& cfg, const ModelParams& params,
            const NoiseField& noise, std::int64_t m, std::int64_t n);

/// Parent of each occupied child site, as a displacement child -> parent.
struct ParentMap {
  int d = 1;
  std::int64_t side = 0;
  std::vector<std::int64_t> child_index;  // sorted
  std::vector<Site> parent_offset;

  /// Displacement to the parent of the child at `index`, if it is occupied.
  std::optional<Site> parent_of(std::int64_t index) const;
};

struct AgentStep {
  Config child;
  ParentMap parents;
};

/// Three-step branching / dispersal / annihilation procedure with explicit
/// Poisson(mu) offspring, driven by a stateful generator.
AgentStep step_agents(const Config& cfg, const ModelParams& params,
                      std::mt19937_64& rng);

struct BurnInResult {
  Config config;
  bool extinct = false;
  int retries = 0;              // fresh streams consumed after extinctions
  std::uint64_t stream_id = 0;  // stream of the returned run
};

/// Bernoulli(theta) product followed by `steps` flow steps at times 0..steps.
/// On extinction retries with stream_id + 1, ... up to `retry_cap` times.
BurnInResult burn_in_stationary(const ModelParams& params,
                                const NoiseField& noise, std::int64_t side,
                                std::int64_t steps, int retry_cap = 0);

}  // namespace barw
