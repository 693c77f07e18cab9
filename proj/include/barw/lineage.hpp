#pragma once

#include "barw/dynamics.hpp"
#include "barw/lattice.hpp"
#include "barw/noise.hpp"
#include "barw/renorm.hpp"

#include <json.hpp>

#include <cstdint>
#include <ostream>
#include <vector>

namespace barw {

/**
 * Environment snapshots eta_t for t = top - H, ..., top.
 *
 * The walk runs backwards in environment time, so step k of a lineage reads
 * the snapshot at time top - k - 1.
 */
class EnvHistory {
 public:
  EnvHistory() = default;
  EnvHistory(ModelParams params, NoiseField noise, std::int64_t bottom_time,
             std::vector<Config> snapshots);

  /// Runs `horizon` steps of the PCA from `start` at `bottom_time` and keeps
  /// every generation.
  static EnvHistory record(const Config& start, const ModelParams& params,
                           const NoiseField& noise, std::int64_t bottom_time,
                           std::int64_t horizon);

  const ModelParams& params() const { return params_; }
  const NoiseField& noise() const { return noise_; }
  std::int64_t horizon() const { return static_cast<std::int64_t>(snaps_.size()) - 1; }
  std::int64_t top_time() const { return bottom_ + horizon(); }
  std::int64_t bottom_time() const { return bottom_; }
  const Config& at(std::int64_t time) const;
  const Config& top() const { return snaps_.back(); }

  /// Flow replay from time `from` reproduces every retained later snapshot.
  bool replay_consistent(std::int64_t from) const;

 private:
  ModelParams params_;
  NoiseField noise_;
  std::int64_t bottom_ = 0;
  std::vector<Config> snaps_;
};

/// Uniform law on the occupied sites of B_R(x): each entry is an offset y - x
/// carrying weight 1 / count.
struct AncestorLaw {
  std::vector<Site> offsets;
  std::int64_t count = 0;

  double weight() const { return 1.0 / static_cast<double>(count); }
  /// Exact drift as numerator / count.
  Site drift_numerator() const;
};

/// Throws EmptyNeighborhood when no site of B_R(x) is occupied in `parent_env`.
AncestorLaw ancestor_distribution(const Config& parent_env, const Site& x,
                                  std::int64_t R);

struct LineagePath {
  int d = 1;
  Site start = Site::Zero();          // torus site of the particle at the top
  std::vector<Site> positions;        // X_k - start, unwrapped, X_0 = 0
  std::vector<std::int64_t> counts;   // occupied sites in the kernel's ball per step
  std::vector<Site> drift_num;        // drift_k = drift_num[k] / counts[k]
  bool decomposed = false;

  std::int64_t steps() const { return static_cast<std::int64_t>(positions.size()) - 1; }
  Site increment(std::int64_t k) const { return positions[static_cast<std::size_t>(k)] - positions[static_cast<std::size_t>(k - 1)]; }
  RealPoint drift(std::int64_t k) const;
  RealPoint martingale_increment(std::int64_t k) const;  // Y_k, 1-based k
  /// sum_{i <= k} Y_i in floating point
  RealPoint martingale_sum(std::int64_t k) const;
};

/// Backward walk from `start` (occupied at the top) for K steps. Choice k uses
/// the uniform choices.uniform_at((path_id, 0, 0), k).
LineagePath sample_lineage(const EnvHistory& env, const Site& start, std::int64_t K,
                           const NoiseField& choices, std::uint64_t path_id = 0);

/// Genealogy read off parent maps; maps[i] links generation i+1 of the forward
/// run to generation i, so the walk reads them from the back.
LineagePath lineage_from_parent_maps(const std::vector<ParentMap>& maps, const Site& start);

/// Fills counts / drift_num from the kernel at every step.
void martingale_decomposition(LineagePath& path, const EnvHistory& env);

/// X_k - X_0 == sum drift + sum Y for every k, in exact rational arithmetic.
bool reconstruction_exact(const LineagePath& path);

/// max over steps of |E[Y_k | X_{k-1}, eta]| computed from the kernel in doubles.
double max_conditional_mean_of_y(const LineagePath& path, const EnvHistory& env);

/// L_t exp(-(L_s/8)^2 / (2 L_t R^2)).
double azuma_envelope(std::int64_t L_s, std::int64_t L_t, std::int64_t R);
inline double azuma_envelope(const Scales& s) { return azuma_envelope(s.L_s, s.L_t, s.R); }

struct SpeedBoundReport {
  std::int64_t paths = 0;
  std::int64_t confined = 0;           // max_k |X_k - z| <= L_s / 4
  std::int64_t a_mart = 0;             // max_k |sum Y| >= L_s / 8
  double p_confined = 0.0;
  double p_a_mart = 0.0;
  double sigma_a_mart = 0.0;
  double envelope = 0.0;
  bool envelope_vacuous = false;
  double drift_limit = 0.0;            // L_s / (8 L_t)
  double max_drift = 0.0;              // over steps with |X_{k-1} - z| <= L_s / 2
  std::int64_t drift_steps = 0;
  std::int64_t drift_violations = 0;
  double delta = 0.0;
  bool confinement_ok = false;         // p_confined >= 1 - delta
  std::vector<std::int64_t> bucket_paths;     // by start offset |z - centre|, L_s/8 wide
  std::vector<std::int64_t> bucket_confined;
};

/// Paths must be decomposed; only the first L_t steps of each are used. Start
/// offsets from the block centre come from `start_offsets` (one per path).
SpeedBoundReport check_speed_bound(const std::vector<LineagePath>& paths,
                                   const std::vector<Site>& start_offsets,
                                   std::int64_t L_s, std::int64_t L_t, std::int64_t R,
                                   double delta);

struct EnsembleOptions {
  ModelParams params;
  std::int64_t side = 128;
  std::int64_t burn_in = 50;
  std::int64_t K = 1024;
  std::int64_t paths = 1000;
  int threads = 1;
  int retry_cap = 20;
};

struct LineageEnsemble {
  std::vector<LineagePath> paths;
  std::vector<std::uint64_t> env_streams;  // stream of the environment behind each path
  std::int64_t burn_in_retries = 0;
};

/// One independent environment per path: stationary burn-in on a torus, K
/// recorded steps, a uniformly chosen occupied site at the top, then the
/// backward walk. Path i draws its environment from
/// derive_stream(stream, kEnvTag, i) and its choices from
/// derive_stream(stream, kChoiceTag, i).
LineageEnsemble run_lineage_ensemble(const EnsembleOptions& opt, std::uint64_t seed,
                                     std::uint64_t stream);

inline constexpr std::uint64_t kEnvTag = 0x656e76;
inline constexpr std::uint64_t kChoiceTag = 0x63686f;

/// Rows at k = 0, stride, 2 stride, ... and the last step of each path.
void write_path_csv(std::ostream& out, const std::vector<LineagePath>& paths,
                    std::int64_t stride = 1);
nlohmann::json to_json(const SpeedBoundReport& r);

}  // namespace barw
