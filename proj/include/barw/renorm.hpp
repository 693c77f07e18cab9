#pragma once

#include "barw/dynamics.hpp"
#include "barw/lattice.hpp"
#include "barw/noise.hpp"
#include "barw/profiles.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace barw {

/// Coarse-graining scales. All lengths in lattice sites, times in generations.
struct Scales {
  std::int64_t R = 1;
  int d = 1;
  double kappa = 0.5;
  double s = 0.25;
  std::int64_t M = 1;
  std::int64_t c_time = 1;
  std::int64_t c_dens = 3;
  std::int64_t R_log_R = 0;  // ceil(R ln R)
  std::int64_t R_max = 0;
  std::int64_t L_s = 0;
  std::int64_t T_spread = 0;
  std::int64_t T_couple = 0;
  std::int64_t L_t = 0;
  std::int64_t r0 = 1;
  bool overridden = false;

  /// Side needed to hold a block with its light cone: 2 (4 L_s + R L_t).
  std::int64_t min_torus_side() const { return 2 * (4 * L_s + R * L_t); }
};

struct ScaleOverrides {
  std::optional<std::int64_t> L_s;
  std::optional<std::int64_t> L_t;
  std::optional<std::int64_t> T_spread;
  std::optional<std::int64_t> T_couple;

  bool any() const { return L_s || L_t || T_spread || T_couple; }
};

/// c_time = ceil((d+1) / (-ln kappa)), c_dens = 1 + 2 c_time,
/// R_max = L_s = c_dens ceil(R ln R), T_spread = ceil(3 c_dens ceil(R ln R) / ceil(sR)),
/// T_couple = c_time ceil(ln R), L_t = T_spread + T_couple, r0 = R / M.
Scales compute_scales(const ModelParams& params, double kappa, double s,
                      std::int64_t M);

/// Replaces L_s (and R_max with it) and the time scales. A new L_s without a new
/// T_spread recomputes T_spread = ceil(3 L_s / ceil(sR)); an L_t override fixes
/// T_couple = L_t - T_spread.
Scales apply_overrides(Scales scales, const ScaleOverrides& o);

struct FeasibilityCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// T_couple ceil(sR) + T_couple R <= 2 c_dens ceil(R ln R).
FeasibilityCheck psi_feasibility(const Scales& s);
/// 2 r0 < L_s / (8 L_t).
FeasibilityCheck drift_feasibility(const Scales& s);
/// Support radius of zeta_0^{R,-} <= 2 L_s.
FeasibilityCheck support_feasibility(const Scales& s, const ProfilePair& R_profile);

/// Space-time site set {(y,k): |y - L_s x| <= m L_s, n L_t < k <= (n+1) L_t}.
struct BlockRegion {
  std::int64_t m = 4;
  Site x = Site::Zero();
  std::int64_t n = 0;

  Site center(const Scales& s) const { return s.L_s * x; }
  std::int64_t half_width(const Scales& s) const { return m * s.L_s; }
  std::int64_t t_begin(const Scales& s) const { return n * s.L_t + 1; }
  std::int64_t t_end(const Scales& s) const { return (n + 1) * s.L_t; }
  bool contains(const Scales& s, const Site& y, std::int64_t k, int d) const;
};

/// The two profile families used for block goodness (averaging radii R and r0)
/// with the plateau band of the staircase.
struct BlockProfiles {
  ProfilePair R_profile;
  ProfilePair r0_profile;
  double alpha_m0 = 0.0;
  double beta_m0 = 1.0;
  double eps_fp = 0.0;
};

/// Staircase profiles at r = R and r = r0, both with plateau radius R_max and
/// front speed scales.s; the horizon is L_t.
BlockProfiles make_block_profiles(const Scales& scales, const AlphaBetaSeq& seq,
                                  int m0, double w, double eps0, double eps_fp);

/// Density sandwich of a profile at time k, recentred at `center`.
struct SandwichResult {
  bool holds = true;
  double margin = 0.0;  // min over checked sites of the slack on either side
  std::optional<Site> first_failure;
};

SandwichResult check_sandwich(const DensityField& field, const ProfilePair& profile,
                              int k, const Site& center, std::int64_t radius);

/// G_conf membership at `center`.
bool in_gconf(const Config& cfg, const Site& center, const BlockProfiles& bp);
bool in_gconf(const DensityField& fR, const DensityField& fr0, const Site& center,
              const BlockProfiles& bp);

/// |delta_R - theta| < eps_fp at every site of B_radius(center).
bool in_cref(const Config& cfg, const Site& center, std::int64_t radius,
             const ModelParams& params, double eps_fp);

struct ReferenceSample {
  Config config;
  bool found = false;
  int attempts = 0;
};

/// Burn-in from Bernoulli(theta) on streams derived from `noise`, rejected
/// until the C_ref test holds on B_radius(center); at most `retry_cap` tries.
ReferenceSample sample_reference(const ModelParams& params, const NoiseField& noise,
                                 std::int64_t side, const Site& center,
                                 std::int64_t radius, double eps_fp,
                                 std::int64_t burn_steps, int retry_cap = 100);

struct CouplingOptions {
  std::int64_t reference_burn_in = 60;
  int reference_retry_cap = 100;
};

struct CouplingReport {
  Site block_x = Site::Zero();
  std::int64_t block_n = 0;
  bool bottom1_in_gconf = false;
  bool bottom2_in_gconf = false;
  bool precondition_ok = false;
  bool reference_found = false;
  bool a_spread = false;
  bool a_couple = false;
  bool gamma = false;
  bool agree_3Ls = false;                 // item (i)
  std::vector<bool> gconf_neighbors;      // item (ii), e in B_1(0) in index order
  bool bottoms_agree = false;             // on B_{2 L_s}
  std::optional<bool> center_agreement_all_times;
  double spread_margin_R = 0.0;
  double spread_margin_r0 = 0.0;
  std::int64_t disagreements_3Ls = 0;     // cfg1 vs cfg2 at the top
  std::optional<Site> first_failure;
  std::optional<std::int64_t> first_failure_time;
  std::string failure_reason;

  bool items_hold() const;
};

/// Evolves cfg1, cfg2 (and a reference from T_spread on) under the same noise
/// through block (x, n) and evaluates the block events. cfg1 and cfg2 are the
/// configurations at time n L_t.
CouplingReport coupling_experiment(const Config& cfg1, const Config& cfg2,
                                   const Scales& scales, const BlockProfiles& bp,
                                   const ModelParams& params, const NoiseField& noise,
                                   const BlockRegion& block,
                                   const CouplingOptions& opt = {});

struct GoodnessCell {
  Site x = Site::Zero();
  std::int64_t n = 0;
  bool gamma = false;
  bool gconf = false;
  bool a_spread = false;
  bool a_couple = false;
};

struct GoodnessField {
  int d = 1;
  std::int64_t extent = 0;  // coarse sites per axis
  std::int64_t blocks_in_time = 0;
  std::vector<GoodnessCell> cells;

  double good_fraction() const;
};

/// One trajectory from `initial` at time 0 over blocks_in_time L_t steps; every
/// coarse block (x, n) with x in {0..extent-1}^d is scored by Gamma. A_couple is
/// tested against one sampled reference per block.
GoodnessField goodness_field(const Config& initial, const Scales& scales,
                             const BlockProfiles& bp, const ModelParams& params,
                             const NoiseField& noise, std::int64_t extent,
                             std::int64_t blocks_in_time,
                             const CouplingOptions& opt = {});

void write_goodness_csv(std::ostream& out, const GoodnessField& field);
nlohmann::json to_json(const CouplingReport& r, int d);
nlohmann::json to_json(const Scales& s);
nlohmann::json to_json(const FeasibilityCheck& f);

}  // namespace barw
