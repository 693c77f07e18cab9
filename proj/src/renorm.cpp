#include "barw/renorm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace barw {

Scales compute_scales(const ModelParams& params, double kappa, double s,
                      std::int64_t M) {
  params.validate();
  if (params.R < 2) throw DomainError("compute_scales: R must be >= 2 (ln R > 0)");
  if (!(kappa > 0.0 && kappa < 1.0)) throw DomainError("compute_scales: kappa outside (0,1)");
  if (!(s > 0.0 && s < 1.0)) throw DomainError("compute_scales: s outside (0,1)");
  if (M < 1 || params.R % M != 0)
    throw DomainError("compute_scales: M = " + std::to_string(M) + " does not divide R = " +
                      std::to_string(params.R));
  Scales sc;
  sc.R = params.R;
  sc.d = params.d;
  sc.kappa = kappa;
  sc.s = s;
  sc.M = M;
  const double R = static_cast<double>(params.R);
  sc.c_time = static_cast<std::int64_t>(std::ceil((params.d + 1) / -std::log(kappa)));
  sc.c_dens = 1 + 2 * sc.c_time;
  sc.R_log_R = static_cast<std::int64_t>(std::ceil(R * std::log(R)));
  sc.R_max = sc.c_dens * sc.R_log_R;
  sc.L_s = sc.R_max;
  const auto sR = static_cast<std::int64_t>(std::ceil(s * R));
  sc.T_spread = (3 * sc.c_dens * sc.R_log_R + sR - 1) / sR;
  sc.T_couple = sc.c_time * static_cast<std::int64_t>(std::ceil(std::log(R)));
  sc.L_t = sc.T_spread + sc.T_couple;
  sc.r0 = params.R / M;
  return sc;
}

Scales apply_overrides(Scales sc, const ScaleOverrides& o) {
  if (!o.any()) return sc;
  sc.overridden = true;
  const auto sR = static_cast<std::int64_t>(std::ceil(sc.s * static_cast<double>(sc.R)));
  if (o.L_s) {
    if (*o.L_s < 1) throw DomainError("override L_s must be positive");
    sc.L_s = *o.L_s;
    sc.R_max = sc.L_s;
    if (!o.T_spread) sc.T_spread = (3 * sc.L_s + sR - 1) / sR;
  }
  if (o.T_spread) sc.T_spread = *o.T_spread;
  if (o.T_couple) sc.T_couple = *o.T_couple;
  if (o.L_t) sc.T_couple = *o.L_t - sc.T_spread;
  if (sc.T_spread < 0 || sc.T_couple < 1)
    throw DomainError("overrides leave T_spread < 0 or T_couple < 1");
  sc.L_t = sc.T_spread + sc.T_couple;
  return sc;
}

FeasibilityCheck psi_feasibility(const Scales& s) {
  const auto sR = std::ceil(s.s * static_cast<double>(s.R));
  const double lhs = static_cast<double>(s.T_couple) * sR + static_cast<double>(s.T_couple * s.R);
  const double rhs = 2.0 * static_cast<double>(s.c_dens * s.R_log_R);
  return {"psi", lhs, rhs, lhs <= rhs};
}

FeasibilityCheck drift_feasibility(const Scales& s) {
  const double lhs = 2.0 * static_cast<double>(s.r0);
  const double rhs = static_cast<double>(s.L_s) / (8.0 * static_cast<double>(s.L_t));
  return {"drift", lhs, rhs, lhs < rhs};
}

FeasibilityCheck support_feasibility(const Scales& s, const ProfilePair& R_profile) {
  const auto lhs = static_cast<double>(R_profile.support_radius(0));
  const auto rhs = static_cast<double>(2 * s.L_s);
  return {"support", lhs, rhs, lhs <= rhs};
}

bool BlockRegion::contains(const Scales& s, const Site& y, std::int64_t k, int d) const {
  return sup_norm(Site(y - center(s)), d) <= half_width(s) && t_begin(s) <= k && k <= t_end(s);
}

BlockProfiles make_block_profiles(const Scales& scales, const AlphaBetaSeq& seq,
                                  int m0, double w, double eps0, double eps_fp) {
  ProfileParams p;
  p.d = scales.d;
  p.R_max = scales.R_max;
  p.s = scales.s;
  p.w = w;
  p.eps0 = eps0;
  p.m0 = m0;
  p.k0 = static_cast<int>(scales.L_t);
  p.seq = seq;
  BlockProfiles bp;
  p.r = scales.R;
  bp.R_profile = make_profile_pair(p);
  p.r = scales.r0;
  bp.r0_profile = make_profile_pair(p);
  bp.alpha_m0 = seq.alpha(m0);
  bp.beta_m0 = seq.beta(m0);
  bp.eps_fp = eps_fp;
  return bp;
}

namespace {

std::int64_t torus_index(int d, std::int64_t side, const Site& x) {
  std::int64_t idx = 0;
  for (int a = d - 1; a >= 0; --a) {
    std::int64_t c = x[a] % side;
    if (c < 0) c += side;
    idx = idx * side + c;
  }
  return idx;
}

// Visits every site of B_radius(center) once; the radius is clipped so the
// ball does not wrap onto itself.
template <typename F>
void for_each_in_ball(int d, std::int64_t side, const Site& center,
                      std::int64_t radius, F&& f) {
  radius = std::min(radius, (side - 1) / 2);
  const std::int64_t span = ball_side(radius);
  const std::int64_t cells = ipow(span, d);
  Site off = Site::Zero();
  for (std::int64_t c = 0; c < cells; ++c) {
    std::int64_t t = c;
    for (int a = 0; a < d; ++a) {
      off[a] = t % span - radius;
      t /= span;
    }
    if (!f(torus_index(d, side, center + off), off)) return;
  }
}

SandwichResult check_band(const DensityField& field, double lo, double hi,
                          const Site& center, std::int64_t radius) {
  SandwichResult res;
  res.margin = std::numeric_limits<double>::infinity();
  for_each_in_ball(field.d, field.side, center, radius, [&](std::int64_t i, const Site& off) {
    const double v = field[i];
    res.margin = std::min(res.margin, std::min(v - lo, hi - v));
    if (v < lo || v > hi) {
      res.holds = false;
      res.first_failure = Site(center + off);
      return false;
    }
    return true;
  });
  return res;
}

std::int64_t count_disagreements(const Config& a, const Config& b, const Site& center,
                                 std::int64_t radius, bool stop_at_first = false) {
  std::int64_t n = 0;
  for_each_in_ball(a.dim(), a.side(), center, radius, [&](std::int64_t i, const Site&) {
    if (a.get(i) != b.get(i)) ++n;
    return !(stop_at_first && n > 0);
  });
  return n;
}

struct SpreadEval {
  bool a_spread = true;
  double margin_R = std::numeric_limits<double>::infinity();
  double margin_r0 = std::numeric_limits<double>::infinity();
  std::optional<Site> failure;
  std::optional<std::int64_t> failure_time;
  std::string reason;
};

// A_spread along one trajectory traj[k] = eta_{t0 + k}, k = 0..L_t.
SpreadEval evaluate_spread(const std::vector<Config>& traj, const Scales& sc,
                           const BlockProfiles& bp, const Site& c, std::int64_t t0) {
  SpreadEval ev;
  const std::int64_t reach = 4 * sc.L_s;
  for (std::int64_t k = 0; k <= sc.L_t; ++k) {
    thread_local DensityField f0;
    density_field_into(traj[static_cast<std::size_t>(k)], sc.r0, f0);
    const SandwichResult r0 = check_sandwich(f0, bp.r0_profile, static_cast<int>(k), c, reach);
    ev.margin_r0 = std::min(ev.margin_r0, r0.margin);
    if (!r0.holds && ev.a_spread) {
      ev.a_spread = false;
      ev.failure = r0.first_failure;
      ev.failure_time = t0 + k;
      ev.reason = "r0 density outside profile";
    }
    if (k == sc.T_spread) {
      thread_local DensityField fR;
      density_field_into(traj[static_cast<std::size_t>(k)], sc.R, fR);
      const SandwichResult band = check_band(fR, bp.alpha_m0, bp.beta_m0, c, reach);
      ev.margin_R = band.margin;
      if (!band.holds && ev.a_spread) {
        ev.a_spread = false;
        ev.failure = band.first_failure;
        ev.failure_time = t0 + k;
        ev.reason = "R density outside plateau band at T_spread";
      }
    }
  }
  return ev;
}

std::vector<Config> trajectory(const Config& start, const ModelParams& params,
                               const NoiseField& noise, std::int64_t t0, std::int64_t steps) {
  std::vector<Config> traj;
  traj.reserve(static_cast<std::size_t>(steps + 1));
  traj.push_back(start);
  for (std::int64_t k = 0; k < steps; ++k)
    traj.push_back(step(traj.back(), params, noise, t0 + k));
  return traj;
}

constexpr std::uint64_t kReferenceTag = 0x7265660a;

std::uint64_t block_key(const Site& x, std::int64_t n) {
  std::uint64_t h = static_cast<std::uint64_t>(n);
  for (int a = 0; a < kMaxDim; ++a)
    h = detail::fmix64(h ^ (static_cast<std::uint64_t>(x[a]) + 0x632be59bd9b4e019ULL * (a + 1)));
  return h;
}

}  // namespace

SandwichResult check_sandwich(const DensityField& field, const ProfilePair& profile,
                              int k, const Site& center, std::int64_t radius) {
  SandwichResult res;
  res.margin = std::numeric_limits<double>::infinity();
  for_each_in_ball(field.d, field.side, center, radius, [&](std::int64_t i, const Site& off) {
    const double lo = profile.lower(k, off);
    if (!(lo > 0.0)) return true;  // outside the support only delta <= 1 is asked
    const double hi = profile.upper(k, off);
    const double v = field[i];
    res.margin = std::min(res.margin, std::min(v - lo, hi - v));
    if (v < lo || v > hi) {
      res.holds = false;
      res.first_failure = Site(center + off);
      return false;
    }
    return true;
  });
  return res;
}

bool in_gconf(const DensityField& fR, const DensityField& fr0, const Site& center,
              const BlockProfiles& bp) {
  return check_sandwich(fR, bp.R_profile, 0, center, bp.R_profile.support_radius(0)).holds &&
         check_sandwich(fr0, bp.r0_profile, 0, center, bp.r0_profile.support_radius(0)).holds;
}

bool in_gconf(const Config& cfg, const Site& center, const BlockProfiles& bp) {
  return in_gconf(density_field(cfg, bp.R_profile.r), density_field(cfg, bp.r0_profile.r),
                  center, bp);
}

bool in_cref(const Config& cfg, const Site& center, std::int64_t radius,
             const ModelParams& params, double eps_fp) {
  const DensityField f = density_field(cfg, params.R);
  const double t = theta(params.mu);
  bool ok = true;
  for_each_in_ball(cfg.dim(), cfg.side(), center, radius, [&](std::int64_t i, const Site&) {
    ok = std::abs(f[i] - t) < eps_fp;
    return ok;
  });
  return ok;
}

ReferenceSample sample_reference(const ModelParams& params, const NoiseField& noise,
                                 std::int64_t side, const Site& center,
                                 std::int64_t radius, double eps_fp,
                                 std::int64_t burn_steps, int retry_cap) {
  ReferenceSample out;
  for (int attempt = 0; attempt < retry_cap; ++attempt) {
    out.attempts = attempt + 1;
    const NoiseField run = noise.with_stream(
        derive_stream(noise.stream_id(), kReferenceTag, static_cast<std::uint64_t>(attempt)));
    BurnInResult b = burn_in_stationary(params, run, side, burn_steps, 0);
    if (b.extinct) continue;
    if (in_cref(b.config, center, radius, params, eps_fp)) {
      out.config = std::move(b.config);
      out.found = true;
      return out;
    }
  }
  return out;
}

bool CouplingReport::items_hold() const {
  return agree_3Ls && std::all_of(gconf_neighbors.begin(), gconf_neighbors.end(),
                                  [](bool b) { return b; });
}

CouplingReport coupling_experiment(const Config& cfg1, const Config& cfg2,
                                   const Scales& sc, const BlockProfiles& bp,
                                   const ModelParams& params, const NoiseField& noise,
                                   const BlockRegion& block, const CouplingOptions& opt) {
  const int d = cfg1.dim();
  if (cfg2.dim() != d || cfg2.side() != cfg1.side())
    throw DomainError("coupling_experiment: configurations live on different tori");
  if (cfg1.side() < sc.min_torus_side()) throw TorusTooSmall(sc.min_torus_side(), cfg1.side());
  if (sc.T_spread > sc.L_t) throw DomainError("coupling_experiment: T_spread exceeds L_t");

  CouplingReport rep;
  rep.block_x = block.x;
  rep.block_n = block.n;
  const Site c = block.center(sc);
  const std::int64_t t0 = block.n * sc.L_t;

  rep.bottom1_in_gconf = in_gconf(cfg1, c, bp);
  rep.bottom2_in_gconf = in_gconf(cfg2, c, bp);
  rep.precondition_ok = rep.bottom1_in_gconf && rep.bottom2_in_gconf;
  rep.bottoms_agree = count_disagreements(cfg1, cfg2, c, 2 * sc.L_s, true) == 0;

  const auto traj1 = trajectory(cfg1, params, noise, t0, sc.L_t);
  const bool same = cfg1 == cfg2;
  const auto traj2 = same ? traj1 : trajectory(cfg2, params, noise, t0, sc.L_t);

  const SpreadEval s1 = evaluate_spread(traj1, sc, bp, c, t0);
  const SpreadEval s2 = same ? s1 : evaluate_spread(traj2, sc, bp, c, t0);
  rep.a_spread = s1.a_spread && s2.a_spread;
  rep.spread_margin_R = std::min(s1.margin_R, s2.margin_R);
  rep.spread_margin_r0 = std::min(s1.margin_r0, s2.margin_r0);
  const SpreadEval& failed = s1.a_spread ? s2 : s1;
  if (!rep.a_spread) {
    rep.first_failure = failed.failure;
    rep.first_failure_time = failed.failure_time;
    rep.failure_reason = failed.reason;
  }

  if (rep.bottoms_agree) {
    bool all = true;
    for (std::int64_t k = 1; k <= sc.L_t && all; ++k)
      all = count_disagreements(traj1[static_cast<std::size_t>(k)], traj2[static_cast<std::size_t>(k)],
                                c, sc.L_s, true) == 0;
    rep.center_agreement_all_times = all;
  }

  // reference run from T_spread to the top under the block noise
  const NoiseField ref_noise = noise.with_stream(
      derive_stream(noise.stream_id(), kReferenceTag, block_key(block.x, block.n)));
  const std::int64_t ref_radius = 3 * sc.L_s + sc.T_couple * sc.R;
  const ReferenceSample ref = sample_reference(params, ref_noise, cfg1.side(), c, ref_radius,
                                               bp.eps_fp, opt.reference_burn_in,
                                               opt.reference_retry_cap);
  rep.reference_found = ref.found;
  const Config& top1 = traj1.back();
  const Config& top2 = traj2.back();
  if (ref.found) {
    const Config ref_top = flow(ref.config, params, noise, t0 + sc.T_spread, t0 + sc.L_t);
    rep.a_couple = count_disagreements(top1, ref_top, c, 3 * sc.L_s, true) == 0 &&
                   count_disagreements(top2, ref_top, c, 3 * sc.L_s, true) == 0;
  }
  if (!rep.a_couple && rep.failure_reason.empty())
    rep.failure_reason = ref.found ? "no coupling with reference on B_3Ls" : "no reference configuration found";

  rep.disagreements_3Ls = count_disagreements(top1, top2, c, 3 * sc.L_s);
  rep.agree_3Ls = rep.disagreements_3Ls == 0;

  const DensityField fR1 = density_field(top1, sc.R), f01 = density_field(top1, sc.r0);
  const DensityField fR2 = density_field(top2, sc.R), f02 = density_field(top2, sc.r0);
  const std::int64_t neighbors = ipow(3, d);
  for (std::int64_t e = 0; e < neighbors; ++e) {
    Site off = Site::Zero();
    std::int64_t t = e;
    for (int a = 0; a < d; ++a) {
      off[a] = t % 3 - 1;
      t /= 3;
    }
    const Site ce = c + sc.L_s * off;
    rep.gconf_neighbors.push_back(in_gconf(fR1, f01, ce, bp) && in_gconf(fR2, f02, ce, bp));
  }
  rep.gamma = rep.precondition_ok && rep.a_spread && rep.a_couple;
  return rep;
}

double GoodnessField::good_fraction() const {
  if (cells.empty()) return 0.0;
  const auto good = std::count_if(cells.begin(), cells.end(), [](const GoodnessCell& c) { return c.gamma; });
  return static_cast<double>(good) / static_cast<double>(cells.size());
}

GoodnessField goodness_field(const Config& initial, const Scales& sc,
                             const BlockProfiles& bp, const ModelParams& params,
                             const NoiseField& noise, std::int64_t extent,
                             std::int64_t blocks_in_time, const CouplingOptions& opt) {
  const int d = initial.dim();
  if (initial.side() < sc.min_torus_side()) throw TorusTooSmall(sc.min_torus_side(), initial.side());
  if (extent * sc.L_s > initial.side()) throw TorusTooSmall(extent * sc.L_s, initial.side());
  GoodnessField field;
  field.d = d;
  field.extent = extent;
  field.blocks_in_time = blocks_in_time;
  const std::int64_t coarse = ipow(extent, d);

  Config bottom = initial;
  for (std::int64_t n = 0; n < blocks_in_time; ++n) {
    const std::int64_t t0 = n * sc.L_t;
    const auto traj = trajectory(bottom, params, noise, t0, sc.L_t);
    const DensityField fR = density_field(bottom, sc.R);
    const DensityField f0 = density_field(bottom, sc.r0);
    for (std::int64_t i = 0; i < coarse; ++i) {
      GoodnessCell cell;
      std::int64_t t = i;
      for (int a = 0; a < d; ++a) {
        cell.x[a] = t % extent;
        t /= extent;
      }
      cell.n = n;
      const Site c = sc.L_s * cell.x;
      cell.gconf = !bottom.empty() && in_gconf(fR, f0, c, bp);
      if (cell.gconf) {
        cell.a_spread = evaluate_spread(traj, sc, bp, c, t0).a_spread;
        const NoiseField ref_noise = noise.with_stream(
            derive_stream(noise.stream_id(), kReferenceTag, block_key(cell.x, n)));
        const ReferenceSample ref = sample_reference(
            params, ref_noise, initial.side(), c, 3 * sc.L_s + sc.T_couple * sc.R, bp.eps_fp,
            opt.reference_burn_in, opt.reference_retry_cap);
        if (ref.found) {
          const Config ref_top = flow(ref.config, params, noise, t0 + sc.T_spread, t0 + sc.L_t);
          cell.a_couple = count_disagreements(traj.back(), ref_top, c, 3 * sc.L_s, true) == 0;
        }
      }
      cell.gamma = cell.gconf && cell.a_spread && cell.a_couple;
      field.cells.push_back(cell);
    }
    bottom = traj.back();
  }
  return field;
}

void write_goodness_csv(std::ostream& out, const GoodnessField& field) {
  for (int a = 0; a < field.d; ++a) out << 'x' << (a + 1) << ',';
  out << "n,gamma,a_spread,a_couple\n";
  for (const auto& c : field.cells) {
    for (int a = 0; a < field.d; ++a) out << c.x[a] << ',';
    out << c.n << ',' << c.gamma << ',' << c.a_spread << ',' << c.a_couple << '\n';
  }
}

namespace {

nlohmann::json site_json(const Site& x, int d) {
  auto arr = nlohmann::json::array();
  for (int a = 0; a < d; ++a) arr.push_back(x[a]);
  return arr;
}

}  // namespace

nlohmann::json to_json(const CouplingReport& r, int d) {
  nlohmann::json j;
  j["block_x"] = site_json(r.block_x, d);
  j["block_n"] = r.block_n;
  j["precondition_ok"] = r.precondition_ok;
  j["bottom_in_gconf"] = {r.bottom1_in_gconf, r.bottom2_in_gconf};
  j["reference_found"] = r.reference_found;
  j["a_spread"] = r.a_spread;
  j["a_couple"] = r.a_couple;
  j["gamma"] = r.gamma;
  j["agree_3Ls"] = r.agree_3Ls;
  j["gconf_neighbors"] = r.gconf_neighbors;
  j["bottoms_agree"] = r.bottoms_agree;
  j["center_agreement_all_times"] =
      r.center_agreement_all_times ? nlohmann::json(*r.center_agreement_all_times) : nlohmann::json();
  j["spread_margin_R"] = r.spread_margin_R;
  j["spread_margin_r0"] = r.spread_margin_r0;
  j["disagreements_3Ls"] = r.disagreements_3Ls;
  j["first_failure"] = r.first_failure ? site_json(*r.first_failure, d) : nlohmann::json();
  j["first_failure_time"] = r.first_failure_time ? nlohmann::json(*r.first_failure_time) : nlohmann::json();
  j["failure_reason"] = r.failure_reason;
  return j;
}

nlohmann::json to_json(const Scales& s) {
  return {{"R", s.R},           {"d", s.d},
          {"kappa", s.kappa},   {"s", s.s},
          {"M", s.M},           {"c_time", s.c_time},
          {"c_dens", s.c_dens}, {"R_log_R", s.R_log_R},
          {"R_max", s.R_max},   {"L_s", s.L_s},
          {"T_spread", s.T_spread}, {"T_couple", s.T_couple},
          {"L_t", s.L_t},       {"r0", s.r0},
          {"overridden", s.overridden}};
}

nlohmann::json to_json(const FeasibilityCheck& f) {
  return {{"name", f.name}, {"lhs", f.lhs}, {"rhs", f.rhs}, {"holds", f.holds}};
}

}  // namespace barw
