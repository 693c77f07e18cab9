#include "barw/lineage.hpp"

#include "barw/parallel.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>

namespace barw {

EnvHistory::EnvHistory(ModelParams params, NoiseField noise, std::int64_t bottom_time,
                       std::vector<Config> snapshots)
    : params_(params), noise_(std::move(noise)), bottom_(bottom_time), snaps_(std::move(snapshots)) {
  if (snaps_.empty()) throw DomainError("EnvHistory: no snapshots");
}

EnvHistory EnvHistory::record(const Config& start, const ModelParams& params,
                              const NoiseField& noise, std::int64_t bottom_time,
                              std::int64_t horizon) {
  if (horizon < 0) throw DomainError("EnvHistory: negative horizon");
  std::vector<Config> snaps;
  snaps.reserve(static_cast<std::size_t>(horizon + 1));
  snaps.push_back(start);
  for (std::int64_t t = 0; t < horizon; ++t)
    snaps.push_back(step(snaps.back(), params, noise, bottom_time + t));
  return EnvHistory(params, noise, bottom_time, std::move(snaps));
}

const Config& EnvHistory::at(std::int64_t time) const {
  if (time < bottom_ || time > top_time())
    throw std::out_of_range("EnvHistory: time " + std::to_string(time) + " not retained");
  return snaps_[static_cast<std::size_t>(time - bottom_)];
}

bool EnvHistory::replay_consistent(std::int64_t from) const {
  Config cur = at(from);
  for (std::int64_t t = from; t < top_time(); ++t) {
    cur = step(cur, params_, noise_, t);
    if (!(cur == at(t + 1))) return false;
  }
  return true;
}

Site AncestorLaw::drift_numerator() const {
  Site s = Site::Zero();
  for (const auto& o : offsets) s += o;
  return s;
}

AncestorLaw ancestor_distribution(const Config& parent_env, const Site& x, std::int64_t R) {
  require_ball_fits(R, parent_env.side());
  const int d = parent_env.dim();
  AncestorLaw law;
  const std::int64_t span = ball_side(R);
  const std::int64_t cells = ipow(span, d);
  Site off = Site::Zero();
  for (std::int64_t c = 0; c < cells; ++c) {
    std::int64_t t = c;
    for (int a = 0; a < d; ++a) {
      off[a] = t % span - R;
      t /= span;
    }
    if (parent_env.at(x + off)) law.offsets.push_back(off);
  }
  law.count = static_cast<std::int64_t>(law.offsets.size());
  if (law.count == 0) throw EmptyNeighborhood("no occupied site within distance R of the walker");
  return law;
}

RealPoint LineagePath::drift(std::int64_t k) const {
  const auto i = static_cast<std::size_t>(k - 1);
  return drift_num[i].cast<double>() / static_cast<double>(counts[i]);
}

RealPoint LineagePath::martingale_increment(std::int64_t k) const {
  return increment(k).cast<double>() - drift(k);
}

RealPoint LineagePath::martingale_sum(std::int64_t k) const {
  RealPoint s = RealPoint::Zero();
  for (std::int64_t i = 1; i <= k; ++i) s += martingale_increment(i);
  return s;
}

LineagePath sample_lineage(const EnvHistory& env, const Site& start, std::int64_t K,
                           const NoiseField& choices, std::uint64_t path_id) {
  if (K < 0 || K > env.horizon()) throw DomainError("sample_lineage: K exceeds the history horizon");
  const Config& top = env.top();
  if (!top.at(start)) throw DomainError("sample_lineage: start site is not occupied");
  LineagePath path;
  path.d = top.dim();
  path.start = start;
  path.positions.push_back(Site::Zero());
  const std::int64_t R = env.params().R;
  const Site id(static_cast<std::int64_t>(path_id), 0, 0);
  for (std::int64_t k = 0; k < K; ++k) {
    const Config& parent = env.at(env.top_time() - k - 1);
    const Site x = path.positions.back();
    const AncestorLaw law = ancestor_distribution(parent, Site(start + x), R);
    const double u = choices.uniform_at(id, k);
    auto pick = static_cast<std::size_t>(u * static_cast<double>(law.count));
    pick = std::min(pick, law.offsets.size() - 1);
    path.positions.push_back(x + law.offsets[pick]);
    path.counts.push_back(law.count);
    path.drift_num.push_back(law.drift_numerator());
  }
  path.decomposed = true;
  return path;
}

LineagePath lineage_from_parent_maps(const std::vector<ParentMap>& maps, const Site& start) {
  LineagePath path;
  path.positions.push_back(Site::Zero());
  if (maps.empty()) return path;
  path.d = maps.front().d;
  path.start = start;
  for (auto it = maps.rbegin(); it != maps.rend(); ++it) {
    const Site here = start + path.positions.back();
    std::int64_t idx = 0;
    for (int a = it->d - 1; a >= 0; --a) {
      std::int64_t c = here[a] % it->side;
      if (c < 0) c += it->side;
      idx = idx * it->side + c;
    }
    const auto parent = it->parent_of(idx);
    if (!parent) throw std::logic_error("lineage_from_parent_maps: particle without a parent");
    path.positions.push_back(path.positions.back() + *parent);
  }
  return path;
}

void martingale_decomposition(LineagePath& path, const EnvHistory& env) {
  path.counts.clear();
  path.drift_num.clear();
  const std::int64_t R = env.params().R;
  for (std::int64_t k = 1; k <= path.steps(); ++k) {
    const Config& parent = env.at(env.top_time() - k);
    const AncestorLaw law = ancestor_distribution(
        parent, Site(path.start + path.positions[static_cast<std::size_t>(k - 1)]), R);
    path.counts.push_back(law.count);
    path.drift_num.push_back(law.drift_numerator());
  }
  path.decomposed = true;
}

bool reconstruction_exact(const LineagePath& path) {
  using boost::multiprecision::cpp_rational;
  if (!path.decomposed) throw DomainError("reconstruction_exact: path not decomposed");
  for (int a = 0; a < path.d; ++a) {
    cpp_rational drift_sum = 0;
    cpp_rational y_sum = 0;
    for (std::int64_t k = 1; k <= path.steps(); ++k) {
      const auto i = static_cast<std::size_t>(k - 1);
      const cpp_rational drift(path.drift_num[i][a], path.counts[i]);
      drift_sum += drift;
      y_sum += cpp_rational(path.increment(k)[a]) - drift;
      if (drift_sum + y_sum != cpp_rational(path.positions[i + 1][a] - path.positions[0][a]))
        return false;
    }
  }
  return true;
}

double max_conditional_mean_of_y(const LineagePath& path, const EnvHistory& env) {
  double worst = 0.0;
  const std::int64_t R = env.params().R;
  for (std::int64_t k = 1; k <= path.steps(); ++k) {
    const AncestorLaw law = ancestor_distribution(
        env.at(env.top_time() - k), Site(path.start + path.positions[static_cast<std::size_t>(k - 1)]), R);
    const RealPoint drift = path.drift(k);
    RealPoint mean = RealPoint::Zero();
    for (const auto& o : law.offsets) mean += law.weight() * (o.cast<double>() - drift);
    worst = std::max(worst, mean.head(path.d).cwiseAbs().maxCoeff());
  }
  return worst;
}

double azuma_envelope(std::int64_t L_s, std::int64_t L_t, std::int64_t R) {
  const double a = static_cast<double>(L_s) / 8.0;
  return static_cast<double>(L_t) *
         std::exp(-a * a / (2.0 * static_cast<double>(L_t) * static_cast<double>(R * R)));
}

SpeedBoundReport check_speed_bound(const std::vector<LineagePath>& paths,
                                   const std::vector<Site>& start_offsets,
                                   std::int64_t L_s, std::int64_t L_t, std::int64_t R,
                                   double delta) {
  if (start_offsets.size() != paths.size())
    throw DomainError("check_speed_bound: one start offset per path required");
  SpeedBoundReport rep;
  rep.delta = delta;
  rep.envelope = azuma_envelope(L_s, L_t, R);
  rep.envelope_vacuous = rep.envelope >= 1.0;
  rep.drift_limit = static_cast<double>(L_s) / (8.0 * static_cast<double>(L_t));
  const double confine = static_cast<double>(L_s) / 4.0;
  const double mart = static_cast<double>(L_s) / 8.0;
  const double near = static_cast<double>(L_s) / 2.0;
  const auto bucket_width = std::max<std::int64_t>(1, L_s / 8);

  for (std::size_t p = 0; p < paths.size(); ++p) {
    const LineagePath& path = paths[p];
    if (!path.decomposed) throw DomainError("check_speed_bound: path not decomposed");
    const int d = path.d;
    const std::int64_t K = std::min(path.steps(), L_t);
    const Site z_off = start_offsets[p];
    double max_dev = 0.0;
    double max_mart = 0.0;
    RealPoint ysum = RealPoint::Zero();
    for (std::int64_t k = 1; k <= K; ++k) {
      const auto prev = static_cast<double>(sup_norm(path.positions[static_cast<std::size_t>(k - 1)], d));
      const RealPoint drift = path.drift(k);
      if (prev <= near) {
        ++rep.drift_steps;
        const double dn = drift.head(d).cwiseAbs().maxCoeff();
        rep.max_drift = std::max(rep.max_drift, dn);
        if (!(dn < rep.drift_limit)) ++rep.drift_violations;
      }
      ysum += path.increment(k).cast<double>() - drift;
      max_mart = std::max(max_mart, ysum.head(d).cwiseAbs().maxCoeff());
      max_dev = std::max(max_dev, static_cast<double>(sup_norm(path.positions[static_cast<std::size_t>(k)], d)));
    }
    ++rep.paths;
    const bool ok = max_dev <= confine;
    rep.confined += ok;
    rep.a_mart += max_mart >= mart;
    const auto b = static_cast<std::size_t>(sup_norm(z_off, d) / bucket_width);
    if (rep.bucket_paths.size() <= b) {
      rep.bucket_paths.resize(b + 1, 0);
      rep.bucket_confined.resize(b + 1, 0);
    }
    ++rep.bucket_paths[b];
    rep.bucket_confined[b] += ok;
  }
  if (rep.paths > 0) {
    const double n = static_cast<double>(rep.paths);
    rep.p_confined = static_cast<double>(rep.confined) / n;
    rep.p_a_mart = static_cast<double>(rep.a_mart) / n;
    rep.sigma_a_mart = std::sqrt(rep.p_a_mart * (1.0 - rep.p_a_mart) / n);
  }
  rep.confinement_ok = rep.p_confined >= 1.0 - delta;
  return rep;
}

LineageEnsemble run_lineage_ensemble(const EnsembleOptions& opt, std::uint64_t seed,
                                     std::uint64_t stream) {
  opt.params.validate();
  if (opt.paths < 0 || opt.K < 0) throw DomainError("run_lineage_ensemble: negative paths or K");
  require_ball_fits(opt.params.R, opt.side);
  LineageEnsemble out;
  out.paths.resize(static_cast<std::size_t>(opt.paths));
  out.env_streams.resize(out.paths.size());
  std::vector<std::int64_t> retries(out.paths.size(), 0);
  parallel_for(opt.paths, opt.threads, [&](std::int64_t i) {
    const auto ui = static_cast<std::uint64_t>(i);
    const NoiseField env_noise(seed, derive_stream(stream, kEnvTag, ui));
    const NoiseField choices(seed, derive_stream(stream, kChoiceTag, ui));
    for (int attempt = 0;; ++attempt) {
      // a fresh stream per attempt, so extinction during the record also retries
      const NoiseField base = env_noise.with_stream(
          derive_stream(env_noise.stream_id(), 0, static_cast<std::uint64_t>(attempt)));
      const BurnInResult b = burn_in_stationary(opt.params, base, opt.side, opt.burn_in, opt.retry_cap);
      if (b.extinct) throw std::runtime_error("run_lineage_ensemble: burn-in went extinct");
      const NoiseField run = base.with_stream(b.stream_id);
      EnvHistory env = EnvHistory::record(b.config, opt.params, run, opt.burn_in, opt.K);
      const Config& top = env.top();
      const std::int64_t n = top.count();
      if (n == 0) {
        if (attempt >= opt.retry_cap) throw std::runtime_error("run_lineage_ensemble: environment went extinct");
        continue;
      }
      // Palm start: uniform over the occupied sites at the top
      const double u = choices.uniform_at(Site(static_cast<std::int64_t>(i), 1, 0), 0);
      std::int64_t target = std::min<std::int64_t>(static_cast<std::int64_t>(u * static_cast<double>(n)), n - 1);
      std::int64_t idx = 0;
      for (;; ++idx) {
        if (top.get(idx) && target-- == 0) break;
      }
      out.paths[static_cast<std::size_t>(i)] = sample_lineage(env, top.site_of(idx), opt.K, choices, ui);
      out.env_streams[static_cast<std::size_t>(i)] = run.stream_id();
      retries[static_cast<std::size_t>(i)] = attempt + b.retries;
      return;
    }
  });
  for (auto r : retries) out.burn_in_retries += r;
  return out;
}

void write_path_csv(std::ostream& out, const std::vector<LineagePath>& paths, std::int64_t stride) {
  if (stride < 1) throw DomainError("write_path_csv: stride must be >= 1");
  const int d = paths.empty() ? 1 : paths.front().d;
  out << "path,k";
  for (int a = 1; a <= d; ++a) out << ",x" << a;
  for (int a = 1; a <= d; ++a) out << ",drift" << a;
  for (int a = 1; a <= d; ++a) out << ",Y" << a;
  out << '\n' << std::setprecision(17);
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const LineagePath& path = paths[p];
    for (std::int64_t k = 0; k <= path.steps(); ++k) {
      if (k % stride != 0 && k != path.steps()) continue;
      out << p << ',' << k;
      for (int a = 0; a < d; ++a) out << ',' << path.positions[static_cast<std::size_t>(k)][a];
      const bool has = k > 0 && path.decomposed;
      const RealPoint dr = has ? path.drift(k) : RealPoint::Zero();
      const RealPoint y = has ? path.martingale_increment(k) : RealPoint::Zero();
      for (int a = 0; a < d; ++a) out << ',' << dr[a];
      for (int a = 0; a < d; ++a) out << ',' << y[a];
      out << '\n';
    }
  }
}

nlohmann::json to_json(const SpeedBoundReport& r) {
  return {{"paths", r.paths},
          {"p_confined", r.p_confined},
          {"confinement_ok", r.confinement_ok},
          {"delta", r.delta},
          {"p_a_mart", r.p_a_mart},
          {"sigma_a_mart", r.sigma_a_mart},
          {"azuma_envelope", r.envelope},
          {"azuma_vacuous", r.envelope_vacuous},
          {"drift_limit", r.drift_limit},
          {"max_drift", r.max_drift},
          {"drift_steps", r.drift_steps},
          {"drift_violations", r.drift_violations},
          {"bucket_paths", r.bucket_paths},
          {"bucket_confined", r.bucket_confined}};
}

}  // namespace barw
