#include "barw/cli.hpp"

#include "barw/parallel.hpp"
#include "barw/stats.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#ifndef BARW_VERSION
#define BARW_VERSION "unknown"
#endif

namespace barw::cli {

namespace fs = std::filesystem;

ConfigError::ConfigError(const std::string& source, int line, const std::string& key,
                         const std::string& msg)
    : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) +
                         (key.empty() ? std::string() : ": " + key) + ": " + msg),
      line(line),
      key(key) {}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  return std::all_of(k.begin(), k.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  });
}

std::string join(const std::vector<std::int64_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

Settings Settings::parse(std::istream& in, const std::string& source) {
  Settings s;
  s.source_ = source;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line, "", "expected key = value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (!valid_key(key)) throw ConfigError(source, line, key, "malformed key");
    if (value.empty()) throw ConfigError(source, line, key, "empty value");
    if (s.entries_.count(key)) throw ConfigError(source, line, key, "duplicate key");
    s.entries_[key] = Entry{value, line};
  }
  return s;
}

Settings Settings::parse_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "", "cannot open config file");
  return parse(in, path.string());
}

Settings Settings::from_map(const std::map<std::string, std::string>& values) {
  Settings s;
  s.source_ = "<manifest>";
  for (const auto& [k, v] : values) s.entries_[k] = Entry{v, 0};
  return s;
}

void Settings::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) throw ConfigError(source_, 0, key, "malformed key");
  entries_[key] = Entry{value, 0};
}

const Settings::Entry* Settings::find(const std::string& key) {
  used_.insert(key);
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void Settings::reject(const std::string& key, const std::string& msg) const {
  const auto it = entries_.find(key);
  throw ConfigError(source_, it == entries_.end() ? 0 : it->second.line, key, msg);
}

double Settings::get_double(const std::string& key, double fallback) {
  const Entry* e = find(key);
  if (!e) {
    resolved_[key] = format_double(fallback);
    return fallback;
  }
  char* end = nullptr;
  const double v = std::strtod(e->value.c_str(), &end);
  if (end == e->value.c_str() || *end != '\0' || !std::isfinite(v))
    reject(key, "expected a number, got '" + e->value + "'");
  resolved_[key] = e->value;
  return v;
}

std::int64_t Settings::get_int(const std::string& key, std::int64_t fallback) {
  const Entry* e = find(key);
  if (!e) {
    resolved_[key] = std::to_string(fallback);
    return fallback;
  }
  std::int64_t v = 0;
  const char* b = e->value.data();
  const char* end = b + e->value.size();
  const auto [ptr, ec] = std::from_chars(b, end, v);
  if (ec != std::errc() || ptr != end) reject(key, "expected an integer, got '" + e->value + "'");
  resolved_[key] = e->value;
  return v;
}

std::uint64_t Settings::get_uint(const std::string& key, std::uint64_t fallback) {
  const Entry* e = find(key);
  if (!e) {
    resolved_[key] = std::to_string(fallback);
    return fallback;
  }
  std::uint64_t v = 0;
  const char* b = e->value.data();
  const char* end = b + e->value.size();
  const auto [ptr, ec] = std::from_chars(b, end, v);
  if (ec != std::errc() || ptr != end)
    reject(key, "expected a non-negative integer, got '" + e->value + "'");
  resolved_[key] = e->value;
  return v;
}

bool Settings::get_bool(const std::string& key, bool fallback) {
  const Entry* e = find(key);
  if (!e) {
    resolved_[key] = fallback ? "true" : "false";
    return fallback;
  }
  bool v = false;
  if (e->value == "true" || e->value == "1") v = true;
  else if (e->value == "false" || e->value == "0") v = false;
  else reject(key, "expected true or false, got '" + e->value + "'");
  resolved_[key] = v ? "true" : "false";
  return v;
}

std::string Settings::get_string(const std::string& key, const std::string& fallback) {
  const Entry* e = find(key);
  resolved_[key] = e ? e->value : fallback;
  return resolved_[key];
}

std::vector<std::int64_t> Settings::get_int_list(const std::string& key,
                                                 const std::vector<std::int64_t>& fallback) {
  const Entry* e = find(key);
  if (!e) {
    resolved_[key] = join(fallback);
    return fallback;
  }
  std::vector<std::int64_t> out;
  std::stringstream ss(e->value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size())
      reject(key, "expected a comma-separated integer list, got '" + e->value + "'");
    out.push_back(v);
  }
  resolved_[key] = join(out);
  return out;
}

std::optional<std::int64_t> Settings::get_optional_int(const std::string& key) {
  if (!has(key)) {
    used_.insert(key);
    return std::nullopt;
  }
  return get_int(key, 0);
}

std::optional<double> Settings::get_optional_double(const std::string& key) {
  if (!has(key)) {
    used_.insert(key);
    return std::nullopt;
  }
  return get_double(key, 0.0);
}

void Settings::finish() const {
  for (const auto& [k, e] : entries_)
    if (!used_.count(k)) throw ConfigError(source_, e.line, k, "unknown key");
}

// ---------------------------------------------------------------------------

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

nlohmann::json to_json(const RunManifest& m) {
  return {{"subcommand", m.subcommand}, {"params", m.params},   {"seed", m.seed},
          {"stream", m.stream},         {"version", m.version}, {"started", m.started},
          {"finished", m.finished},     {"outputs", m.outputs}, {"exit_code", m.exit_code}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.subcommand = j.at("subcommand").get<std::string>();
  m.params = j.at("params").get<std::map<std::string, std::string>>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.stream = j.at("stream").get<std::uint64_t>();
  m.version = j.at("version").get<std::string>();
  m.started = j.at("started").get<std::string>();
  m.finished = j.at("finished").get<std::string>();
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  m.exit_code = j.value("exit_code", 0);
  return m;
}

// ---------------------------------------------------------------------------

namespace {

struct RunSeed {
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
};

RunSeed read_seed(Settings& s) {
  return {s.get_uint("run.seed", 1), s.get_uint("run.stream", 0)};
}

ModelParams read_model(Settings& s, std::int64_t R, int d) {
  ModelParams p;
  p.mu = s.get_double("model.mu", 2.0);
  p.R = s.get_int("model.R", R);
  p.d = static_cast<int>(s.get_int("model.d", d));
  p.validate();
  return p;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

constexpr std::uint64_t kRetryTag = 0x7265747279;

}  // namespace

CommandResult cmd_simulate(Settings& s, const RunContext& ctx) {
  const RunSeed rs = read_seed(s);
  const ModelParams p = read_model(s, 20, 1);
  const std::int64_t side = s.get_int("lattice.side", 4096);
  const std::string init = s.get_string("sim.init", "bernoulli");
  const double p0 = s.get_double("sim.init_density", theta(p.mu));
  const std::int64_t burn = s.get_int("sim.burn_in", 0);
  const std::int64_t steps = s.get_int("sim.steps", 100);
  const int retry_cap = static_cast<int>(s.get_int("sim.retry_cap", 5));
  const std::int64_t r = s.get_int("sim.density_radius", p.R);
  const std::int64_t every = s.get_int("sim.density_every", 1);
  const auto snaps = s.get_int_list("sim.snapshots", {steps});
  s.finish();

  if (init != "bernoulli" && init != "full") s.reject("sim.init", "expected bernoulli or full");
  if (!(p0 >= 0.0 && p0 <= 1.0)) s.reject("sim.init_density", "must lie in [0, 1]");
  if (burn < 0) s.reject("sim.burn_in", "must be >= 0");
  if (steps < 0) s.reject("sim.steps", "must be >= 0");
  if (every < 1) s.reject("sim.density_every", "must be >= 1");
  if (r < 0) s.reject("sim.density_radius", "must be >= 0");
  for (auto t : snaps)
    if (t < 0 || t > steps) s.reject("sim.snapshots", "time " + std::to_string(t) + " outside [0, steps]");
  if (2 * std::max(p.R, r) + 1 > side) throw TorusTooSmall(2 * std::max(p.R, r) + 1, side);

  const NoiseField base(rs.seed, rs.stream);
  NoiseField noise = base;
  Config cfg;
  int attempt = 0;
  for (;; ++attempt) {
    noise = attempt == 0 ? base : base.with_stream(derive_stream(rs.stream, kRetryTag, static_cast<std::uint64_t>(attempt)));
    cfg = init == "full" ? full_config(p.d, side) : bernoulli_product_init(noise, 0, p0, p.d, side);
    for (std::int64_t t = 0; t < burn && !cfg.empty(); ++t) cfg = step(cfg, p, noise, t);
    if (!cfg.empty() || burn == 0 || attempt >= retry_cap || init == "full") break;
  }

  CommandResult res;
  std::ofstream csv(ctx.out_dir / "density.csv");
  csv << "t,time,occupied,global_density,local_min,local_max,local_origin\n" << std::setprecision(17);
  DensityField field;
  for (std::int64_t t = 0; t <= steps; ++t) {
    const std::int64_t time = burn + t;
    if (t % every == 0 || t == steps) {
      density_field_into(cfg, r, field);
      const auto [lo, hi] = std::minmax_element(field.values.begin(), field.values.end());
      csv << t << ',' << time << ',' << cfg.count() << ',' << cfg.global_density() << ',' << *lo
          << ',' << *hi << ',' << field.values.front() << '\n';
    }
    if (std::find(snaps.begin(), snaps.end(), t) != snaps.end()) {
      const std::string name = "snapshot_" + std::to_string(t) + ".barw";
      if (std::find(res.outputs.begin(), res.outputs.end(), name) == res.outputs.end()) {
        write_snapshot_file((ctx.out_dir / name).string(), Snapshot{cfg, time, rs.seed, noise.stream_id()});
        res.outputs.push_back(name);
      }
    }
    if (t < steps) cfg = step(cfg, p, noise, time);
  }
  csv.close();
  res.outputs.insert(res.outputs.begin(), "density.csv");
  res.summary = {{"final_density", cfg.global_density()},
                 {"extinct", cfg.empty()},
                 {"burn_in_retries", attempt},
                 {"stream_used", noise.stream_id()}};
  return res;
}

CommandResult cmd_certify(Settings& s, const RunContext& ctx) {
  const RunSeed rs = read_seed(s);
  const ModelParams p = read_model(s, 32, 1);
  const std::int64_t R_max = s.get_int("profile.R_max", 64);
  const auto radii = s.get_int_list("profile.r", {8, 32});
  const int k0 = static_cast<int>(s.get_int("profile.k0", 4));
  const double a1 = s.get_double("profile.alpha1", 0.05);
  const double b1 = s.get_double("profile.beta1", 0.4);
  const double gamma = s.get_double("profile.gamma", 0.1);
  const int m_max = static_cast<int>(s.get_int("profile.m_max", 20));
  const double margin = s.get_double("profile.fp_margin", 0.1);
  const bool search = s.get_bool("profile.search", true);
  std::optional<double> fs_, fw, feps, fdelta;
  if (!search) {
    fs_ = s.get_optional_double("profile.s");
    fw = s.get_optional_double("profile.w");
    feps = s.get_optional_double("profile.eps0");
    fdelta = s.get_optional_double("profile.delta");
  }
  const std::int64_t uk_trials = s.get_int("certify.uk_trials", 0);
  const auto max_listed = static_cast<std::size_t>(s.get_int("certify.max_listed", 64));
  s.finish();
  if (!search) {
    for (const char* k : {"profile.s", "profile.w", "profile.eps0", "profile.delta"})
      if (!s.has(k)) s.reject(k, "required when profile.search = false");
  }

  const double efp = eps_fp(p.mu, margin);
  const AlphaBetaSeq seq = build_alpha_beta(p.mu, a1, b1, m_max, gamma);
  const int m = m0(seq, efp);

  nlohmann::json out;
  out["mu"] = p.mu;
  out["R"] = p.R;
  out["d"] = p.d;
  out["eps_fp"] = efp;
  out["m0"] = m;
  std::vector<double> al, be;
  for (int i = 1; i <= m; ++i) {
    al.push_back(seq.alpha(i));
    be.push_back(seq.beta(i));
  }
  out["alpha"] = al;
  out["beta"] = be;
  out["radii"] = nlohmann::json::array();
  bool all_pass = true;
  std::int64_t total_violations = 0;
  for (std::size_t ri = 0; ri < radii.size(); ++ri) {
    const std::int64_t r = radii[ri];
    ProfileParams pp;
    pp.d = p.d;
    pp.r = r;
    pp.R_max = R_max;
    pp.m0 = m;
    pp.k0 = k0;
    pp.seq = seq;
    nlohmann::json jr;
    jr["r"] = r;
    double delta = 0.0;
    if (search) {
      const auto found = find_cdp_params(p.mu, r, p.R, pp);
      jr["search_found"] = found.has_value();
      if (!found) {
        all_pass = false;
        out["radii"].push_back(jr);
        continue;
      }
      pp.s = found->s;
      pp.w = found->w;
      pp.eps0 = found->eps0;
      delta = found->delta0;
    } else {
      pp.s = *fs_;
      pp.w = *fw;
      pp.eps0 = *feps;
      delta = *fdelta;
    }
    const ProfilePair pair = make_profile_pair(pp);
    const CdpReport rep = certify_cdp(pair, p.mu, pp.eps0, delta, true, max_listed);
    all_pass = all_pass && rep.passed;
    total_violations += static_cast<std::int64_t>(rep.violation_count);
    const BernsteinBound bb = bernstein(pp.eps0, delta, r, p.d);
    jr["params"] = to_json(pp);
    jr["delta"] = delta;
    jr["report"] = to_json(rep);
    jr["bernstein"] = to_json(bb);
    if (uk_trials > 0) {
      auto uk = nlohmann::json::array();
      for (int k = 0; k < k0; ++k) {
        const NoiseField noise(rs.seed, derive_stream(rs.stream, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(k)));
        const UkEstimate e = estimate_uk_probability(pair, p.mu, k, Site::Zero(), uk_trials, noise);
        const double fail = 1.0 - e.estimate;
        uk.push_back({{"k", k},
                      {"x", 0},
                      {"trials", e.trials},
                      {"estimate", e.estimate},
                      {"sigma", e.sigma},
                      {"failure", fail},
                      {"respects_bound", !bb.informative || fail <= bb.bound + 3.0 * e.sigma}});
      }
      jr["uk"] = uk;
    }
    out["radii"].push_back(jr);
  }
  out["passed"] = all_pass;
  write_json(ctx.out_dir / "certify.json", out);
  CommandResult res;
  res.exit_code = all_pass ? kExitPass : kExitFail;
  res.outputs = {"certify.json"};
  res.summary = {{"passed", all_pass}, {"violations", total_violations}};
  return res;
}

BlockProbeSetup block_probe_setup(Settings& s) {
  BlockProbeSetup b;
  b.params = read_model(s, 16, 2);
  const double kappa = s.get_double("scales.kappa", 0.5);
  const double speed = s.get_double("scales.s", 0.5);
  const std::int64_t M = s.get_int("scales.M", 2);
  ScaleOverrides o;
  o.L_s = s.get_optional_int("scales.override.L_s");
  o.L_t = s.get_optional_int("scales.override.L_t");
  o.T_spread = s.get_optional_int("scales.override.T_spread");
  o.T_couple = s.get_optional_int("scales.override.T_couple");
  b.scales = apply_overrides(compute_scales(b.params, kappa, speed, M), o);
  const double a1 = s.get_double("profile.alpha1", 0.17);
  const double b1 = s.get_double("profile.beta1", 0.52);
  const double gamma = s.get_double("profile.gamma", 0.1);
  const int m_max = static_cast<int>(s.get_int("profile.m_max", 20));
  const double margin = s.get_double("profile.fp_margin", 0.01);
  const double w = s.get_double("profile.w", 2.0);
  const double eps0_fraction = s.get_double("profile.eps0_fraction", 0.5);
  b.eps_fp = eps_fp(b.params.mu, margin);
  b.seq = build_alpha_beta(b.params.mu, a1, b1, m_max, gamma);
  b.m0 = m0(b.seq, b.eps_fp);
  b.profiles = make_block_profiles(b.scales, b.seq, b.m0, w, eps0_fraction * a1, b.eps_fp);
  b.burn_in = s.get_int("probe.burn_in", 50);
  b.retry_cap = static_cast<int>(s.get_int("probe.retry_cap", 5));
  b.coupling.reference_burn_in = s.get_int("probe.reference_burn_in", 30);
  b.coupling.reference_retry_cap = static_cast<int>(s.get_int("probe.reference_retry_cap", 100));
  b.side = s.get_int("lattice.side", b.scales.min_torus_side());
  if (b.side < b.scales.min_torus_side()) throw TorusTooSmall(b.scales.min_torus_side(), b.side);
  if (b.burn_in < 1) s.reject("probe.burn_in", "must be >= 1");
  return b;
}

std::vector<CouplingReport> run_block_trials(const BlockProbeSetup& b, std::uint64_t seed,
                                             std::uint64_t stream, std::int64_t trials,
                                             int threads) {
  std::vector<CouplingReport> reports(static_cast<std::size_t>(std::max<std::int64_t>(trials, 0)));
  parallel_for(trials, threads, [&](std::int64_t t) {
    const auto ut = static_cast<std::uint64_t>(t);
    const NoiseField n1(seed, derive_stream(stream, 1, ut));
    const NoiseField n2(seed, derive_stream(stream, 2, ut));
    const NoiseField shared(seed, derive_stream(stream, 3, ut));
    const Config c1 = burn_in_stationary(b.params, n1, b.side, b.burn_in, b.retry_cap).config;
    const Config c2 = burn_in_stationary(b.params, n2, b.side, b.burn_in, b.retry_cap).config;
    reports[static_cast<std::size_t>(t)] = coupling_experiment(
        c1, c2, b.scales, b.profiles, b.params, shared, BlockRegion{4, Site::Zero(), 0}, b.coupling);
  });
  return reports;
}

CommandResult cmd_block_probe(Settings& s, const RunContext& ctx) {
  const RunSeed rs = read_seed(s);
  const BlockProbeSetup b = block_probe_setup(s);
  const std::int64_t trials = s.get_int("probe.trials", 200);
  const std::int64_t extent = s.get_int("probe.field_extent", 0);
  const std::int64_t blocks = s.get_int("probe.field_blocks", 1);
  s.finish();
  if (trials < 0) s.reject("probe.trials", "must be >= 0");
  if (extent < 0 || blocks < 1) s.reject("probe.field_extent", "needs extent >= 0 and field_blocks >= 1");

  const auto reports = run_block_trials(b, rs.seed, rs.stream, trials, ctx.threads);
  std::int64_t good = 0;
  std::int64_t items_broken = 0;
  auto jt = nlohmann::json::array();
  std::ofstream csv(ctx.out_dir / "trials.csv");
  csv << "trial,gamma,precondition,a_spread,a_couple,items_hold,disagreements_3Ls\n";
  for (std::size_t t = 0; t < reports.size(); ++t) {
    const CouplingReport& r = reports[t];
    good += r.gamma;
    if (r.gamma && !r.items_hold()) ++items_broken;
    jt.push_back(to_json(r, b.params.d));
    csv << t << ',' << r.gamma << ',' << r.precondition_ok << ',' << r.a_spread << ','
        << r.a_couple << ',' << r.items_hold() << ',' << r.disagreements_3Ls << '\n';
  }
  csv.close();

  nlohmann::json out;
  out["scales"] = to_json(b.scales);
  if (b.scales.overridden)
    out["caveat"] = "mini-scale overrides in force: block lengths are far below the asymptotic "
                    "scales, so frequencies describe trends only";
  out["feasibility"] = {to_json(psi_feasibility(b.scales)), to_json(drift_feasibility(b.scales)),
                        to_json(support_feasibility(b.scales, b.profiles.R_profile))};
  out["eps_fp"] = b.eps_fp;
  out["m0"] = b.m0;
  out["alpha_m0"] = b.profiles.alpha_m0;
  out["beta_m0"] = b.profiles.beta_m0;
  out["side"] = b.side;
  out["trials"] = jt;
  out["good"] = good;
  out["good_fraction"] = trials > 0 ? static_cast<double>(good) / static_cast<double>(trials) : 0.0;
  out["good_without_items"] = items_broken;

  CommandResult res;
  res.outputs = {"reports.json", "trials.csv"};
  if (extent > 0) {
    const NoiseField init_noise(rs.seed, derive_stream(rs.stream, 4, 0));
    const NoiseField noise(rs.seed, derive_stream(rs.stream, 5, 0));
    const BurnInResult start = burn_in_stationary(b.params, init_noise, b.side, b.burn_in, b.retry_cap);
    const GoodnessField field = goodness_field(start.config, b.scales, b.profiles, b.params, noise,
                                               extent, blocks, b.coupling);
    std::ofstream g(ctx.out_dir / "gamma_field.csv");
    write_goodness_csv(g, field);
    out["field_good_fraction"] = field.good_fraction();
    res.outputs.push_back("gamma_field.csv");
  }
  write_json(ctx.out_dir / "reports.json", out);
  res.exit_code = items_broken == 0 ? kExitPass : kExitFail;
  res.summary = {{"trials", trials}, {"good", good}, {"good_without_items", items_broken}};
  return res;
}

CommandResult cmd_lineage(Settings& s, const RunContext& ctx) {
  const RunSeed rs = read_seed(s);
  EnsembleOptions opt;
  opt.params = read_model(s, 5, 2);
  opt.side = s.get_int("lattice.side", 128);
  opt.paths = s.get_int("lineage.paths", 2000);
  opt.K = s.get_int("lineage.K", 4096);
  opt.burn_in = s.get_int("lineage.burn_in", 100);
  opt.retry_cap = static_cast<int>(s.get_int("lineage.retry_cap", 20));
  std::vector<std::int64_t> auto_ks;
  for (int i = 1; i <= 8; ++i)
    if (opt.K * i / 8 > 0 && (auto_ks.empty() || auto_ks.back() != opt.K * i / 8)) auto_ks.push_back(opt.K * i / 8);
  const auto ks = s.get_int_list("lineage.checkpoints", auto_ks);
  const std::int64_t stride = s.get_int("lineage.csv_stride", 1);
  const double lln_threshold = s.get_double("stats.lln_threshold", 0.05);
  const double r2_min = s.get_double("stats.r2_min", 0.99);
  const std::int64_t min_samples = s.get_int("stats.min_samples", 500);
  const std::int64_t L_s = s.get_int("speed.L_s", 0);
  const std::int64_t L_t = s.get_int("speed.L_t", 0);
  const double delta = s.get_double("speed.delta", 0.05);
  s.finish();
  opt.threads = ctx.threads;
  if (opt.paths < 0) s.reject("lineage.paths", "must be >= 0");
  if (opt.K < 0) s.reject("lineage.K", "must be >= 0");
  if (opt.burn_in < 1) s.reject("lineage.burn_in", "must be >= 1");
  if (stride < 1) s.reject("lineage.csv_stride", "must be >= 1");
  for (auto k : ks)
    if (k < 1 || k > opt.K) s.reject("lineage.checkpoints", "checkpoint " + std::to_string(k) + " outside [1, K]");
  if (L_s > 0 && (L_t < 1 || L_t > opt.K)) s.reject("speed.L_t", "must lie in [1, K] when speed.L_s is set");

  const LineageEnsemble ens = run_lineage_ensemble(opt, rs.seed, rs.stream);
  CommandResult res;
  {
    std::ofstream csv(ctx.out_dir / "paths.csv");
    write_path_csv(csv, ens.paths, stride);
  }
  res.outputs.push_back("paths.csv");

  nlohmann::json st;
  st["paths"] = opt.paths;
  st["K"] = opt.K;
  st["burn_in_retries"] = ens.burn_in_retries;
  bool pass = true;
  if (!ks.empty() && opt.paths >= 2) {
    const EnsembleSummary sum = summarize(ens.paths, ks);
    {
      std::ofstream m(ctx.out_dir / "moments.csv");
      write_moments_csv(m, sum);
    }
    res.outputs.push_back("moments.csv");
    const LlnReport lln = lln_diagnostic(sum, lln_threshold);
    st["lln"] = to_json(lln);
    pass = pass && lln.pass;
    if (sum.n >= min_samples) {
      const CltReport clt = clt_diagnostic(sum, ks.back(), min_samples);
      st["clt"] = to_json(clt);
      pass = pass && clt.pass;
      if (ks.size() >= 3) {
        const FcltReport fclt = fclt_diagnostic(sum, r2_min, min_samples);
        st["fclt"] = to_json(fclt);
        pass = pass && fclt.pass;
      }
    } else {
      st["clt"] = {{"skipped", "fewer than " + std::to_string(min_samples) + " paths"}};
    }
  }
  if (L_s > 0) {
    std::vector<LineagePath> cut = ens.paths;
    for (auto& path : cut) {
      path.positions.resize(static_cast<std::size_t>(L_t + 1));
      path.counts.resize(static_cast<std::size_t>(L_t));
      path.drift_num.resize(static_cast<std::size_t>(L_t));
    }
    const std::vector<Site> offsets(cut.size(), Site::Zero());
    const SpeedBoundReport sb = check_speed_bound(cut, offsets, L_s, L_t, opt.params.R, delta);
    st["speed_bound"] = to_json(sb);
    st["azuma_envelope"] = sb.envelope;
  }
  st["pass"] = pass;
  write_json(ctx.out_dir / "stats.json", st);
  res.outputs.push_back("stats.json");
  res.exit_code = pass ? kExitPass : kExitFail;
  res.summary = {{"paths", opt.paths}, {"K", opt.K}, {"pass", pass}};
  return res;
}

// ---------------------------------------------------------------------------

RunManifest run_command(const std::string& subcommand, Settings& s, const RunContext& ctx) {
  RunManifest m;
  m.subcommand = subcommand;
  m.version = BARW_VERSION;
  m.started = utc_now();
  fs::create_directories(ctx.out_dir);
  CommandResult r;
  if (subcommand == "simulate") r = cmd_simulate(s, ctx);
  else if (subcommand == "certify") r = cmd_certify(s, ctx);
  else if (subcommand == "block-probe") r = cmd_block_probe(s, ctx);
  else if (subcommand == "lineage") r = cmd_lineage(s, ctx);
  else throw ConfigError("<command line>", 0, subcommand, "unknown subcommand");
  m.finished = utc_now();
  m.params = s.resolved();
  m.seed = std::stoull(m.params.at("run.seed"));
  m.stream = std::stoull(m.params.at("run.stream"));
  for (const auto& name : r.outputs) m.outputs[name] = sha256_file(ctx.out_dir / name);
  m.exit_code = r.exit_code;
  nlohmann::json j = to_json(m);
  j["summary"] = r.summary;
  write_json(ctx.out_dir / kManifestName, j);
  return m;
}

VerifyReport verify_directory(const fs::path& dir, int threads) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw ConfigError((dir / kManifestName).string(), 0, "", "no manifest in directory");
  const RunManifest m = manifest_from_json(nlohmann::json::parse(in));
  VerifyReport v;
  v.files_match = true;
  for (const auto& [name, digest] : m.outputs) {
    if (!fs::exists(dir / name) || sha256_file(dir / name) != digest) {
      v.files_match = false;
      v.mismatches.push_back("stored " + name);
    }
  }
  std::random_device rd;
  const fs::path scratch = fs::temp_directory_path() / ("barw-verify-" + std::to_string(rd()));
  Settings s = Settings::from_map(m.params);
  const RunManifest replay = run_command(m.subcommand, s, RunContext{scratch, threads});
  v.replay_matches = replay.outputs == m.outputs;
  for (const auto& [name, digest] : m.outputs) {
    const auto it = replay.outputs.find(name);
    if (it == replay.outputs.end() || it->second != digest) v.mismatches.push_back("replay " + name);
  }
  fs::remove_all(scratch);
  return v;
}

}  // namespace barw::cli
