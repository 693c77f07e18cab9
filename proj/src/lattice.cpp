#include "barw/lattice.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace barw {

Config::Config(int d, std::int64_t side) : d_(d), side_(side) {
  if (d < 1 || d > kMaxDim) throw DomainError("dimension must be 1..3");
  if (side < 1) throw DomainError("torus side must be positive");
  size_ = ipow(side, d);
  bits_.assign(static_cast<std::size_t>((size_ + 63) / 64), 0);
}

std::int64_t Config::index_of(const Site& x) const {
  std::int64_t idx = 0;
  for (int a = d_ - 1; a >= 0; --a) idx = idx * side_ + wrap(x[a]);
  return idx;
}

Site Config::site_of(std::int64_t index) const {
  Site x = Site::Zero();
  for (int a = 0; a < d_; ++a) {
    x[a] = index % side_;
    index /= side_;
  }
  return x;
}

std::int64_t Config::count() const {
  std::int64_t c = 0;
  for (auto w : bits_) c += std::popcount(w);
  return c;
}

Site Config::torus_delta(const Site& from, const Site& to) const {
  Site out = Site::Zero();
  for (int a = 0; a < d_; ++a) {
    std::int64_t diff = wrap(to[a] - from[a]);
    if (diff > side_ / 2) diff -= side_;
    out[a] = diff;
  }
  return out;
}

void require_ball_fits(std::int64_t r, std::int64_t side) {
  if (r < 0 || ball_side(r) > side) throw BallTooLarge(r, side);
}

std::vector<std::int32_t> box_counts(const Config& cfg, std::int64_t r) {
  std::vector<std::int32_t> out;
  std::vector<std::int32_t> scratch;
  box_counts_into(cfg, r, out, scratch);
  return out;
}

void box_counts_into(const Config& cfg, std::int64_t r, std::vector<std::int32_t>& cur,
                     std::vector<std::int32_t>& next) {
  require_ball_fits(r, cfg.side());
  const std::int64_t n = cfg.side();
  const std::int64_t size = cfg.size();
  cur.resize(static_cast<std::size_t>(size));

  // axis 0: prefix sums over each row padded by r sites of wrap-around
  std::vector<std::int32_t> prefix(static_cast<std::size_t>(n + 2 * r + 1));
  for (std::int64_t base = 0; base < size; base += n) {
    std::int32_t acc = 0;
    prefix[0] = 0;
    for (std::int64_t j = 0; j < n + 2 * r; ++j) {
      std::int64_t i = j - r;
      if (i < 0) i += n;
      else if (i >= n) i -= n;
      acc += cfg.get(base + i);
      prefix[static_cast<std::size_t>(j + 1)] = acc;
    }
    std::int32_t* out = cur.data() + base;
    const std::int32_t* hi = prefix.data() + 2 * r + 1;
    const std::int32_t* lo = prefix.data();
    for (std::int64_t i = 0; i < n; ++i) out[i] = hi[i] - lo[i];
  }

  // higher axes: the same recursion on whole contiguous slabs of `stride` sites
  if (cfg.dim() > 1) next.resize(static_cast<std::size_t>(size));
  std::int64_t stride = n;
  for (int axis = 1; axis < cfg.dim(); ++axis) {
    const std::int64_t block = stride * n;
    for (std::int64_t outer = 0; outer < size; outer += block) {
      const std::int32_t* in = cur.data() + outer;
      std::int32_t* out = next.data() + outer;
      auto slab = [&](std::int64_t y) { return in + ((y % n + n) % n) * stride; };
      std::fill(out, out + stride, 0);
      for (std::int64_t j = -r; j <= r; ++j) {
        const std::int32_t* src = slab(j);
        for (std::int64_t k = 0; k < stride; ++k) out[k] += src[k];
      }
      for (std::int64_t y = 1; y < n; ++y) {
        const std::int32_t* prev = out + (y - 1) * stride;
        const std::int32_t* add = slab(y + r);
        const std::int32_t* rem = slab(y - r - 1);
        std::int32_t* dst = out + y * stride;
        for (std::int64_t k = 0; k < stride; ++k) dst[k] = prev[k] + add[k] - rem[k];
      }
    }
    cur.swap(next);
    stride *= n;
  }
}

double local_density(const Config& cfg, const Site& x, std::int64_t r) {
  require_ball_fits(r, cfg.side());
  const int d = cfg.dim();
  std::int64_t count = 0;
  Site off = Site::Zero();
  const std::int64_t span = ball_side(r);
  const std::int64_t cells = ipow(span, d);
  for (std::int64_t c = 0; c < cells; ++c) {
    std::int64_t t = c;
    for (int a = 0; a < d; ++a) {
      off[a] = t % span - r;
      t /= span;
    }
    count += cfg.at(x + off);
  }
  return static_cast<double>(count) / static_cast<double>(ipow(span, d));
}

DensityField density_field(const Config& cfg, std::int64_t r) {
  DensityField f;
  density_field_into(cfg, r, f);
  return f;
}

void density_field_into(const Config& cfg, std::int64_t r, DensityField& f) {
  thread_local std::vector<std::int32_t> counts;
  thread_local std::vector<std::int32_t> scratch;
  box_counts_into(cfg, r, counts, scratch);
  f.d = cfg.dim();
  f.side = cfg.side();
  f.radius = r;
  const double volume = static_cast<double>(ipow(ball_side(r), cfg.dim()));
  f.values.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    f.values[i] = static_cast<double>(counts[i]) / volume;
}

Config bernoulli_product_init(const NoiseField& noise, std::int64_t n, double p,
                              int d, std::int64_t side) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("Bernoulli parameter outside [0,1]");
  Config cfg(d, side);
  for (std::int64_t i = 0; i < cfg.size(); ++i)
    cfg.set(i, noise.uniform_at(cfg.site_of(i), n) < p);
  return cfg;
}

Config translate(const Config& cfg, const Site& v) {
  Config out(cfg.dim(), cfg.side());
  for (std::int64_t i = 0; i < cfg.size(); ++i)
    if (cfg.get(i)) out.set_at(cfg.site_of(i) + v, true);
  return out;
}

Config full_config(int d, std::int64_t side) {
  Config cfg(d, side);
  for (std::int64_t i = 0; i < cfg.size(); ++i) cfg.set(i, true);
  return cfg;
}

Config comb_config(int d, std::int64_t side, std::int64_t spacing,
                   std::int64_t phase) {
  if (spacing < 1) throw DomainError("comb spacing must be positive");
  Config cfg(d, side);
  for (std::int64_t i = 0; i < cfg.size(); ++i) {
    const Site x = cfg.site_of(i);
    bool on = true;
    for (int a = 0; a < d; ++a) on = on && ((x[a] - phase) % spacing == 0);
    cfg.set(i, on);
  }
  return cfg;
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  auto u = static_cast<std::make_unsigned_t<T>>(value);
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<char>(u & 0xff);
    u = static_cast<decltype(u)>(u >> 8);
  }
  out.write(buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!in) throw std::runtime_error("snapshot truncated");
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) u = static_cast<decltype(u)>((u << 8) | buf[i]);
  return static_cast<T>(u);
}

}  // namespace

void write_snapshot(std::ostream& out, const Snapshot& snap) {
  const Config& cfg = snap.config;
  out.write("BARW", 4);
  put_le<std::uint16_t>(out, kSnapshotVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(cfg.dim()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(cfg.side()));
  put_le<std::int64_t>(out, snap.time);
  put_le<std::uint64_t>(out, snap.seed);
  put_le<std::uint64_t>(out, snap.stream_id);
  const std::int64_t side = cfg.side();
  const std::int64_t rows = cfg.size() / side;
  std::vector<char> row(static_cast<std::size_t>((side + 7) / 8));
  for (std::int64_t r = 0; r < rows; ++r) {
    std::fill(row.begin(), row.end(), 0);
    for (std::int64_t i = 0; i < side; ++i)
      if (cfg.get(r * side + i))
        row[static_cast<std::size_t>(i / 8)] |= static_cast<char>(1 << (i % 8));
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

Snapshot read_snapshot(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || std::string(magic.data(), 4) != "BARW")
    throw std::runtime_error("not a BARW snapshot");
  const auto version = get_le<std::uint16_t>(in);
  if (version != kSnapshotVersion)
    throw std::runtime_error("unsupported snapshot version " + std::to_string(version));
  const auto d = get_le<std::uint16_t>(in);
  const auto side = static_cast<std::int64_t>(get_le<std::uint64_t>(in));
  Snapshot snap;
  snap.time = get_le<std::int64_t>(in);
  snap.seed = get_le<std::uint64_t>(in);
  snap.stream_id = get_le<std::uint64_t>(in);
  snap.config = Config(d, side);
  const std::int64_t rows = snap.config.size() / side;
  std::vector<char> row(static_cast<std::size_t>((side + 7) / 8));
  for (std::int64_t r = 0; r < rows; ++r) {
    in.read(row.data(), static_cast<std::streamsize>(row.size()));
    if (!in) throw std::runtime_error("snapshot truncated");
    for (std::int64_t i = 0; i < side; ++i)
      snap.config.set(r * side + i, (row[static_cast<std::size_t>(i / 8)] >> (i % 8)) & 1);
  }
  return snap;
}

void write_snapshot_file(const std::string& path, const Snapshot& snap) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  write_snapshot(out, snap);
}

Snapshot read_snapshot_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_snapshot(in);
}

}  // namespace barw
