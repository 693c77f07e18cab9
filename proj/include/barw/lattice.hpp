#pragma once

#include "barw/noise.hpp"
#include "barw/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace barw {

/**
 * Occupancy configuration on the torus (Z / side Z)^d, bit-packed.
 *
 * Sites are addressed either by torus coordinates (wrapped on access) or by a
 * linear index with axis 0 varying fastest.
 */
class Config {
 public:
  Config() = default;
  Config(int d, std::int64_t side);

  int dim() const { return d_; }
  std::int64_t side() const { return side_; }
  std::int64_t size() const { return size_; }

  bool get(std::int64_t index) const {
    return (bits_[static_cast<std::size_t>(index >> 6)] >> (index & 63)) & 1U;
  }
  void set(std::int64_t index, bool value) {
    auto& w = bits_[static_cast<std::size_t>(index >> 6)];
    const std::uint64_t mask = std::uint64_t{1} << (index & 63);
    w = value ? (w | mask) : (w & ~mask);
  }
  bool at(const Site& x) const { return get(index_of(x)); }
  void set_at(const Site& x, bool value) { set(index_of(x), value); }

  std::int64_t wrap(std::int64_t c) const {
    c %= side_;
    return c < 0 ? c + side_ : c;
  }
  /// Linear index of a (possibly unwrapped) lattice point.
  std::int64_t index_of(const Site& x) const;
  Site site_of(std::int64_t index) const;

  std::int64_t count() const;
  double global_density() const {
    return static_cast<double>(count()) / static_cast<double>(size_);
  }
  bool empty() const { return count() == 0; }

  std::span<const std::uint64_t> words() const { return bits_; }
  std::span<std::uint64_t> words() { return bits_; }

  /// Smallest torus displacement from `from` to `to`, componentwise.
  Site torus_delta(const Site& from, const Site& to) const;

  friend bool operator==(const Config& a, const Config& b) = default;

 private:
  int d_ = 1;
  std::int64_t side_ = 0;
  std::int64_t size_ = 0;
  std::vector<std::uint64_t> bits_;
};

/// delta_r(x; cfg) for every site, stored as count / V_r^d.
struct DensityField {
  int d = 1;
  std::int64_t side = 0;
  std::int64_t radius = 0;
  std::vector<double> values;

  double operator[](std::int64_t index) const {
    return values[static_cast<std::size_t>(index)];
  }
};

/// Throws BallTooLarge unless 2r + 1 <= side.
void require_ball_fits(std::int64_t r, std::int64_t side);

/// Occupied-site count in B_r(x) for every x, by d sliding-window passes.
std::vector<std::int32_t> box_counts(const Config& cfg, std::int64_t r);

/// Same counts written to `out`; `scratch` is a work buffer. Both keep their
/// capacity between calls, which avoids re-faulting large pages every step.
void box_counts_into(const Config& cfg, std::int64_t r, std::vector<std::int32_t>& out,
                     std::vector<std::int32_t>& scratch);

/// Single-site density by direct summation over the ball.
double local_density(const Config& cfg, const Site& x, std::int64_t r);

DensityField density_field(const Config& cfg, std::int64_t r);
void density_field_into(const Config& cfg, std::int64_t r, DensityField& out);

/// i.i.d. Bernoulli(p) field: site x is occupied iff U(x, n) < p.
Config bernoulli_product_init(const NoiseField& noise, std::int64_t n, double p,
                              int d, std::int64_t side);

/// cfg translated by v: out(x + v) = cfg(x).
Config translate(const Config& cfg, const Site& v);

/// All-ones configuration.
Config full_config(int d, std::int64_t side);

/// Occupy every site whose coordinates are all multiples of `spacing` after
/// shifting by `phase` (an evenly spaced comb).
Config comb_config(int d, std::int64_t side, std::int64_t spacing,
                   std::int64_t phase = 0);

// Snapshot files: "BARW" magic, u16 version, u16 d, u64 side, i64 time,
// u64 seed, u64 stream_id, then side^(d-1) rows of ceil(side/8) bytes
// (bit i of byte j is site 8j+i along axis 0). All integers little-endian.
inline constexpr std::uint16_t kSnapshotVersion = 1;

struct Snapshot {
  Config config;
  std::int64_t time = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

void write_snapshot(std::ostream& out, const Snapshot& snap);
Snapshot read_snapshot(std::istream& in);
void write_snapshot_file(const std::string& path, const Snapshot& snap);
Snapshot read_snapshot_file(const std::string& path);

}  // namespace barw
