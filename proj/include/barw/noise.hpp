#pragma once

#include "barw/types.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace barw {

namespace detail {

// murmur3 finaliser; bijective on 64-bit words
constexpr std::uint64_t fmix64(std::uint64_t h) {
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return h;
}

constexpr double to_unit(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Box region of sites at one time index whose uniforms are pinned to a value.
/// Used to plant adversarial noise in block experiments.
struct PlantedNoise {
  Site lo = Site::Zero();
  Site hi = Site::Zero();  // inclusive, torus coordinates
  std::int64_t time = 0;
  double value = 1.0;
};

/**
 * Counter-based driving noise U(x, n).
 *
 * The value at a space-time point is a keyed hash of (seed, stream_id, x, n),
 * so the whole field on Z^d x Z exists implicitly and can be replayed in any
 * order. Values lie in [0, 1) with 53 bits of resolution.
 */
class NoiseField {
 public:
  NoiseField() = default;
  NoiseField(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  double uniform_at(const Site& x, std::int64_t n) const;

  /// Same field, different stream; used to hand disjoint noise to workers.
  NoiseField with_stream(std::uint64_t stream_id) const;

  /// Copy of this field with a planted box of fixed values.
  NoiseField with_planted(const PlantedNoise& plant) const;
  bool has_plants() const { return plants_ && !plants_->empty(); }

  /// Hash state shared by all sites of one row (fixed x1, x2, n). The value at
  /// x0 is `row_uniform(row_key(...), x0)`; uniform_at uses the same path.
  std::uint64_t row_key(std::int64_t x1, std::int64_t x2,
                        std::int64_t n) const {
    std::uint64_t h = key_;
    h = detail::fmix64(h ^ (static_cast<std::uint64_t>(n) * 0x9e3779b97f4a7c15ULL));
    h = detail::fmix64(h ^ (static_cast<std::uint64_t>(x2) * 0xd1b54a32d192ed03ULL));
    h = detail::fmix64(h ^ (static_cast<std::uint64_t>(x1) * 0xabc98388fb8fac03ULL));
    return h;
  }

  static double row_uniform(std::uint64_t row, std::int64_t x0) {
    std::uint64_t h = row + static_cast<std::uint64_t>(x0) * 0x8cb92ba72f3d8dd7ULL;
    return detail::to_unit(detail::fmix64(h));
  }

  friend bool operator==(const NoiseField& a, const NoiseField& b) {
    return a.seed_ == b.seed_ && a.stream_id_ == b.stream_id_ &&
           a.plants_ == b.plants_;
  }

 private:
  const PlantedNoise* planted_at(const Site& x, std::int64_t n) const;

  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t key_ = 0;
  std::shared_ptr<const std::vector<PlantedNoise>> plants_;
};

/// Stream id for sub-experiment `index` of kind `tag` under a base stream.
/// Distinct (tag, index) pairs give unrelated streams.
constexpr std::uint64_t derive_stream(std::uint64_t base, std::uint64_t tag,
                                      std::uint64_t index) {
  return detail::fmix64(detail::fmix64(base ^ (tag * 0x9e3779b97f4a7c15ULL)) +
                        index * 0xbf58476d1ce4e5b9ULL + 1);
}

}  // namespace barw
