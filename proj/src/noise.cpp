#include "barw/noise.hpp"

namespace barw {

NoiseField::NoiseField(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  key_ = detail::fmix64(detail::fmix64(seed ^ 0x243f6a8885a308d3ULL) ^
                        (stream_id * 0x13198a2e03707344ULL + 0xa4093822299f31d0ULL));
}

double NoiseField::uniform_at(const Site& x, std::int64_t n) const {
  if (plants_) {
    if (const auto* p = planted_at(x, n)) return p->value;
  }
  return row_uniform(row_key(x[1], x[2], n), x[0]);
}

NoiseField NoiseField::with_stream(std::uint64_t stream_id) const {
  NoiseField out(seed_, stream_id);
  out.plants_ = plants_;
  return out;
}

NoiseField NoiseField::with_planted(const PlantedNoise& plant) const {
  NoiseField out = *this;
  auto list = plants_ ? std::make_shared<std::vector<PlantedNoise>>(*plants_)
                      : std::make_shared<std::vector<PlantedNoise>>();
  list->push_back(plant);
  out.plants_ = std::move(list);
  return out;
}

const PlantedNoise* NoiseField::planted_at(const Site& x, std::int64_t n) const {
  for (const auto& p : *plants_) {
    if (p.time != n) continue;
    if ((x.array() >= p.lo.array()).all() && (x.array() <= p.hi.array()).all())
      return &p;
  }
  return nullptr;
}

}  // namespace barw
