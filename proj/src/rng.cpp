#include "kuq/rng.hpp"

namespace kuq {

std::uint64_t stream_key(const StreamId& id) noexcept {
  // Chain every field through the finalizer so that ids differing in any
  // single field land on unrelated keys.
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  auto absorb = [&h](std::uint64_t x) { h = CounterRng::mix(h ^ (x + 0x9e3779b97f4a7c15ULL)); };
  absorb(id.master_seed);
  absorb(static_cast<std::uint64_t>(id.purpose));
  absorb(id.level);
  absorb(id.index);
  absorb(id.resolution);
  absorb(id.replication);
  return h;
}

}  // namespace kuq
