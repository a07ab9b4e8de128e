#pragma once

#include <cmath>
#include <cstdint>

namespace ddpc {

// Counter-based generator: each output is a hash of (seed, stream, counter),
// so sequences are reproducible across platforms and independent per stream.
class RngState {
 public:
  RngState(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_(stream_id), counter_(0) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  // Derive an independent sub-stream; does not advance this state.
  RngState substream(std::uint64_t tag) const {
    return RngState(seed_, mix(mix(stream_ ^ 0x9e3779b97f4a7c15ULL, tag), 0));
  }

  std::uint64_t next_u64() {
    std::uint64_t v = mix(mix(seed_, stream_), counter_);
    ++counter_;
    return v;
  }

  // Uniform on (0, 1); never returns 0 so log() below is safe.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // One standard normal per call via Box-Muller (no cached spare, so the
  // stream position is a pure function of the number of calls).
  double next_gaussian() {
    double u1 = next_uniform();
    double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over a combined word
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_;
};

}  // namespace ddpc
