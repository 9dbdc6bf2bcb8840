#pragma once

// Counter-based random streams: every draw is a pure function of
// (seed, replication, stream kind, stream index, counter), so replications
// and customers can be generated in any order with identical results.

#include <cmath>
#include <cstdint>

namespace r0sys::rng {

inline constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum class StreamKind : std::uint64_t {
  Arrival = 1,
  Service = 2,
  Threshold = 3,
  Infectious = 4,
};

constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t replication, StreamKind kind,
                                   std::uint64_t index) {
  std::uint64_t k = mix64(seed + kGamma);
  k = mix64(k ^ (replication + 1) * kGamma);
  k = mix64(k ^ static_cast<std::uint64_t>(kind) * 0xd1b54a32d192ed03ULL);
  return mix64(k ^ (index + 1) * 0xda942042e4dd58b5ULL);
}

/// 53-bit uniform on the open interval (0, 1).
constexpr double to_unit(std::uint64_t x) {
  return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

class Stream {
 public:
  constexpr Stream() = default;
  constexpr explicit Stream(std::uint64_t key) : key_(key) {}
  Stream(std::uint64_t seed, std::uint64_t replication, StreamKind kind, std::uint64_t index)
      : key_(stream_key(seed, replication, kind, index)) {}

  /// Random access: the n-th raw output, independent of the cursor.
  constexpr std::uint64_t at(std::uint64_t n) const { return mix64(key_ + (n + 1) * kGamma); }
  double uniform_at(std::uint64_t n) const { return to_unit(at(n)); }
  double exponential_at(std::uint64_t n, double rate) const { return -std::log(uniform_at(n)) / rate; }

  std::uint64_t next() { return at(counter_++); }
  double uniform() { return to_unit(next()); }
  double exponential(double rate) { return -std::log(uniform()) / rate; }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace r0sys::rng
