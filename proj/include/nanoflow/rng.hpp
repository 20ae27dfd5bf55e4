#pragma once

#include <array>
#include <cstdint>

namespace nanoflow {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A stream is
/// identified by (key, stream id); draws are a pure function of
/// (key, stream id, draw index), so any stream can be reproduced without
/// replaying the others.
class RandomStream {
 public:
  RandomStream(std::uint64_t key, std::uint64_t stream_id);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1) with 53-bit resolution.
  double uniform();
  /// Standard normal via Box-Muller.
  double normal();

  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> counter,
                                             std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer over (seed, index): decorrelated sub-seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace nanoflow
