#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace bridgeforge {

/// Philox4x32-10 counter-based generator. Output is a pure function of
/// (counter, key), so any stream position can be evaluated independently.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  [[nodiscard]] static Counter generate(Counter counter, Key key) noexcept;
};

/// 64-bit finalizer (SplitMix64). Used to derive independent seeds.
[[nodiscard]] std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives a child seed from a parent seed, a domain tag and an index.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t seed, std::string_view domain,
                                        std::uint64_t index = 0) noexcept;

/// Maps 64 random bits to a double in the open interval (0, 1).
[[nodiscard]] double bits_to_open_unit(std::uint64_t bits) noexcept;

/// Random stream keyed by (seed, stream index). Draws are addressed by an
/// explicit (step, slot) position, never by call order, which keeps the result
/// independent of how work is scheduled.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept : seed_(seed), stream_(stream) {}

  /// Standard normal draw at (step, component).
  [[nodiscard]] double normal(std::uint64_t step, std::uint64_t component) const noexcept;

  /// Uniform draw on (0,1) at (step, component).
  [[nodiscard]] double uniform(std::uint64_t step, std::uint64_t component) const noexcept;

 private:
  [[nodiscard]] Philox4x32::Counter block(std::uint64_t step, std::uint64_t slot,
                                          std::uint32_t domain) const noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace bridgeforge
