#include "bridgeforge/random.hpp"

#include <cmath>
#include <numbers>

namespace bridgeforge {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

inline std::uint64_t join(std::uint32_t hi, std::uint32_t lo) {
  return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter ctr, Key key) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view domain, std::uint64_t index) noexcept {
  // FNV-1a over the tag, then fold in seed and index.
  std::uint64_t tag = 0xCBF29CE484222325ull;
  for (const char ch : domain) {
    tag ^= static_cast<unsigned char>(ch);
    tag *= 0x100000001B3ull;
  }
  return mix64(mix64(seed ^ tag) + mix64(index));
}

double bits_to_open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

Philox4x32::Counter CounterRng::block(std::uint64_t step, std::uint64_t slot,
                                      std::uint32_t domain) const noexcept {
  const Philox4x32::Counter ctr{static_cast<std::uint32_t>(step),
                                static_cast<std::uint32_t>(slot) ^ (domain << 28),
                                static_cast<std::uint32_t>(stream_),
                                static_cast<std::uint32_t>(stream_ >> 32)};
  const Philox4x32::Key key{static_cast<std::uint32_t>(seed_),
                            static_cast<std::uint32_t>(seed_ >> 32)};
  return Philox4x32::generate(ctr, key);
}

double CounterRng::normal(std::uint64_t step, std::uint64_t component) const noexcept {
  const auto words = block(step, component / 2, 0);
  const double u1 = bits_to_open_unit(join(words[0], words[1]));
  const double u2 = bits_to_open_unit(join(words[2], words[3]));
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (component % 2 == 0) ? radius * std::cos(angle) : radius * std::sin(angle);
}

double CounterRng::uniform(std::uint64_t step, std::uint64_t component) const noexcept {
  const auto words = block(step, component / 2, 1);
  return (component % 2 == 0) ? bits_to_open_unit(join(words[0], words[1]))
                              : bits_to_open_unit(join(words[2], words[3]));
}

}  // namespace bridgeforge
