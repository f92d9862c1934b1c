#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>

namespace ddbh {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Stateless:
/// every output block is a pure function of (key, counter), so any
/// trajectory/step/site can be regenerated without touching shared state.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Block operator()(Block counter) const {
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      counter = single_round(counter, key);
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return counter;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static Block single_round(const Block& c, const std::array<std::uint32_t, 2>& k) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
            static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
  }

  std::array<std::uint32_t, 2> key_;
};

/// Uniform double in the open interval (0, 1) from 64 random bits (52 used,
/// so the half-offset top value stays below 1).
inline double open_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (std::uint64_t{hi} << 32 | lo) >> 12;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

/// Complex standard normal pair xi1 + i xi2 (each component unit variance)
/// from one Philox block via Box-Muller.
inline std::complex<double> standard_normal_pair(const Philox4x32::Block& b) {
  const double radius = std::sqrt(-2.0 * std::log(open_unit(b[0], b[1])));
  const double angle = 2.0 * std::numbers::pi * open_unit(b[2], b[3]);
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

/// Counter layout shared by the engine: (site, step low word, step high
/// bits | stream tag, trajectory).
enum class NoiseStream : std::uint32_t { dynamics = 0, initial_state = 1 };

inline Philox4x32::Block noise_counter(std::uint64_t trajectory, std::uint64_t step, std::uint64_t site,
                                       NoiseStream stream) {
  return {static_cast<std::uint32_t>(site), static_cast<std::uint32_t>(step),
          static_cast<std::uint32_t>((step >> 32) & 0x00FFFFFFu) | (static_cast<std::uint32_t>(stream) << 24),
          static_cast<std::uint32_t>(trajectory)};
}

}  // namespace ddbh
