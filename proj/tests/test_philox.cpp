#include <doctest.h>

#include <cmath>
#include <set>

#include "ddbh/philox.hpp"
#include "ddbh/twa.hpp"

using namespace ddbh;

TEST_CASE("Philox4x32-10 known-answer vectors") {
  // Random123 kat_vectors
  const Philox4x32 zero(0);
  CHECK(zero({0, 0, 0, 0}) == Philox4x32::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  const Philox4x32 ones(0xffffffffffffffffULL);
  CHECK(ones({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}) ==
        Philox4x32::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
}

TEST_CASE("open_unit stays inside (0, 1)") {
  CHECK(open_unit(0, 0) > 0.0);
  CHECK(open_unit(0xffffffffu, 0xffffffffu) < 1.0);
}

TEST_CASE("noise counters are distinct across trajectory, step, site and stream") {
  std::set<Philox4x32::Block> seen;
  for (std::uint64_t t = 0; t < 4; ++t)
    for (std::uint64_t s = 0; s < 4; ++s)
      for (std::uint64_t site = 0; site < 4; ++site)
        for (auto stream : {NoiseStream::dynamics, NoiseStream::initial_state})
          seen.insert(noise_counter(t, s + (std::uint64_t{1} << 33) * (s % 2), site, stream));
  CHECK(seen.size() == 4 * 4 * 4 * 2);
}

TEST_CASE("NoiseSource normals have unit variance per component and no pseudo-variance") {
  const NoiseSource noise(99, 5);
  const int n = 200000;
  double m_re = 0, m_im = 0, v_re = 0, v_im = 0, cross = 0, m4 = 0;
  for (int i = 0; i < n; ++i) {
    const complex z = noise.normal(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(i % 7));
    m_re += z.real();
    m_im += z.imag();
    v_re += z.real() * z.real();
    v_im += z.imag() * z.imag();
    cross += z.real() * z.imag();
    m4 += std::pow(z.real(), 4);
  }
  const double se2 = std::sqrt(2.0 / n);
  CHECK(std::abs(m_re / n) < 4 / std::sqrt(n));
  CHECK(std::abs(m_im / n) < 4 / std::sqrt(n));
  CHECK(std::abs(v_re / n - 1) < 4 * se2);
  CHECK(std::abs(v_im / n - 1) < 4 * se2);
  CHECK(std::abs(cross / n) < 4 / std::sqrt(n));
  CHECK(std::abs(m4 / n - 3) < 4 * std::sqrt(96.0 / n));
}

TEST_CASE("NoiseSource is a pure function of (seed, trajectory, step, site, stream)") {
  const NoiseSource a(1, 2);
  const NoiseSource b(1, 2);
  CHECK(a.normal(10, 3) == b.normal(10, 3));
  CHECK(a.normal(10, 3) != a.normal(11, 3));
  CHECK(a.normal(10, 3) != a.normal(10, 4));
  CHECK(a.normal(10, 3) != NoiseSource(1, 3).normal(10, 3));
  CHECK(a.normal(10, 3) != NoiseSource(2, 2).normal(10, 3));
  CHECK(a.normal(0, 3) != a.normal(0, 3, NoiseStream::initial_state));
}
