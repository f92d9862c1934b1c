#include <doctest.h>

#include <cmath>
#include <random>

#include "ddbh/error.hpp"
#include "ddbh/lindblad.hpp"
#include "ddbh/meanfield.hpp"

using namespace ddbh;

namespace {

complex entry(const LocalOperator& op, std::size_t r, std::size_t c) {
  complex v{};
  for (const auto& e : op.entries) {
    if (e.row == r && e.col == c) v += e.value;
  }
  return v;
}

}  // namespace

TEST_CASE("Fock basis indexing is little-endian") {
  const FockBasis b(3, 4);
  CHECK(b.dimension() == 125);
  CHECK(b.stride(0) == 1);
  CHECK(b.stride(2) == 25);
  const std::size_t index = 2 + 3 * 5 + 1 * 25;
  CHECK(b.occupation(index, 0) == 2);
  CHECK(b.occupation(index, 1) == 3);
  CHECK(b.occupation(index, 2) == 1);
  CHECK_THROWS_AS(FockBasis(2, 3, {complex(1, 0)}), UsageError);
}

TEST_CASE("site operators in the plain and displaced bases") {
  const FockBasis plain(1, 6);
  const auto ops = site_operators(plain, 0);
  for (std::size_t m = 1; m <= 6; ++m) CHECK(std::abs(entry(ops.a, m - 1, m) - std::sqrt(double(m))) < 1e-15);
  for (std::size_t m = 0; m <= 6; ++m) {
    CHECK(std::abs(entry(ops.number, m, m) - double(m)) < 1e-12);
    CHECK(std::abs(entry(ops.pair, m, m) - double(m) * (m > 0 ? m - 1.0 : 0.0)) < 1e-12);
  }
  const complex beta(1.5, -0.5);
  const FockBasis shifted(1, 6, {beta});
  const auto d = site_operators(shifted, 0);
  CHECK(std::abs(entry(d.a, 0, 0) - beta) < 1e-15);
  CHECK(std::abs(entry(d.number, 0, 0) - std::norm(beta)) < 1e-12);
  CHECK(std::abs(entry(d.excitation, 3, 3) - 3.0) < 1e-15);
}

TEST_CASE("evolution preserves trace and Hermiticity") {
  const Lattice lat = build_lattice(LatticeKind::dimer, 0);
  const ModelParams p = lat.params(0.1, 0.3, 1.2, 0.9);
  const Liouvillian l(p, lat, FockBasis(2, 7));
  EvolveOptions opt;
  opt.record_every = 50;
  double worst_herm = 0.0;
  double worst_trace = 0.0;
  opt.observer = [&](const DensityMatrix& rho) {
    worst_herm = std::max(worst_herm, rho.hermiticity_error());
    worst_trace = std::max(worst_trace, std::abs(rho.trace() - 1.0));
  };
  const auto r = evolve(l, DensityMatrix::ground(l.basis()), 5.0, opt);
  CHECK(worst_trace < 1e-8);
  CHECK(worst_herm < 1e-10);
  CHECK(r.max_trace_deviation < 1e-8);
  CHECK(r.max_hermiticity_error < 1e-10);
  CHECK(r.rho.min_eigenvalue() > -1e-8);
}

TEST_CASE("single Fock boson decays at rate gamma") {
  const Lattice s = build_lattice(LatticeKind::site, 0);
  const ModelParams p = s.params(0.0, 0.0, 0.0, 0.0);
  const Liouvillian l(p, s, FockBasis(1, 3));
  EvolveOptions opt;
  opt.dt = 1e-3;
  opt.record_every = 100;
  const auto r = evolve(l, DensityMatrix::basis_state(l.basis(), {1}), 4.0, opt);
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    CHECK(r.population[k] == doctest::Approx(std::exp(-r.times[k])).epsilon(1e-9));
  }
}

TEST_CASE("linear cavity steady state is the analytic coherent state") {
  const Lattice s = build_lattice(LatticeKind::site, 0);
  const ModelParams p = s.params(0.1, 0.0, 1.0, 0.0);
  const double expect = 1.0 / (0.01 + 0.25);
  SUBCASE("plain basis") {
    const Liouvillian l(p, s, FockBasis(1, 40));
    const auto ss = steady_state(l);
    CHECK(std::abs(expectation(ss.rho, ExactObservable::population) - expect) < 1e-6);
    CHECK(std::abs(expectation(ss.rho, ExactObservable::g2) - 1.0) < 1e-6);
    CHECK(ss.residual < 1e-9);
  }
  SUBCASE("displaced basis") {
    const complex alpha = complex(0, 1.0) / complex(-0.5, 0.1);
    const Liouvillian l(p, s, FockBasis(1, 4, {alpha}));
    const auto ss = steady_state(l);
    CHECK(std::abs(expectation(ss.rho, ExactObservable::population) - expect) < 1e-9);
    CHECK(mean_excitation(ss.rho) < 1e-9);
  }
}

TEST_CASE("RK4 steady state agrees with the sparse null-space solve") {
  const Lattice lat = build_lattice(LatticeKind::dimer, 0);
  const ModelParams p = lat.params(0.1, 0.2, 0.6, 0.9);
  const Liouvillian l(p, lat, FockBasis(2, 5));
  const auto relaxed = steady_state(l);
  const auto direct = steady_state_nullspace(l);
  CHECK(std::abs(direct.trace() - 1.0) < 1e-10);
  for (auto obs : {ExactObservable::population, ExactObservable::g2, ExactObservable::parity}) {
    CHECK(expectation(relaxed.rho, obs) == doctest::Approx(expectation(direct, obs)).epsilon(1e-7));
  }
  CHECK_THROWS_AS(steady_state_nullspace(l, 100), UsageError);
}

TEST_CASE("Hermitian fast path equals the general generator") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  const Lattice ring = build_lattice(LatticeKind::ring, 3);
  const ModelParams p = ring.params(0.1, 0.2, 0.7, 0.9);
  for (bool displaced : {false, true}) {
    std::vector<complex> beta;
    if (displaced) beta.assign(3, complex(0.4, -0.9));
    const Liouvillian l(p, ring, FockBasis(3, 3, beta));
    const std::size_t d = l.basis().dimension();
    std::vector<complex> rho(d * d);
    for (std::size_t r = 0; r < d; ++r) {
      rho[r * d + r] = g(rng);
      for (std::size_t c = r + 1; c < d; ++c) {
        rho[r * d + c] = complex(g(rng), g(rng));
        rho[c * d + r] = std::conj(rho[r * d + c]);
      }
    }
    std::vector<complex> general, fast;
    l.apply(rho, general);
    l.apply_hermitian(rho, fast);
    double diff = 0.0;
    for (std::size_t i = 0; i < d * d; ++i) diff = std::max(diff, std::abs(general[i] - fast[i]));
    CHECK(diff < 1e-12);
  }
}

TEST_CASE("plain and displaced bases agree after cutoff scans") {
  const Lattice s = build_lattice(LatticeKind::site, 0);
  const ModelParams p = s.params(0.1, 0.1, 2.0, 0.0);
  CutoffScan plain;
  const auto a = converged_steady_state(p, s, plain);
  CutoffScan shifted = plain;
  shifted.displaced = true;
  shifted.start = 6;
  const auto b = converged_steady_state(p, s, shifted);
  CHECK(a.population == doctest::Approx(b.population).epsilon(2e-6));
  CHECK(b.cutoffs.back() < a.cutoffs.back());
}

TEST_CASE("plain and displaced bases agree on a weakly driven dimer") {
  const Lattice lat = build_lattice(LatticeKind::dimer, 0);
  const ModelParams p = lat.params(0.1, 0.2, 0.6, 0.9);
  const auto plain = steady_state(Liouvillian(p, lat, FockBasis(2, 7)));
  complex alpha{};
  for (const auto& b : meanfield_roots(p)) alpha = b.alpha;
  const auto shifted = steady_state(Liouvillian(p, lat, FockBasis(2, 7, {alpha, alpha})));
  CHECK(expectation(plain.rho, ExactObservable::population) ==
        doctest::Approx(expectation(shifted.rho, ExactObservable::population)).epsilon(1e-5));
}

TEST_CASE("cutoff scan converges at U = 0.1, F <= 2") {
  const Lattice s = build_lattice(LatticeKind::site, 0);
  for (double f : {0.5, 1.5, 2.0}) {
    const ModelParams p = s.params(0.1, 0.1, f, 0.0);
    CutoffScan scan;
    const auto r = converged_steady_state(p, s, scan);
    const std::size_t n = r.populations.size();
    REQUIRE(n >= 2);
    CHECK(std::abs(r.populations[n - 1] - r.populations[n - 2]) < 1e-6 * r.population);
    // one more increment changes nothing either
    const Liouvillian bigger(p, s, FockBasis(1, r.cutoffs.back() + 5));
    const auto ss = steady_state(bigger);
    CHECK(std::abs(expectation(ss.rho, ExactObservable::population) - r.population) < 1e-6 * r.population);
  }
}

TEST_CASE("dimension cap and lattice mismatch are usage errors") {
  const Lattice lat = build_lattice(LatticeKind::ring, 4);
  const ModelParams p = lat.params(0.1, 0.1, 1.0, 0.9);
  CHECK_THROWS_AS(Liouvillian(p, lat, FockBasis(4, 10), 4096), UsageError);
  CHECK_THROWS_AS(Liouvillian(p, lat, FockBasis(3, 3)), UsageError);
}

TEST_CASE("truncated state near the cutoff is rejected") {
  const Lattice s = build_lattice(LatticeKind::site, 0);
  const ModelParams p = s.params(0.1, 0.0, 1.0, 0.0);
  const Liouvillian l(p, s, FockBasis(1, 4));
  const auto ss = steady_state(l);
  CHECK_THROWS_AS(check_cutoff(ss.rho), NumericalError);
}

TEST_CASE("embedding keeps the state and pads with zeros") {
  const FockBasis b(2, 3);
  DensityMatrix rho = DensityMatrix::basis_state(b, {2, 1});
  const auto big = rho.embed(5);
  CHECK(big.dimension() == 36);
  CHECK(std::abs(big.trace() - 1.0) < 1e-15);
  const std::size_t idx = 2 + 1 * 6;
  CHECK(big(idx, idx) == complex(1.0, 0.0));
}
