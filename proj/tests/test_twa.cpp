#include <doctest.h>

#include <cmath>
#include <cstring>

#include "ddbh/error.hpp"
#include "ddbh/meanfield.hpp"
#include "ddbh/observables.hpp"
#include "ddbh/twa.hpp"

using namespace ddbh;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("Wigner vacuum moments") {
  const Lattice s = build_lattice(LatticeKind::site, 0);
  const int n = 100000;
  double m = 0, m_sq = 0;
  complex pseudo{};
  for (int i = 0; i < n; ++i) {
    const FieldState st = sample_initial(InitialState::vacuum(), s, NoiseSource(7, i));
    const double p = std::norm(st.amplitudes[0]);
    m += p;
    m_sq += p * p;
    pseudo += st.amplitudes[0] * st.amplitudes[0];
  }
  m /= n;
  const double se = std::sqrt((m_sq / n - m * m) / n);
  CHECK(std::abs(m - 0.5) < 3 * se);
  CHECK(std::abs(pseudo / static_cast<double>(n)) < 0.01);
}

TEST_CASE("coherent initial state adds |a0|^2") {
  const Lattice s = build_lattice(LatticeKind::site, 0);
  const int n = 100000;
  double m = 0, m_sq = 0;
  for (int i = 0; i < n; ++i) {
    const double p = std::norm(sample_initial(InitialState::coherent({2, 0}), s, NoiseSource(8, i)).amplitudes[0]);
    m += p;
    m_sq += p * p;
  }
  m /= n;
  const double se = std::sqrt((m_sq / n - m * m) / n);
  CHECK(std::abs(m - 4.5) < 3 * se);
}

TEST_CASE("noise increment Re(dW) has variance dt/2") {
  // With zero drift (delta = U = F = 0, gamma kept) over one step from a = 0,
  // Euler-Maruyama gives a = sqrt(gamma/2) dW.
  const Lattice s = build_lattice(LatticeKind::site, 0);
  ModelParams p = s.params(0, 0, 0, 0);
  const double dt = 0.01;
  const int n = 100000;
  double v = 0, v_sq = 0, re_im = 0;
  for (int i = 0; i < n; ++i) {
    const FieldState next = step(FieldState{{0.0}, 0.0}, p, s, dt, NoiseSource(9, 0), i, Scheme::euler_maruyama);
    const complex dw = next.amplitudes[0] / std::sqrt(0.5 * p.gamma);
    v += dw.real() * dw.real();
    v_sq += std::pow(dw.real(), 4);
    re_im += dw.real() * dw.imag();
  }
  v /= n;
  const double se = std::sqrt((v_sq / n - v * v) / n);
  CHECK(std::abs(v - dt / 2) < 3 * se);
  CHECK(std::abs(re_im / n) < 4 * dt / 2 / std::sqrt(n));
}

TEST_CASE("noise-free linear damping: |a(t)|^2 = exp(-gamma t)") {
  const Lattice s = build_lattice(LatticeKind::site, 0);
  const ModelParams p = s.params(0, 0, 0, 0);
  EngineConfig c;
  c.dt = 1e-3;
  c.t_end = 3.0;
  c.record_stride = 100;
  c.dynamics = Dynamics::gross_pitaevskii;
  c.initial = InitialState::coherent({1, 0});
  const auto rec = run_trajectory(p, s, c, 0);
  for (std::size_t k = 0; k < rec.times.size(); ++k) {
    // Heun: global relative error ~ t dt^2 / 3
    CHECK(rec.site_avg_population_w[k] == doctest::Approx(std::exp(-rec.times[k])).epsilon(2e-6));
  }
}

TEST_CASE("noise-free dynamics stays on a stable mean-field branch") {
  const Lattice r = build_lattice(LatticeKind::ring, 4);
  const ModelParams p = r.params(0.1, 0.1, 1.5695, 0.9);
  for (const auto& b : meanfield_roots(p)) {
    if (!b.stable) continue;
    EngineConfig c;
    c.t_end = 50.0;
    c.record_stride = 500;
    c.dynamics = Dynamics::gross_pitaevskii;
    c.initial = InitialState::coherent(b.alpha);
    for (auto scheme : {Scheme::heun, Scheme::euler_maruyama}) {
      c.scheme = scheme;
      const auto rec = run_trajectory(p, r, c, 0);
      for (const complex& a : rec.final_state.amplitudes) CHECK(std::abs(a - b.alpha) < 1e-6);
    }
  }
}

TEST_CASE("single trajectories are bit-identical for the same seed") {
  const Lattice r = build_lattice(LatticeKind::ring, 5);
  const ModelParams p = r.params(0.1, 0.1, 1.5, 0.9);
  EngineConfig c;
  c.t_end = 5;
  c.seed = 1234;
  const auto a = run_trajectory(p, r, c, 3);
  const auto b = run_trajectory(p, r, c, 3);
  CHECK(same_bits(a.site_avg_population_w, b.site_avg_population_w));
  CHECK(same_bits(a.site_population_w, b.site_population_w));
  const auto other = run_trajectory(p, r, c, 4);
  CHECK_FALSE(same_bits(a.site_avg_population_w, other.site_avg_population_w));
}

TEST_CASE("ensembles do not depend on the worker count") {
  const Lattice t = build_lattice(LatticeKind::torus, 3);
  const ModelParams p = t.params(0.1, 0.1, 1.55, 0.9);
  EngineConfig c;
  c.t_end = 4;
  c.n_traj = 150;
  c.groups = 16;
  c.seed = 77;
  c.keep_series = true;
  c.threads = 1;
  const auto one = run_ensemble(p, t, c);
  c.threads = 4;
  const auto four = run_ensemble(p, t, c);
  CHECK(same_bits(one.moments.m1, four.moments.m1));
  CHECK(same_bits(one.moments.m2, four.moments.m2));
  CHECK(same_bits(one.moments.k0, four.moments.k0));
  CHECK(same_bits(one.summary.std_error, four.summary.std_error));
  REQUIRE(one.records.size() == four.records.size());
  for (std::size_t i = 0; i < one.records.size(); ++i) {
    CHECK(one.records[i].index == four.records[i].index);
    CHECK(same_bits(one.records[i].site_avg_population_w, four.records[i].site_avg_population_w));
  }
}

TEST_CASE("recorded times are evenly spaced") {
  EngineConfig c;
  c.dt = 0.02;
  c.t_end = 1.0;
  c.record_stride = 5;
  const auto t = c.record_times();
  REQUIRE(t.size() == 11);
  for (std::size_t k = 1; k < t.size(); ++k) CHECK(t[k] - t[k - 1] == doctest::Approx(0.1));
}

TEST_CASE("undriven vacuum is stationary") {
  const Lattice r = build_lattice(LatticeKind::ring, 3);
  const ModelParams p = r.params(0.0, 0.0, 0.0, 0.9);
  EngineConfig c;
  c.t_end = 5;
  c.n_traj = 4000;
  c.seed = 5;
  const auto e = run_ensemble(p, r, c);
  for (std::size_t k = 0; k < e.times.size(); ++k) {
    CHECK(std::abs(e.summary.mean[k] - 0.5) < 3.5 * e.summary.std_error[k]);
  }
}

TEST_CASE("linear cavity reaches F^2 / (delta^2 + gamma^2 / 4)") {
  const Lattice s = build_lattice(LatticeKind::site, 0);
  const ModelParams p = s.params(0.1, 0.0, 1.0, 0.0);
  EngineConfig c;
  c.t_end = 20;
  c.n_traj = 20000;
  c.seed = 21;
  const auto e = run_ensemble(p, s, c);
  const auto ss = steady_population(e, 10.0);
  CHECK(std::abs(ss.value - 1.0 / 0.26) < 3 * ss.std_error);
}

TEST_CASE("Euler-Maruyama and Heun agree within statistical plus O(dt) error") {
  const Lattice r = build_lattice(LatticeKind::ring, 4);
  const ModelParams p = r.params(0.1, 0.1, 1.0, 0.9);
  EngineConfig c;
  c.t_end = 20;
  c.n_traj = 2000;
  c.seed = 6;
  c.dt = 0.005;
  const auto heun = steady_population(run_ensemble(p, r, c), 10.0);
  c.scheme = Scheme::euler_maruyama;
  const auto em = steady_population(run_ensemble(p, r, c), 10.0);
  // Same noise, so the statistical parts are strongly correlated; the
  // bound is the uncorrelated combination plus an O(dt) allowance.
  CHECK(std::abs(heun.value - em.value) < 3 * std::hypot(heun.std_error, em.std_error) + 0.02 * heun.value);
}

TEST_CASE("translation invariance of per-site populations") {
  const Lattice t = build_lattice(LatticeKind::torus, 3);
  const ModelParams p = t.params(0.1, 0.1, 1.2, 0.9);
  EngineConfig c;
  c.t_end = 10;
  c.n_traj = 2000;
  c.seed = 10;
  c.site_resolved = true;
  const auto e = run_ensemble(p, t, c);
  const std::size_t k = e.times.size() - 1;
  const std::size_t n = e.n_sites;
  const double mean = e.summary.mean[k];
  for (std::size_t j = 0; j < n; ++j) {
    const double site_mean = e.moments.site[k * n + j] / e.moments.count;
    // per-site fluctuations exceed those of the site average; bound with sqrt(N)
    CHECK(std::abs(site_mean - mean) < 3 * std::sqrt(static_cast<double>(n)) * e.summary.std_error[k]);
  }
}

TEST_CASE("divergent runs are rejected or reported") {
  const Lattice s = build_lattice(LatticeKind::site, 0);
  const ModelParams p = s.params(0.0, 50.0, 0.0, 0.0);
  EngineConfig c;
  c.dt = 0.5;
  c.t_end = 50;
  c.n_traj = 20;
  c.initial = InitialState::coherent({3, 0});
  CHECK_THROWS_AS(run_ensemble(p, s, c), NumericalError);
  CHECK_THROWS_AS(step(FieldState{{complex(1e300, 1e300)}, 0.0}, p, s, 0.5, NoiseSource(0, 0), 0, Scheme::heun),
                  NumericalError);
}

TEST_CASE("config validation") {
  EngineConfig c;
  c.dt = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = EngineConfig{};
  c.t_end = c.dt / 2;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = EngineConfig{};
  c.n_traj = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  CHECK(scheme_from_string("euler_maruyama") == Scheme::euler_maruyama);
  CHECK_THROWS_AS(scheme_from_string("rk4"), UsageError);
}

TEST_CASE("noise substeps reproduce the fine-grid Brownian path") {
  // U = 0: the SDE is linear, so coarse and fine runs on one Brownian path
  // differ only by the O(dt) strong error of the scheme.
  const Lattice r = build_lattice(LatticeKind::ring, 3);
  const ModelParams p = r.params(0.1, 0.0, 1.0, 0.9);
  EngineConfig fine;
  fine.dt = 0.005;
  fine.t_end = 5.0;
  fine.record_stride = 100;
  fine.seed = 3;
  EngineConfig coarse = fine;
  coarse.dt = 0.01;
  coarse.record_stride = 50;
  coarse.noise_substeps = 2;
  const auto a = run_trajectory(p, r, fine, 0, true);
  const auto b = run_trajectory(p, r, coarse, 0, true);
  REQUIRE(a.times.size() == b.times.size());
  for (std::size_t k = 0; k < a.site_population_w.size(); ++k) {
    CHECK(std::abs(a.site_population_w[k] - b.site_population_w[k]) < 1e-2);
  }
  coarse.noise_substeps = 1;
  const auto c = run_trajectory(p, r, coarse, 0, true);
  double far = 0.0;
  for (std::size_t k = 0; k < a.site_population_w.size(); ++k) {
    far = std::max(far, std::abs(a.site_population_w[k] - c.site_population_w[k]));
  }
  CHECK(far > 0.1);
}
