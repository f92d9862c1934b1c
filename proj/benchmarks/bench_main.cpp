#include <benchmark/benchmark.h>

#include "ddbh/lindblad.hpp"
#include "ddbh/twa.hpp"

namespace {

void BM_HeunStep(benchmark::State& state) {
  const auto lattice = ddbh::build_lattice(ddbh::LatticeKind::torus, static_cast<int>(state.range(0)));
  const auto params = lattice.params(0.1, 0.1, 1.57, 0.9);
  const ddbh::NoiseSource noise(1, 0);
  ddbh::FieldState s = ddbh::sample_initial(ddbh::InitialState::vacuum(), lattice, noise);
  std::uint64_t k = 0;
  for (auto _ : state) {
    s = ddbh::step(s, params, lattice, 0.01, noise, k++, ddbh::Scheme::heun);
    benchmark::DoNotOptimize(s.amplitudes.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(lattice.site_count()));
}
BENCHMARK(BM_HeunStep)->Arg(4)->Arg(8)->Arg(16);

void BM_NoiseNormal(benchmark::State& state) {
  const ddbh::NoiseSource noise(3, 17);
  std::uint64_t k = 0;
  for (auto _ : state) benchmark::DoNotOptimize(noise.normal(k++, 5));
}
BENCHMARK(BM_NoiseNormal);

void BM_EnsembleSmall(benchmark::State& state) {
  const auto lattice = ddbh::build_lattice(ddbh::LatticeKind::ring, 8);
  const auto params = lattice.params(0.1, 0.1, 1.57, 0.9);
  ddbh::EngineConfig cfg;
  cfg.t_end = 5.0;
  cfg.n_traj = 64;
  cfg.threads = 1;
  for (auto _ : state) benchmark::DoNotOptimize(ddbh::run_ensemble(params, lattice, cfg).summary.mean.back());
}
BENCHMARK(BM_EnsembleSmall)->Unit(benchmark::kMillisecond);

void BM_LiouvillianApply(benchmark::State& state) {
  const auto lattice = ddbh::build_lattice(ddbh::LatticeKind::dimer, 0);
  const auto params = lattice.params(0.1, 0.1, 4.96, 0.9);
  const ddbh::FockBasis basis(2, static_cast<std::size_t>(state.range(0)));
  const ddbh::Liouvillian l(params, lattice, basis);
  const auto rho = ddbh::DensityMatrix::ground(basis);
  std::vector<ddbh::complex> out;
  for (auto _ : state) {
    l.apply(rho.data(), out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_LiouvillianApply)->Arg(8)->Arg(14)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
