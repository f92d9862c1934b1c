#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddbh/model.hpp"
#include "ddbh/philox.hpp"

namespace ddbh {

enum class Scheme { euler_maruyama, heun };

std::string_view to_string(Scheme scheme);
Scheme scheme_from_string(std::string_view name);

struct InitialState {
  enum class Kind { wigner_vacuum, coherent, custom };
  Kind kind = Kind::wigner_vacuum;
  complex alpha0{};                  ///< coherent: amplitude on every site
  std::vector<complex> site_means;  ///< custom: per-site coherent amplitudes

  static InitialState vacuum() { return {}; }
  static InitialState coherent(complex a) { return {Kind::coherent, a, {}}; }
  static InitialState custom(std::vector<complex> means) { return {Kind::custom, {}, std::move(means)}; }
};

struct EngineConfig {
  double dt = 1e-2;
  double t_end = 10.0;
  std::size_t n_traj = 1;
  std::uint64_t seed = 0;
  std::size_t record_stride = 10;
  Scheme scheme = Scheme::heun;
  InitialState initial;
  /// gross_pitaevskii drops both the noise and the Wigner self-energy shift.
  Dynamics dynamics = Dynamics::truncated_wigner;

  /// Wall-clock only; never changes results. 0 = hardware concurrency.
  unsigned threads = 0;
  /// Trajectories are split into this many contiguous groups; the groups are
  /// the work units and the resampling units for bootstrap errors.
  std::size_t groups = 64;
  /// Keep every trajectory's site-averaged Wigner population series (needed
  /// for p(n) histograms).
  bool keep_series = false;
  /// Keep full per-site series for the first `keep_sites` trajectories.
  std::size_t keep_sites = 0;
  /// Accumulate ensemble sums of each site's population separately.
  bool site_resolved = false;
  /// Each step's increment is the sum of this many fine-grid increments
  /// (steps count from 1; step k uses fine steps (k-1) r + 1 .. k r). A run at
  /// dt with r = 2 then sees the same Brownian path as a run at dt / 2.
  std::size_t noise_substeps = 1;
  /// A run with a larger diverged fraction is rejected.
  double max_diverged_fraction = 1e-3;

  void validate() const;
  std::size_t step_count() const;
  std::size_t record_count() const;
  std::vector<double> record_times() const;
};

/// Per-trajectory output. Values are raw Wigner moments (no ordering
/// correction).
struct TrajectoryRecord {
  std::size_t index = 0;
  std::vector<double> times;
  /// time-major: site_population_w[k * N + j] = |alpha_j(t_k)|^2; empty when
  /// this trajectory's site series was not kept
  std::vector<double> site_population_w;
  /// (1/N) sum_j |alpha_j(t_k)|^2
  std::vector<double> site_avg_population_w;
  FieldState final_state;
  bool diverged = false;
};

/// Sums over (non-diverged) trajectories of per-trajectory, per-time
/// quantities:
///   m1 = (1/N) sum_j |a_j|^2,  m2 = (1/N) sum_j |a_j|^4,  k0 = |sum_j a_j|^2 / N.
struct MomentSums {
  double count = 0.0;
  std::vector<double> m1, m1_sq, m2, m2_sq, m1_m2, k0, k0_sq, k0_m1;
  std::vector<double> site;  ///< time-major sums of |a_j|^2; empty unless site_resolved

  void resize(std::size_t n_times, std::size_t n_sites_resolved);
  MomentSums& operator+=(const MomentSums& other);
};

struct EnsembleSummary {
  std::vector<double> times;
  std::vector<double> mean;       ///< ensemble mean of m1 (raw Wigner)
  std::vector<double> std_error;  ///< trajectory-to-trajectory SE of m1
};

struct EnsembleResult {
  EngineConfig config;
  std::size_t n_sites = 0;
  std::vector<double> times;
  MomentSums moments;
  /// group_m1[g][k]: sum of m1 at time k over group g's trajectories.
  std::vector<std::vector<double>> group_m1;
  std::vector<double> group_count;
  std::vector<TrajectoryRecord> records;  ///< kept trajectories, index order
  std::size_t n_diverged = 0;
  std::vector<std::size_t> diverged_indices;
  EnsembleSummary summary;

  std::size_t n_valid() const { return static_cast<std::size_t>(moments.count); }
};

/// Counter-based noise for one trajectory.
class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, std::uint64_t trajectory) : gen_(seed), trajectory_(trajectory) {}
  /// xi1 + i xi2 with independent standard normals, drawn by a ziggurat
  /// sampler from the words of the Philox block at noise_counter(...). A
  /// rejected draw continues with blocks whose counter has an extension index
  /// in bits 26-31 of the third word.
  complex normal(std::uint64_t step, std::uint64_t site, NoiseStream stream = NoiseStream::dynamics) const;

 private:
  Philox4x32 gen_;
  std::uint64_t trajectory_;
};

/// Draws the t = 0 field: vacuum noise (xi1 + i xi2)/2 per site on top of the
/// configured mean amplitudes. No noise for gross_pitaevskii dynamics.
FieldState sample_initial(const InitialState& initial, const Lattice& lattice, const NoiseSource& noise,
                          Dynamics dynamics = Dynamics::truncated_wigner);

/// Advances one step of size dt using noise for `step_index`. The noise
/// increment per site is sqrt(gamma/2) * sqrt(dt/2) (xi1 + i xi2). Throws
/// NumericalError if the new state is not finite.
FieldState step(const FieldState& state, const ModelParams& params, const Lattice& lattice, double dt,
                const NoiseSource& noise, std::uint64_t step_index, Scheme scheme,
                Dynamics dynamics = Dynamics::truncated_wigner);

/// Integrates trajectory `index` of the ensemble described by config.
/// Always fills site_avg_population_w; fills site_population_w when
/// `keep_sites` is true. A diverged trajectory is returned with
/// diverged = true and truncated series.
TrajectoryRecord run_trajectory(const ModelParams& params, const Lattice& lattice, const EngineConfig& config,
                                std::size_t index, bool keep_sites = true);

/// Runs config.n_traj independent trajectories. The result is a pure
/// function of (params, lattice, config minus `threads`). Throws
/// NumericalError if every trajectory diverges or the diverged fraction
/// exceeds config.max_diverged_fraction.
EnsembleResult run_ensemble(const ModelParams& params, const Lattice& lattice, const EngineConfig& config);

}  // namespace ddbh
