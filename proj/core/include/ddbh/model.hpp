#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ddbh {

using complex = std::complex<double>;

/// Physical constants of the driven-dissipative Bose-Hubbard model. All
/// frequencies are in units of the loss rate, so `gamma` is 1 unless a test
/// deliberately rescales it.
struct ModelParams {
  double delta = 0.0;  ///< pump-cavity detuning
  double u = 0.0;      ///< on-site interaction
  double f = 0.0;      ///< drive amplitude (real by phase convention)
  double j_hop = 0.0;  ///< nearest-neighbour hopping
  double gamma = 1.0;  ///< single-boson loss rate
  int z = 0;           ///< coordination number of the lattice

  double zj() const { return z * j_hop; }

  /// Throws UsageError if gamma <= 0, u < 0, f < 0, z < 0 or anything is
  /// non-finite.
  void validate() const;
};

enum class LatticeKind {
  site,   ///< isolated resonator, z = 0
  dimer,  ///< 2x1 periodic array: each site's two neighbours are the other site
  ring,   ///< 1D periodic chain of L sites, z = 2
  torus,  ///< 2D periodic L x L square lattice, row-major, z = 4
};

std::string_view to_string(LatticeKind kind);
LatticeKind lattice_kind_from_string(std::string_view name);

/// Periodic lattice topology. Neighbour lists may repeat a site (dimer, 2x2
/// torus); every repetition is a separate bond, so the coordination number
/// is always exactly `coordination()`.
class Lattice {
 public:
  LatticeKind kind() const { return kind_; }
  int linear_size() const { return linear_size_; }
  std::size_t site_count() const { return site_count_; }
  int coordination() const { return coordination_; }
  std::span<const std::size_t> neighbors(std::size_t site) const {
    return std::span<const std::size_t>(neighbors_).subspan(site * coordination_, coordination_);
  }

  /// Human-readable size, e.g. "16x1" or "4x4".
  std::string shape() const;

  /// ModelParams with z taken from this lattice and J = zJ / z (J = 0 on a
  /// single site).
  ModelParams params(double delta, double u, double f, double zj, double gamma = 1.0) const;

  /// Throws UsageError unless params.z matches this lattice.
  void check(const ModelParams& params) const;

 private:
  friend Lattice build_lattice(LatticeKind kind, int linear_size);

  LatticeKind kind_ = LatticeKind::site;
  int linear_size_ = 1;
  int coordination_ = 0;
  std::size_t site_count_ = 1;
  std::vector<std::size_t> neighbors_;  // site-major, coordination_ entries per site
};

/// Builds a periodic lattice. Ring needs L >= 3, torus L >= 2 (the 2x2 torus
/// carries doubled bonds). Site and dimer ignore L beyond checking it is 1
/// or 2 respectively (0 is accepted as "default").
Lattice build_lattice(LatticeKind kind, int linear_size);

/// One trajectory's field amplitudes at a given time (units of 1/gamma).
struct FieldState {
  std::vector<complex> amplitudes;
  double time = 0.0;
};

enum class Dynamics {
  /// Langevin drift with the Wigner self-energy correction U(|a|^2 - 1).
  truncated_wigner,
  /// Noise-free Gross-Pitaevskii drift with U|a|^2; its homogeneous fixed
  /// points are the mean-field roots.
  gross_pitaevskii,
};

/// Deterministic part of d(alpha_j)/dt:
///   [i(delta - U(|a_j|^2 - s)) - gamma/2] a_j + i J sum_nn a_j' - i F
/// with s = 1 for truncated_wigner and s = 0 for gross_pitaevskii.
/// Writes into `out` (same length as `amplitudes`). Throws NumericalError on
/// a non-finite amplitude.
void drift(const ModelParams& params, const Lattice& lattice, std::span<const complex> amplitudes,
           std::span<complex> out, Dynamics dynamics = Dynamics::truncated_wigner);

std::vector<complex> drift(const ModelParams& params, const Lattice& lattice, const FieldState& state,
                           Dynamics dynamics = Dynamics::truncated_wigner);

namespace detail {

/// Drift kernel without size or finiteness checks; used by the integrators.
inline void drift_unchecked(const ModelParams& params, const Lattice& lattice, const complex* amplitudes,
                            complex* out, double wigner_shift) {
  const std::size_t n = lattice.site_count();
  const double half_gamma = 0.5 * params.gamma;
  for (std::size_t s = 0; s < n; ++s) {
    const complex a = amplitudes[s];
    double hop_re = 0.0;
    double hop_im = 0.0;
    for (std::size_t nb : lattice.neighbors(s)) {
      hop_re += amplitudes[nb].real();
      hop_im += amplitudes[nb].imag();
    }
    const double freq = params.delta - params.u * (std::norm(a) - wigner_shift);
    // [i freq - gamma/2] a + i J hop - i F
    out[s] = complex(-half_gamma * a.real() - freq * a.imag() - params.j_hop * hop_im,
                     freq * a.real() - half_gamma * a.imag() + params.j_hop * hop_re - params.f);
  }
}

}  // namespace detail

}  // namespace ddbh
