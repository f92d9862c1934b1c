#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "ddbh/model.hpp"

namespace ddbh {

/// Truncated tensor-product Fock basis. Basis index i encodes the per-site
/// occupations little-endian, site 0 fastest: i = sum_s n_s (n_max+1)^s.
///
/// With a non-zero `displacement` the per-site basis is the displaced Fock
/// basis D(beta_s)|m>, i.e. the field operator is a_s = beta_s + c_s with c_s
/// truncated at n_max excitations. The zero displacement is the plain number
/// basis.
struct FockBasis {
  std::size_t n_sites = 1;
  std::size_t n_max = 10;
  std::vector<complex> displacement;  ///< empty or one entry per site

  FockBasis() = default;
  FockBasis(std::size_t sites, std::size_t cutoff, std::vector<complex> beta = {});

  std::size_t local_dimension() const { return n_max + 1; }
  std::size_t dimension() const;
  std::size_t stride(std::size_t site) const;
  std::size_t occupation(std::size_t index, std::size_t site) const {
    return (index / stride(site)) % local_dimension();
  }
  complex beta(std::size_t site) const { return displacement.empty() ? complex{} : displacement[site]; }
  bool displaced() const;
};

/// Sparse single-site operator on the (n_max+1)-dimensional local space.
struct LocalOperator {
  struct Entry {
    std::size_t row, col;
    complex value;
  };
  std::size_t dimension = 0;
  std::vector<Entry> entries;

  static LocalOperator from_dense(const std::vector<complex>& dense, std::size_t dim);
  LocalOperator adjoint() const;
};

/// Field, number and pair operators a, a^dag, a^dag a, a^dag^2 a^2 of one
/// site in the given basis, built as products of truncated matrices.
struct SiteOperators {
  LocalOperator a, a_dag, number, pair, excitation;
};
SiteOperators site_operators(const FockBasis& basis, std::size_t site);

/// Dense row-major density operator on a FockBasis.
class DensityMatrix {
 public:
  DensityMatrix() = default;
  explicit DensityMatrix(FockBasis basis);

  /// Projector onto the basis state with the given per-site occupations (in
  /// a displaced basis: the displaced number state).
  static DensityMatrix basis_state(const FockBasis& basis, const std::vector<std::size_t>& occupations);
  static DensityMatrix ground(const FockBasis& basis) {
    return basis_state(basis, std::vector<std::size_t>(basis.n_sites, 0));
  }

  const FockBasis& basis() const { return basis_; }
  std::size_t dimension() const { return dim_; }
  complex& operator()(std::size_t r, std::size_t c) { return data_[r * dim_ + c]; }
  const complex& operator()(std::size_t r, std::size_t c) const { return data_[r * dim_ + c]; }
  std::vector<complex>& data() { return data_; }
  const std::vector<complex>& data() const { return data_; }

  double time = 0.0;

  complex trace() const;
  /// max |rho - rho^dag| entrywise
  double hermiticity_error() const;
  /// smallest eigenvalue of the Hermitian part (dense eigensolver)
  double min_eigenvalue() const;
  /// Copy into a basis with a larger cutoff (same sites and displacement),
  /// padding with zeros.
  DensityMatrix embed(std::size_t new_n_max) const;

 private:
  FockBasis basis_;
  std::size_t dim_ = 0;
  std::vector<complex> data_;
};

/// Matrix-free Lindblad generator
///   L rho = -i[H, rho] + gamma sum_j (a_j rho a_j^dag - {a_j^dag a_j, rho}/2)
/// with H = sum_j [-delta n_j + U/2 a_j^dag^2 a_j^2 + F(a_j^dag + a_j)]
///          - J sum_j sum_{j' in nn(j)} a_j^dag a_j'.
/// The bond sum runs over the neighbour table, so each bond contributes
/// both hopping directions exactly once. The D^2 x D^2 superoperator is
/// never formed.
class Liouvillian {
 public:
  /// Throws UsageError if basis.dimension() > max_dimension or the lattice
  /// and basis disagree on the site count.
  Liouvillian(const ModelParams& params, const Lattice& lattice, FockBasis basis,
              std::size_t max_dimension = 4096);

  const FockBasis& basis() const { return basis_; }
  const ModelParams& params() const { return params_; }

  /// out = L rho (out is resized; rho must be D*D row-major).
  void apply(const std::vector<complex>& rho, std::vector<complex>& out) const;
  DensityMatrix apply(const DensityMatrix& rho) const;
  /// Same result as apply() for Hermitian rho (and only then), using left
  /// products only. The output is Hermitian by construction.
  void apply_hermitian(const std::vector<complex>& rho, std::vector<complex>& out) const;

  /// Upper bound on the spectral radius of L, used to pick a stable RK4 step.
  double spectral_bound() const;
  double stable_dt() const { return 2.0 / spectral_bound(); }

  /// Sparse superoperator in row-major vec(rho) ordering, as CSR triplets.
  /// Only for small systems (cross-checks).
  struct Triplet {
    std::size_t row, col;
    complex value;
  };
  std::vector<Triplet> superoperator() const;

 private:
  struct Hop {
    std::size_t to, from;
    double amplitude;  // -J
  };
  void left(const LocalOperator& op, std::size_t site, const complex* in, complex* out, complex coef) const;
  void right(const LocalOperator& op, std::size_t site, const complex* in, complex* out, complex coef) const;

  ModelParams params_;
  FockBasis basis_;
  std::size_t dim_ = 0;
  std::vector<SiteOperators> ops_;
  std::vector<LocalOperator> h_eff_, h_eff_dag_;  // H_local - i gamma/2 n, and its adjoint
  std::vector<Hop> hops_;
  std::vector<std::vector<unsigned short>> digits_;  // digits_[site][index]
  std::vector<std::vector<std::vector<std::size_t>>> with_digit_;  // [site][digit] -> indices
  mutable std::vector<complex> scratch_, accum_, flipped_;
};

Liouvillian build_liouvillian_action(const ModelParams& params, const Lattice& lattice, const FockBasis& basis,
                                     std::size_t max_dimension = 4096);

enum class ExactObservable { population, g2, parity };

std::string_view to_string(ExactObservable obs);

/// Tr(rho O), site-averaged for population. g2 is the ratio of site-averaged
/// <a^dag^2 a^2> to the squared site-averaged population; parity is
/// <(-1)^(total basis occupation)>.
double expectation(const DensityMatrix& rho, ExactObservable observable);

/// Tr(rho O_site) for a local operator.
complex expectation(const DensityMatrix& rho, const LocalOperator& op, std::size_t site);

/// Site-averaged mean excitation number in the (possibly displaced) basis.
double mean_excitation(const DensityMatrix& rho);

struct EvolveOptions {
  double dt = 0.0;  ///< 0 selects Liouvillian::stable_dt()
  std::size_t record_every = 0;  ///< 0 records only the endpoints
  /// Invoked at every recorded time.
  std::function<void(const DensityMatrix&)> observer;
};

struct EvolveResult {
  DensityMatrix rho;
  std::vector<double> times;
  std::vector<double> population;  ///< site-averaged <a^dag a> at recorded times
  double max_trace_deviation = 0.0;
  double max_hermiticity_error = 0.0;
};

/// Classical fixed-step RK4 integration from rho0 to t_end. The trace is
/// not renormalised; a deviation above 1e-6 throws NumericalError (step size
/// too large).
EvolveResult evolve(const Liouvillian& liouvillian, DensityMatrix rho0, double t_end, EvolveOptions options = {});

struct SteadyStateOptions {
  double dt = 0.0;            ///< 0 selects Liouvillian::stable_dt()
  double tolerance = 1e-9;    ///< on the entrywise 1-norm of L rho
  double max_time = 5000.0;
  std::size_t check_every = 20;
};

struct SteadyStateResult {
  DensityMatrix rho;
  double residual = 0.0;  ///< entrywise 1-norm of L rho at exit
  double time = 0.0;      ///< evolution time spent
};

/// Long-time RK4 relaxation from `initial` (the basis ground state when
/// empty) until ||L rho||_1 < tolerance. Throws NumericalError when
/// max_time is exhausted.
SteadyStateResult steady_state(const Liouvillian& liouvillian, const SteadyStateOptions& options = {},
                               const DensityMatrix* initial = nullptr);

/// Direct null-space solve of L rho = 0 with unit trace, via a sparse LU
/// factorisation of the superoperator. Cross-check only; throws UsageError
/// when D^2 exceeds max_superdimension.
DensityMatrix steady_state_nullspace(const Liouvillian& liouvillian, std::size_t max_superdimension = 40000);

/// Throws NumericalError when the mean basis excitation of any site comes
/// within 2 of n_max or the top level of any site holds more than 1e-3 of
/// the weight (the truncation is then visibly populated).
void check_cutoff(const DensityMatrix& rho);

/// Plain-basis cutoff from the largest mean-field population:
/// ceil(n_mf + 6 sqrt(n_mf)), at least 4.
std::size_t suggested_cutoff(const ModelParams& params);

struct CutoffScan {
  std::size_t start = 8;
  std::size_t increment = 5;
  std::size_t max_n_max = 80;
  double relative_tolerance = 1e-6;
  /// Displace every site by the homogeneous mean-field amplitude (largest
  /// stable root) so the truncation only has to hold the fluctuations.
  bool displaced = false;
  SteadyStateOptions steady;
  std::size_t max_dimension = 4096;
};

struct ConvergedSteadyState {
  DensityMatrix rho;
  double population = 0.0;
  std::vector<std::size_t> cutoffs;
  std::vector<double> populations;
};

/// Steady states at n_max = start, start + increment, ... until two
/// successive cutoffs agree on the site-averaged population to the relative
/// tolerance. Each step is warm-started from the previous state.
ConvergedSteadyState converged_steady_state(const ModelParams& params, const Lattice& lattice,
                                            const CutoffScan& scan = {});

}  // namespace ddbh
