#include "ddbh/lindblad.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "ddbh/error.hpp"
#include "ddbh/meanfield.hpp"

namespace ddbh {
namespace {

constexpr complex kI{0.0, 1.0};

using Dense = std::vector<complex>;  // row-major d x d

Dense dense_multiply(const Dense& a, const Dense& b, std::size_t d) {
  Dense c(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const complex aik = a[i * d + k];
      if (aik == complex{}) continue;
      for (std::size_t j = 0; j < d; ++j) c[i * d + j] += aik * b[k * d + j];
    }
  }
  return c;
}

Dense dense_adjoint(const Dense& a, std::size_t d) {
  Dense t(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) t[j * d + i] = std::conj(a[i * d + j]);
  }
  return t;
}

double row_norm(const LocalOperator& op) {
  std::vector<double> rows(op.dimension, 0.0);
  for (const auto& e : op.entries) rows[e.row] += std::abs(e.value);
  return rows.empty() ? 0.0 : *std::max_element(rows.begin(), rows.end());
}

double entrywise_norm(const std::vector<complex>& v) {
  double acc = 0.0;
  for (const auto& x : v) acc += std::abs(x);
  return acc;
}

}  // namespace

FockBasis::FockBasis(std::size_t sites, std::size_t cutoff, std::vector<complex> beta)
    : n_sites(sites), n_max(cutoff), displacement(std::move(beta)) {
  if (n_sites < 1) throw UsageError("Fock basis needs at least one site");
  if (!displacement.empty() && displacement.size() != n_sites) {
    throw UsageError("displacement must have one entry per site");
  }
}

std::size_t FockBasis::dimension() const {
  std::size_t d = 1;
  for (std::size_t s = 0; s < n_sites; ++s) {
    if (d > (std::size_t{1} << 40) / local_dimension()) throw UsageError("Fock basis dimension overflows");
    d *= local_dimension();
  }
  return d;
}

std::size_t FockBasis::stride(std::size_t site) const {
  std::size_t s = 1;
  for (std::size_t i = 0; i < site; ++i) s *= local_dimension();
  return s;
}

bool FockBasis::displaced() const {
  return std::any_of(displacement.begin(), displacement.end(), [](complex b) { return b != complex{}; });
}

LocalOperator LocalOperator::from_dense(const std::vector<complex>& dense, std::size_t dim) {
  LocalOperator op;
  op.dimension = dim;
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      if (dense[i * dim + j] != complex{}) op.entries.push_back({i, j, dense[i * dim + j]});
    }
  }
  return op;
}

LocalOperator LocalOperator::adjoint() const {
  LocalOperator op;
  op.dimension = dimension;
  op.entries.reserve(entries.size());
  for (const auto& e : entries) op.entries.push_back({e.col, e.row, std::conj(e.value)});
  return op;
}

SiteOperators site_operators(const FockBasis& basis, std::size_t site) {
  const std::size_t d = basis.local_dimension();
  Dense a(d * d);
  for (std::size_t m = 1; m < d; ++m) a[(m - 1) * d + m] = std::sqrt(static_cast<double>(m));
  Dense excitation(d * d);
  for (std::size_t m = 0; m < d; ++m) excitation[m * d + m] = static_cast<double>(m);
  const complex beta = basis.beta(site);
  for (std::size_t m = 0; m < d; ++m) a[m * d + m] += beta;
  const Dense ad = dense_adjoint(a, d);
  const Dense number = dense_multiply(ad, a, d);
  const Dense pair = dense_multiply(dense_multiply(ad, ad, d), dense_multiply(a, a, d), d);
  return {LocalOperator::from_dense(a, d), LocalOperator::from_dense(ad, d), LocalOperator::from_dense(number, d),
          LocalOperator::from_dense(pair, d), LocalOperator::from_dense(excitation, d)};
}

// --- DensityMatrix ---------------------------------------------------------

DensityMatrix::DensityMatrix(FockBasis basis) : basis_(std::move(basis)), dim_(basis_.dimension()) {
  data_.assign(dim_ * dim_, complex{});
}

DensityMatrix DensityMatrix::basis_state(const FockBasis& basis, const std::vector<std::size_t>& occupations) {
  if (occupations.size() != basis.n_sites) throw UsageError("occupation list length must equal site count");
  DensityMatrix rho(basis);
  std::size_t index = 0;
  for (std::size_t s = 0; s < basis.n_sites; ++s) {
    if (occupations[s] > basis.n_max) throw UsageError("occupation exceeds cutoff");
    index += occupations[s] * basis.stride(s);
  }
  rho(index, index) = 1.0;
  return rho;
}

complex DensityMatrix::trace() const {
  complex t{};
  for (std::size_t i = 0; i < dim_; ++i) t += (*this)(i, i);
  return t;
}

double DensityMatrix::hermiticity_error() const {
  double err = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t j = i; j < dim_; ++j) err = std::max(err, std::abs((*this)(i, j) - std::conj((*this)(j, i))));
  }
  return err;
}

double DensityMatrix::min_eigenvalue() const {
  Eigen::MatrixXcd m(dim_, dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t j = 0; j < dim_; ++j) m(i, j) = 0.5 * ((*this)(i, j) + std::conj((*this)(j, i)));
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

DensityMatrix DensityMatrix::embed(std::size_t new_n_max) const {
  if (new_n_max < basis_.n_max) throw UsageError("embed needs a cutoff at least as large");
  FockBasis target = basis_;
  target.n_max = new_n_max;
  DensityMatrix out(target);
  std::vector<std::size_t> map(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    std::size_t j = 0;
    for (std::size_t s = 0; s < basis_.n_sites; ++s) j += basis_.occupation(i, s) * target.stride(s);
    map[i] = j;
  }
  for (std::size_t r = 0; r < dim_; ++r) {
    for (std::size_t c = 0; c < dim_; ++c) out(map[r], map[c]) = (*this)(r, c);
  }
  out.time = time;
  return out;
}

// --- Liouvillian -----------------------------------------------------------

Liouvillian::Liouvillian(const ModelParams& params, const Lattice& lattice, FockBasis basis,
                         std::size_t max_dimension)
    : params_(params), basis_(std::move(basis)) {
  lattice.check(params);
  if (basis_.n_sites != lattice.site_count()) throw UsageError("Fock basis and lattice disagree on site count");
  dim_ = basis_.dimension();
  if (dim_ > max_dimension) {
    throw UsageError("Hilbert-space dimension " + std::to_string(dim_) + " exceeds the cap of " +
                     std::to_string(max_dimension) + "; use fewer sites or a smaller cutoff");
  }
  const std::size_t d = basis_.local_dimension();
  digits_.resize(basis_.n_sites);
  with_digit_.resize(basis_.n_sites);
  for (std::size_t s = 0; s < basis_.n_sites; ++s) {
    ops_.push_back(site_operators(basis_, s));
    const SiteOperators& op = ops_.back();
    Dense h(d * d);
    auto add = [&](const LocalOperator& o, complex coef) {
      for (const auto& e : o.entries) h[e.row * d + e.col] += coef * e.value;
    };
    add(op.number, complex(-params.delta, -0.5 * params.gamma));
    add(op.pair, 0.5 * params.u);
    add(op.a, params.f);
    add(op.a_dag, params.f);
    h_eff_.push_back(LocalOperator::from_dense(h, d));
    h_eff_dag_.push_back(h_eff_.back().adjoint());
    digits_[s].resize(dim_);
    for (std::size_t i = 0; i < dim_; ++i) digits_[s][i] = static_cast<unsigned short>(basis_.occupation(i, s));
    with_digit_[s].assign(basis_.local_dimension(), {});
    for (std::size_t i = 0; i < dim_; ++i) with_digit_[s][digits_[s][i]].push_back(i);
  }
  std::map<std::pair<std::size_t, std::size_t>, double> hops;
  for (std::size_t s = 0; s < lattice.site_count(); ++s) {
    for (std::size_t nb : lattice.neighbors(s)) hops[{s, nb}] += -params.j_hop;
  }
  for (const auto& [key, amp] : hops) {
    if (amp != 0.0) hops_.push_back({key.first, key.second, amp});
  }
}

void Liouvillian::left(const LocalOperator& op, std::size_t site, const complex* in, complex* out,
                       complex coef) const {
  // out += coef * O_site * in
  const std::size_t stride = basis_.stride(site);
  for (const auto& e : op.entries) {
    const complex w = coef * e.value;
    const std::ptrdiff_t shift =
        (static_cast<std::ptrdiff_t>(e.row) - static_cast<std::ptrdiff_t>(e.col)) * static_cast<std::ptrdiff_t>(stride);
    for (const std::size_t r : with_digit_[site][e.col]) {
      const complex* src = in + r * dim_;
      complex* dst = out + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(r) + shift) * dim_;
      for (std::size_t c = 0; c < dim_; ++c) dst[c] += w * src[c];
    }
  }
}

void Liouvillian::right(const LocalOperator& op, std::size_t site, const complex* in, complex* out,
                        complex coef) const {
  // out += coef * in * O_site, row by row for contiguous access
  const std::size_t stride = basis_.stride(site);
  for (const auto& e : op.entries) {
    const complex w = coef * e.value;
    const std::ptrdiff_t shift =
        (static_cast<std::ptrdiff_t>(e.col) - static_cast<std::ptrdiff_t>(e.row)) * static_cast<std::ptrdiff_t>(stride);
    const auto& cols = with_digit_[site][e.row];
    for (std::size_t r = 0; r < dim_; ++r) {
      const complex* src = in + r * dim_;
      complex* dst = out + r * dim_ + shift;
      for (const std::size_t c : cols) dst[c] += w * src[c];
    }
  }
}

void Liouvillian::apply(const std::vector<complex>& rho, std::vector<complex>& out) const {
  if (rho.size() != dim_ * dim_) throw UsageError("density matrix does not match the Liouvillian basis");
  out.assign(dim_ * dim_, complex{});
  scratch_.resize(dim_ * dim_);
  const complex* in = rho.data();
  complex* o = out.data();
  for (std::size_t s = 0; s < basis_.n_sites; ++s) {
    left(h_eff_[s], s, in, o, -kI);
    right(h_eff_dag_[s], s, in, o, kI);
  }
  for (const Hop& hop : hops_) {
    // H_hop = amp a_to^dag a_from; rho H_hop^dag = amp rho a_from^dag a_to
    std::fill(scratch_.begin(), scratch_.end(), complex{});
    left(ops_[hop.from].a, hop.from, in, scratch_.data(), 1.0);
    left(ops_[hop.to].a_dag, hop.to, scratch_.data(), o, -kI * hop.amplitude);
    std::fill(scratch_.begin(), scratch_.end(), complex{});
    right(ops_[hop.from].a_dag, hop.from, in, scratch_.data(), 1.0);
    right(ops_[hop.to].a, hop.to, scratch_.data(), o, kI * hop.amplitude);
  }
  for (std::size_t s = 0; s < basis_.n_sites; ++s) {
    std::fill(scratch_.begin(), scratch_.end(), complex{});
    left(ops_[s].a, s, in, scratch_.data(), 1.0);
    right(ops_[s].a_dag, s, scratch_.data(), o, params_.gamma);
  }
}

void Liouvillian::apply_hermitian(const std::vector<complex>& rho, std::vector<complex>& out) const {
  // For Hermitian rho: L rho = C + C^dag with C = K rho + (gamma/2) sum a rho a^dag,
  // K = -i (H - i gamma/2 sum n), and a rho a^dag = a (a rho)^dag. Only
  // left products are needed; their inner loops are contiguous.
  if (rho.size() != dim_ * dim_) throw UsageError("density matrix does not match the Liouvillian basis");
  out.resize(dim_ * dim_);
  scratch_.resize(dim_ * dim_);
  accum_.assign(dim_ * dim_, complex{});
  flipped_.resize(dim_ * dim_);
  const complex* in = rho.data();
  complex* c = accum_.data();
  for (std::size_t s = 0; s < basis_.n_sites; ++s) left(h_eff_[s], s, in, c, -kI);
  for (const Hop& hop : hops_) {
    std::fill(scratch_.begin(), scratch_.end(), complex{});
    left(ops_[hop.from].a, hop.from, in, scratch_.data(), 1.0);
    left(ops_[hop.to].a_dag, hop.to, scratch_.data(), c, -kI * hop.amplitude);
  }
  for (std::size_t s = 0; s < basis_.n_sites; ++s) {
    std::fill(scratch_.begin(), scratch_.end(), complex{});
    left(ops_[s].a, s, in, scratch_.data(), 1.0);
    for (std::size_t r = 0; r < dim_; ++r) {
      for (std::size_t col = 0; col < dim_; ++col) flipped_[col * dim_ + r] = std::conj(scratch_[r * dim_ + col]);
    }
    left(ops_[s].a, s, flipped_.data(), c, 0.5 * params_.gamma);
  }
  for (std::size_t r = 0; r < dim_; ++r) {
    for (std::size_t col = r; col < dim_; ++col) {
      const complex v = accum_[r * dim_ + col] + std::conj(accum_[col * dim_ + r]);
      out[r * dim_ + col] = v;
      out[col * dim_ + r] = std::conj(v);
    }
  }
}

DensityMatrix Liouvillian::apply(const DensityMatrix& rho) const {
  DensityMatrix out(basis_);
  apply(rho.data(), out.data());
  out.time = rho.time;
  return out;
}

double Liouvillian::spectral_bound() const {
  double h = 0.0;
  double jump = 0.0;
  for (std::size_t s = 0; s < basis_.n_sites; ++s) {
    h += std::max(row_norm(h_eff_[s]), row_norm(h_eff_dag_[s]));
    jump += params_.gamma * row_norm(ops_[s].a) * row_norm(ops_[s].a_dag);
  }
  for (const Hop& hop : hops_) h += std::abs(hop.amplitude) * row_norm(ops_[hop.to].a_dag) * row_norm(ops_[hop.from].a);
  return 2.0 * h + jump;
}

std::vector<Liouvillian::Triplet> Liouvillian::superoperator() const {
  // Full-space sparse matrices as column lists.
  using Column = std::vector<std::pair<std::size_t, complex>>;
  auto full = [&](const LocalOperator& op, std::size_t site) {
    std::vector<Column> m(dim_);
    const std::size_t stride = basis_.stride(site);
    for (std::size_t c = 0; c < dim_; ++c) {
      for (const auto& e : op.entries) {
        if (digits_[site][c] != e.col) continue;
        m[c].emplace_back(c + e.row * stride - e.col * stride, e.value);
      }
    }
    return m;
  };
  auto multiply = [&](const std::vector<Column>& a, const std::vector<Column>& b) {
    std::vector<Column> m(dim_);
    for (std::size_t c = 0; c < dim_; ++c) {
      std::map<std::size_t, complex> acc;
      for (const auto& [k, bv] : b[c]) {
        for (const auto& [r, av] : a[k]) acc[r] += av * bv;
      }
      for (const auto& [r, v] : acc) m[c].emplace_back(r, v);
    }
    return m;
  };
  std::vector<std::map<std::size_t, complex>> h(dim_);  // column -> row -> value
  auto accumulate = [&](const std::vector<Column>& m, complex coef) {
    for (std::size_t c = 0; c < dim_; ++c) {
      for (const auto& [r, v] : m[c]) h[c][r] += coef * v;
    }
  };
  for (std::size_t s = 0; s < basis_.n_sites; ++s) accumulate(full(h_eff_[s], s), 1.0);
  for (const Hop& hop : hops_) {
    accumulate(multiply(full(ops_[hop.to].a_dag, hop.to), full(ops_[hop.from].a, hop.from)), hop.amplitude);
  }
  std::vector<Triplet> out;
  const std::size_t d = dim_;
  // row-major vec: vec(A rho B) = (A kron B^T) vec(rho)
  for (std::size_t c = 0; c < d; ++c) {
    for (const auto& [r, v] : h[c]) {
      for (std::size_t k = 0; k < d; ++k) {
        out.push_back({r * d + k, c * d + k, -kI * v});                  // -i H rho
        out.push_back({k * d + r, k * d + c, kI * std::conj(v)});        // +i rho H^dag
      }
    }
  }
  for (std::size_t s = 0; s < basis_.n_sites; ++s) {
    const auto a = full(ops_[s].a, s);
    for (std::size_t c1 = 0; c1 < d; ++c1) {
      for (const auto& [r1, v1] : a[c1]) {
        for (std::size_t c2 = 0; c2 < d; ++c2) {
          for (const auto& [r2, v2] : a[c2]) {
            out.push_back({r1 * d + r2, c1 * d + c2, params_.gamma * v1 * std::conj(v2)});
          }
        }
      }
    }
  }
  return out;
}

Liouvillian build_liouvillian_action(const ModelParams& params, const Lattice& lattice, const FockBasis& basis,
                                     std::size_t max_dimension) {
  return Liouvillian(params, lattice, basis, max_dimension);
}

// --- observables -----------------------------------------------------------

std::string_view to_string(ExactObservable obs) {
  switch (obs) {
    case ExactObservable::population: return "population";
    case ExactObservable::g2: return "g2";
    case ExactObservable::parity: return "parity";
  }
  return "?";
}

complex expectation(const DensityMatrix& rho, const LocalOperator& op, std::size_t site) {
  const FockBasis& basis = rho.basis();
  const std::size_t dim = rho.dimension();
  const std::size_t stride = basis.stride(site);
  complex acc{};
  // Tr(rho O) = sum_{r,c} rho(r,c) O(c,r)
  for (std::size_t r = 0; r < dim; ++r) {
    const std::size_t m = basis.occupation(r, site);
    for (const auto& e : op.entries) {
      if (e.col != m) continue;
      const std::size_t c = r + e.row * stride - e.col * stride;
      acc += rho(r, c) * e.value;
    }
  }
  return acc;
}

double expectation(const DensityMatrix& rho, ExactObservable observable) {
  const FockBasis& basis = rho.basis();
  const auto n_sites = static_cast<double>(basis.n_sites);
  switch (observable) {
    case ExactObservable::population: {
      double acc = 0.0;
      for (std::size_t s = 0; s < basis.n_sites; ++s) {
        acc += expectation(rho, site_operators(basis, s).number, s).real();
      }
      return acc / n_sites;
    }
    case ExactObservable::g2: {
      double pop = 0.0;
      double pair = 0.0;
      for (std::size_t s = 0; s < basis.n_sites; ++s) {
        const SiteOperators ops = site_operators(basis, s);
        pop += expectation(rho, ops.number, s).real();
        pair += expectation(rho, ops.pair, s).real();
      }
      pop /= n_sites;
      pair /= n_sites;
      return pair / (pop * pop);
    }
    case ExactObservable::parity: {
      double acc = 0.0;
      for (std::size_t i = 0; i < rho.dimension(); ++i) {
        std::size_t total = 0;
        for (std::size_t s = 0; s < basis.n_sites; ++s) total += basis.occupation(i, s);
        acc += (total % 2 == 0 ? 1.0 : -1.0) * rho(i, i).real();
      }
      return acc;
    }
  }
  return 0.0;
}

double mean_excitation(const DensityMatrix& rho) {
  const FockBasis& basis = rho.basis();
  double acc = 0.0;
  for (std::size_t i = 0; i < rho.dimension(); ++i) {
    std::size_t total = 0;
    for (std::size_t s = 0; s < basis.n_sites; ++s) total += basis.occupation(i, s);
    acc += static_cast<double>(total) * rho(i, i).real();
  }
  return acc / static_cast<double>(basis.n_sites);
}

void check_cutoff(const DensityMatrix& rho) {
  const FockBasis& basis = rho.basis();
  for (std::size_t s = 0; s < basis.n_sites; ++s) {
    double mean = 0.0;
    double top = 0.0;
    for (std::size_t i = 0; i < rho.dimension(); ++i) {
      const std::size_t occ = basis.occupation(i, s);
      mean += static_cast<double>(occ) * rho(i, i).real();
      if (occ == basis.n_max) top += rho(i, i).real();
    }
    if (mean > static_cast<double>(basis.n_max) - 2.0 || top > 1e-3) {
      throw NumericalError("cutoff n_max = " + std::to_string(basis.n_max) + " too small: site " +
                           std::to_string(s) + " holds " + std::to_string(mean) + " excitations, " +
                           std::to_string(top) + " of the weight in the top level");
    }
  }
}

std::size_t suggested_cutoff(const ModelParams& params) {
  double n_mf = 0.0;
  for (const auto& b : meanfield_roots(params)) n_mf = std::max(n_mf, b.n);
  return std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(n_mf + 6.0 * std::sqrt(n_mf))));
}

// --- time evolution --------------------------------------------------------

EvolveResult evolve(const Liouvillian& liouvillian, DensityMatrix rho, double t_end, EvolveOptions options) {
  if (rho.basis().dimension() != liouvillian.basis().dimension()) {
    throw UsageError("initial density matrix does not match the Liouvillian basis");
  }
  if (!(t_end >= 0.0)) throw UsageError("t_end must be non-negative");
  const double dt_max = options.dt > 0.0 ? options.dt : liouvillian.stable_dt();
  const auto n_steps = static_cast<std::size_t>(std::ceil(t_end / dt_max - 1e-12));
  const double dt = n_steps > 0 ? t_end / static_cast<double>(n_steps) : 0.0;
  const double t0 = rho.time;
  const std::size_t size = rho.data().size();

  EvolveResult result;
  auto record = [&](const DensityMatrix& r) {
    result.times.push_back(r.time);
    result.population.push_back(expectation(r, ExactObservable::population));
    result.max_hermiticity_error = std::max(result.max_hermiticity_error, r.hermiticity_error());
    if (options.observer) options.observer(r);
  };
  record(rho);

  std::vector<complex> k(size), acc(size), stage(size);
  auto& y = rho.data();
  for (std::size_t n = 1; n <= n_steps; ++n) {
    liouvillian.apply(y, k);
    for (std::size_t i = 0; i < size; ++i) {
      acc[i] = k[i];
      stage[i] = y[i] + 0.5 * dt * k[i];
    }
    liouvillian.apply(stage, k);
    for (std::size_t i = 0; i < size; ++i) {
      acc[i] += 2.0 * k[i];
      stage[i] = y[i] + 0.5 * dt * k[i];
    }
    liouvillian.apply(stage, k);
    for (std::size_t i = 0; i < size; ++i) {
      acc[i] += 2.0 * k[i];
      stage[i] = y[i] + dt * k[i];
    }
    liouvillian.apply(stage, k);
    for (std::size_t i = 0; i < size; ++i) y[i] += dt / 6.0 * (acc[i] + k[i]);
    rho.time = t0 + static_cast<double>(n) * dt;

    const double deviation = std::abs(rho.trace() - 1.0);
    result.max_trace_deviation = std::max(result.max_trace_deviation, deviation);
    if (!(deviation <= 1e-6)) {
      throw NumericalError("trace drifted by " + std::to_string(deviation) + " at t = " + std::to_string(rho.time) +
                           "; reduce dt");
    }
    if (n == n_steps || (options.record_every > 0 && n % options.record_every == 0)) record(rho);
  }
  result.rho = std::move(rho);
  return result;
}

SteadyStateResult steady_state(const Liouvillian& liouvillian, const SteadyStateOptions& options,
                               const DensityMatrix* initial) {
  DensityMatrix rho = initial ? *initial : DensityMatrix::ground(liouvillian.basis());
  if (rho.dimension() != liouvillian.basis().dimension()) {
    throw UsageError("initial density matrix does not match the Liouvillian basis");
  }
  if (rho.hermiticity_error() > 1e-12) throw UsageError("steady-state relaxation needs a Hermitian start");
  const double dt = options.dt > 0.0 ? options.dt : liouvillian.stable_dt();
  const std::size_t size = rho.data().size();
  std::vector<complex> k(size), acc(size), stage(size);
  auto& y = rho.data();
  const double t0 = rho.time;
  double residual = 0.0;
  for (std::size_t n = 0;; ++n) {
    liouvillian.apply_hermitian(y, k);
    if (n % options.check_every == 0) {
      residual = entrywise_norm(k);
      if (residual < options.tolerance) break;
      if (rho.time - t0 > options.max_time) {
        throw NumericalError("steady state not reached within t = " + std::to_string(options.max_time) +
                             " (residual " + std::to_string(residual) + ")");
      }
      const double deviation = std::abs(rho.trace() - 1.0);
      if (!(deviation <= 1e-6)) throw NumericalError("trace drifted by " + std::to_string(deviation));
    }
    for (std::size_t i = 0; i < size; ++i) {
      acc[i] = k[i];
      stage[i] = y[i] + 0.5 * dt * k[i];
    }
    liouvillian.apply_hermitian(stage, k);
    for (std::size_t i = 0; i < size; ++i) {
      acc[i] += 2.0 * k[i];
      stage[i] = y[i] + 0.5 * dt * k[i];
    }
    liouvillian.apply_hermitian(stage, k);
    for (std::size_t i = 0; i < size; ++i) {
      acc[i] += 2.0 * k[i];
      stage[i] = y[i] + dt * k[i];
    }
    liouvillian.apply_hermitian(stage, k);
    for (std::size_t i = 0; i < size; ++i) y[i] += dt / 6.0 * (acc[i] + k[i]);
    rho.time += dt;
  }
  const double elapsed = rho.time - t0;
  return {std::move(rho), residual, elapsed};
}

DensityMatrix steady_state_nullspace(const Liouvillian& liouvillian, std::size_t max_superdimension) {
  const std::size_t d = liouvillian.basis().dimension();
  const std::size_t dd = d * d;
  if (dd > max_superdimension) {
    throw UsageError("superoperator dimension " + std::to_string(dd) + " exceeds the null-space solver cap");
  }
  std::vector<Eigen::Triplet<complex>> triplets;
  for (const auto& t : liouvillian.superoperator()) {
    if (t.row == 0) continue;  // replaced by the trace condition
    triplets.emplace_back(static_cast<int>(t.row), static_cast<int>(t.col), t.value);
  }
  for (std::size_t i = 0; i < d; ++i) triplets.emplace_back(0, static_cast<int>(i * d + i), 1.0);
  Eigen::SparseMatrix<complex> m(static_cast<Eigen::Index>(dd), static_cast<Eigen::Index>(dd));
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<complex>> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) throw NumericalError("null-space factorisation failed");
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(dd));
  rhs(0) = 1.0;
  const Eigen::VectorXcd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success) throw NumericalError("null-space solve failed");
  DensityMatrix rho(liouvillian.basis());
  for (std::size_t i = 0; i < dd; ++i) rho.data()[i] = x(static_cast<Eigen::Index>(i));
  return rho;
}

ConvergedSteadyState converged_steady_state(const ModelParams& params, const Lattice& lattice,
                                            const CutoffScan& scan) {
  std::vector<complex> beta;
  if (scan.displaced) {
    complex alpha{};
    double best = -1.0;
    for (const auto& b : meanfield_roots(params)) {
      if (b.stable && b.n > best) {
        best = b.n;
        alpha = b.alpha;
      }
    }
    beta.assign(lattice.site_count(), alpha);
  }
  std::size_t n_max = scan.start;
  if (!scan.displaced) n_max = std::max(n_max, suggested_cutoff(params));

  ConvergedSteadyState out;
  std::optional<DensityMatrix> previous;
  while (true) {
    if (n_max > scan.max_n_max) {
      throw NumericalError("cutoff scan did not converge below n_max = " + std::to_string(scan.max_n_max));
    }
    const Liouvillian l(params, lattice, FockBasis(lattice.site_count(), n_max, beta), scan.max_dimension);
    std::optional<DensityMatrix> warm;
    if (previous) warm = previous->embed(n_max);
    SteadyStateResult ss = steady_state(l, scan.steady, warm ? &*warm : nullptr);
    const double pop = expectation(ss.rho, ExactObservable::population);
    out.cutoffs.push_back(n_max);
    out.populations.push_back(pop);
    if (out.populations.size() >= 2) {
      const double prev = out.populations[out.populations.size() - 2];
      if (std::abs(pop - prev) <= scan.relative_tolerance * std::abs(pop)) {
        check_cutoff(ss.rho);
        out.rho = std::move(ss.rho);
        out.population = pop;
        return out;
      }
    }
    previous = std::move(ss.rho);
    n_max += scan.increment;
  }
}

}  // namespace ddbh
