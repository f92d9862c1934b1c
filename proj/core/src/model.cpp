#include "ddbh/model.hpp"

#include <cmath>
#include <string>

#include "ddbh/error.hpp"

namespace ddbh {

void ModelParams::validate() const {
  for (double v : {delta, u, f, j_hop, gamma}) {
    if (!std::isfinite(v)) throw UsageError("model parameters must be finite");
  }
  if (gamma <= 0.0) throw UsageError("gamma must be positive");
  if (u < 0.0) throw UsageError("U must be non-negative");
  if (f < 0.0) throw UsageError("F must be non-negative (drive phase is fixed real)");
  if (z < 0) throw UsageError("coordination number must be non-negative");
}

std::string_view to_string(LatticeKind kind) {
  switch (kind) {
    case LatticeKind::site: return "site";
    case LatticeKind::dimer: return "dimer";
    case LatticeKind::ring: return "ring";
    case LatticeKind::torus: return "torus";
  }
  return "?";
}

LatticeKind lattice_kind_from_string(std::string_view name) {
  if (name == "site") return LatticeKind::site;
  if (name == "dimer") return LatticeKind::dimer;
  if (name == "ring") return LatticeKind::ring;
  if (name == "torus") return LatticeKind::torus;
  throw UsageError("unknown lattice kind '" + std::string(name) + "' (expected site|dimer|ring|torus)");
}

Lattice build_lattice(LatticeKind kind, int linear_size) {
  Lattice lat;
  lat.kind_ = kind;
  switch (kind) {
    case LatticeKind::site:
      if (linear_size != 0 && linear_size != 1) throw UsageError("site lattice has L = 1");
      lat.linear_size_ = 1;
      lat.coordination_ = 0;
      lat.site_count_ = 1;
      break;
    case LatticeKind::dimer:
      if (linear_size != 0 && linear_size != 2) throw UsageError("dimer lattice has L = 2");
      lat.linear_size_ = 2;
      lat.coordination_ = 2;
      lat.site_count_ = 2;
      lat.neighbors_ = {1, 1, 0, 0};
      break;
    case LatticeKind::ring: {
      if (linear_size < 3) {
        throw UsageError("ring needs L >= 3 (shorter periodic wraps double-count bonds; use 'dimer' for 2 sites)");
      }
      const auto n = static_cast<std::size_t>(linear_size);
      lat.linear_size_ = linear_size;
      lat.coordination_ = 2;
      lat.site_count_ = n;
      lat.neighbors_.reserve(2 * n);
      for (std::size_t s = 0; s < n; ++s) {
        lat.neighbors_.push_back((s + 1) % n);
        lat.neighbors_.push_back((s + n - 1) % n);
      }
      break;
    }
    case LatticeKind::torus: {
      if (linear_size < 2) throw UsageError("torus needs L >= 2");
      const auto l = static_cast<std::size_t>(linear_size);
      lat.linear_size_ = linear_size;
      lat.coordination_ = 4;
      lat.site_count_ = l * l;
      lat.neighbors_.reserve(4 * l * l);
      // site index = row * L + col
      for (std::size_t row = 0; row < l; ++row) {
        for (std::size_t col = 0; col < l; ++col) {
          lat.neighbors_.push_back(((row + 1) % l) * l + col);
          lat.neighbors_.push_back(((row + l - 1) % l) * l + col);
          lat.neighbors_.push_back(row * l + (col + 1) % l);
          lat.neighbors_.push_back(row * l + (col + l - 1) % l);
        }
      }
      break;
    }
  }
  return lat;
}

std::string Lattice::shape() const {
  if (kind_ == LatticeKind::torus) return std::to_string(linear_size_) + "x" + std::to_string(linear_size_);
  return std::to_string(linear_size_) + "x1";
}

ModelParams Lattice::params(double delta, double u, double f, double zj, double gamma) const {
  ModelParams p;
  p.delta = delta;
  p.u = u;
  p.f = f;
  p.gamma = gamma;
  p.z = coordination_;
  p.j_hop = coordination_ > 0 ? zj / coordination_ : 0.0;
  return p;
}

void Lattice::check(const ModelParams& params) const {
  params.validate();
  if (params.z != coordination_) {
    throw UsageError("model coordination z = " + std::to_string(params.z) + " does not match " +
                     std::string(to_string(kind_)) + " lattice (z = " + std::to_string(coordination_) + ")");
  }
}

void drift(const ModelParams& params, const Lattice& lattice, std::span<const complex> amplitudes,
           std::span<complex> out, Dynamics dynamics) {
  const std::size_t n = lattice.site_count();
  if (amplitudes.size() != n || out.size() != n) {
    throw UsageError("field state length does not match lattice site count");
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (!std::isfinite(amplitudes[s].real()) || !std::isfinite(amplitudes[s].imag())) {
      throw NumericalError("non-finite field amplitude at site " + std::to_string(s));
    }
  }
  detail::drift_unchecked(params, lattice, amplitudes.data(), out.data(),
                          dynamics == Dynamics::truncated_wigner ? 1.0 : 0.0);
}

std::vector<complex> drift(const ModelParams& params, const Lattice& lattice, const FieldState& state,
                           Dynamics dynamics) {
  std::vector<complex> out(state.amplitudes.size());
  drift(params, lattice, state.amplitudes, out, dynamics);
  return out;
}

}  // namespace ddbh
