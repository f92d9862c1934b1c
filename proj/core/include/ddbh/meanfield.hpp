#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "ddbh/model.hpp"

namespace ddbh {

/// One homogeneous Gross-Pitaevskii fixed point.
struct MeanFieldBranch {
  double n = 0.0;  ///< |alpha|^2 per site
  complex alpha;
  bool stable = false;
};

/// Coefficients (highest degree first) of the steady-state cubic
///   U^2 n^3 - 2 U D n^2 + (D^2 + gamma^2/4) n - F^2 = 0,   D = delta + zJ.
/// For U = 0 the leading coefficients vanish and the equation is linear.
std::array<double, 4> steady_state_cubic(const ModelParams& params);

/// Real roots of c[0] x^3 + c[1] x^2 + c[2] x + c[3] via eigenvalues of the
/// companion matrix, each polished by Newton iteration. Degenerate leading
/// coefficients fall back to the lower-degree polynomial. Sorted ascending.
std::vector<double> real_polynomial_roots(const std::array<double, 4>& coefficients);

/// Discriminant of the (genuinely) cubic steady-state equation; positive in
/// the three-root window. Returns -1 when U = 0.
double cubic_discriminant(const ModelParams& params);

/// Eigenvalues of the homogeneous-perturbation Jacobian at amplitude alpha.
std::array<complex, 2> stability_eigenvalues(const ModelParams& params, complex alpha);

/// All non-negative homogeneous fixed points in increasing n (1 to 3
/// entries), with stability from the 2x2 Jacobian of the (alpha, alpha*)
/// dynamics.
std::vector<MeanFieldBranch> meanfield_roots(const ModelParams& params);

struct MeanFieldPoint {
  double f = 0.0;
  std::vector<MeanFieldBranch> branches;
};

struct MeanFieldSweep {
  std::vector<MeanFieldPoint> points;
  /// Drive amplitudes where the root count changes (1->3 then 3->1), refined
  /// by bisection; empty when no change is seen on the grid.
  std::optional<std::array<double, 2>> bistable_window;
};

/// Evaluates meanfield_roots for every drive in `f_values` (template's f is
/// ignored). Throws UsageError on an empty or negative grid.
MeanFieldSweep meanfield_sweep(const ModelParams& param_template, std::span<const double> f_values);

}  // namespace ddbh
