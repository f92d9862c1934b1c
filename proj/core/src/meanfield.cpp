#include "ddbh/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "ddbh/error.hpp"

namespace ddbh {
namespace {

double horner(const std::array<double, 4>& c, double x) { return ((c[0] * x + c[1]) * x + c[2]) * x + c[3]; }

double horner_derivative(const std::array<double, 4>& c, double x) { return (3.0 * c[0] * x + 2.0 * c[1]) * x + c[2]; }

double polish(const std::array<double, 4>& c, double x) {
  double best = x;
  double best_res = std::abs(horner(c, x));
  for (int it = 0; it < 50 && best_res > 0.0; ++it) {
    const double d = horner_derivative(c, x);
    if (d == 0.0) break;
    const double next = x - horner(c, x) / d;
    const double res = std::abs(horner(c, next));
    x = next;
    if (res < best_res) {
      best = next;
      best_res = res;
    } else if (res >= best_res && it > 3) {
      break;
    }
  }
  return best;
}

int root_count(const ModelParams& p) { return static_cast<int>(meanfield_roots(p).size()); }

}  // namespace

std::array<double, 4> steady_state_cubic(const ModelParams& p) {
  const double d = p.delta + p.zj();
  return {p.u * p.u, -2.0 * p.u * d, d * d + 0.25 * p.gamma * p.gamma, -p.f * p.f};
}

std::vector<double> real_polynomial_roots(const std::array<double, 4>& c) {
  std::vector<double> roots;
  const double scale = std::max({std::abs(c[0]), std::abs(c[1]), std::abs(c[2]), std::abs(c[3])});
  if (scale == 0.0) return roots;
  const double tiny = 1e-14 * scale;
  if (std::abs(c[0]) > tiny) {
    Eigen::Matrix3d companion = Eigen::Matrix3d::Zero();
    companion(0, 0) = -c[1] / c[0];
    companion(0, 1) = -c[2] / c[0];
    companion(0, 2) = -c[3] / c[0];
    companion(1, 0) = 1.0;
    companion(2, 1) = 1.0;
    const Eigen::EigenSolver<Eigen::Matrix3d> solver(companion, false);
    for (const auto& ev : solver.eigenvalues()) {
      // Near a double root the pair splits into a complex pair of size
      // ~sqrt(eps); treat those as real and let Newton clean up.
      if (std::abs(ev.imag()) <= 1e-6 * (1.0 + std::abs(ev.real()))) roots.push_back(polish(c, ev.real()));
    }
  } else if (std::abs(c[1]) > tiny) {
    const double disc = c[2] * c[2] - 4.0 * c[1] * c[3];
    if (disc >= 0.0) {
      const double q = -0.5 * (c[2] + std::copysign(std::sqrt(disc), c[2]));
      if (q != 0.0) roots.push_back(polish(c, c[3] / q));
      roots.push_back(polish(c, q / c[1]));
    }
  } else if (std::abs(c[2]) > tiny) {
    roots.push_back(-c[3] / c[2]);
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

double cubic_discriminant(const ModelParams& p) {
  if (p.u == 0.0) return -1.0;
  const auto [a, b, c, d] = steady_state_cubic(p);
  return 18.0 * a * b * c * d - 4.0 * b * b * b * d + b * b * c * c - 4.0 * a * c * c * c - 27.0 * a * a * d * d;
}

std::array<complex, 2> stability_eigenvalues(const ModelParams& p, complex alpha) {
  const double d = p.delta + p.zj();
  const double n = std::norm(alpha);
  // d(da)/da = i(D - 2Un) - gamma/2, d(da)/da* = -i U a^2
  const complex diag(-0.5 * p.gamma, d - 2.0 * p.u * n);
  const complex off = complex(0.0, -p.u) * alpha * alpha;
  const complex root = std::sqrt(complex(std::norm(off) - diag.imag() * diag.imag(), 0.0));
  return {diag.real() + root, diag.real() - root};
}

std::vector<MeanFieldBranch> meanfield_roots(const ModelParams& p) {
  p.validate();
  const auto cubic = steady_state_cubic(p);
  const double d = p.delta + p.zj();
  std::vector<MeanFieldBranch> out;
  if (p.f == 0.0) {
    // the only non-negative root is the vacuum (remaining quadratic has
    // negative discriminant)
    out.push_back({0.0, complex{}, true});
    return out;
  }
  for (double n : real_polynomial_roots(cubic)) {
    if (n < 0.0) continue;
    MeanFieldBranch b;
    b.n = n;
    b.alpha = complex(0.0, p.f) / complex(-0.5 * p.gamma, d - p.u * n);
    const auto ev = stability_eigenvalues(p, b.alpha);
    b.stable = ev[0].real() < 0.0 && ev[1].real() < 0.0;
    out.push_back(b);
  }
  return out;
}

MeanFieldSweep meanfield_sweep(const ModelParams& tmpl, std::span<const double> f_values) {
  if (f_values.empty()) throw UsageError("meanfield sweep needs at least one F value");
  MeanFieldSweep sweep;
  sweep.points.reserve(f_values.size());
  for (double f : f_values) {
    if (!(f >= 0.0)) throw UsageError("F values must be non-negative");
    ModelParams p = tmpl;
    p.f = f;
    sweep.points.push_back({f, meanfield_roots(p)});
  }
  if (tmpl.u == 0.0 || f_values.size() < 2) return sweep;

  std::vector<double> grid(f_values.begin(), f_values.end());
  std::sort(grid.begin(), grid.end());
  auto disc_at = [&](double f) {
    ModelParams p = tmpl;
    p.f = f;
    return cubic_discriminant(p);
  };
  std::vector<double> spinodals;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    double lo = grid[i];
    double hi = grid[i + 1];
    double dlo = disc_at(lo);
    const double dhi = disc_at(hi);
    if ((dlo > 0.0) == (dhi > 0.0)) continue;
    while (hi - lo > 1e-6 * tmpl.gamma) {
      const double mid = 0.5 * (lo + hi);
      const double dmid = disc_at(mid);
      if ((dmid > 0.0) == (dlo > 0.0)) {
        lo = mid;
        dlo = dmid;
      } else {
        hi = mid;
      }
    }
    spinodals.push_back(0.5 * (lo + hi));
  }
  if (spinodals.size() == 2) {
    ModelParams p = tmpl;
    p.f = 0.5 * (spinodals[0] + spinodals[1]);
    if (root_count(p) == 3) sweep.bistable_window = std::array<double, 2>{spinodals[0], spinodals[1]};
  }
  return sweep;
}

}  // namespace ddbh
