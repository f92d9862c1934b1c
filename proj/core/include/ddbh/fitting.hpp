#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddbh/observables.hpp"
#include "ddbh/twa.hpp"

namespace ddbh {

/// n(t) = n_ss + A exp(-lambda t) fitted on a late-time window.
struct ExpFit {
  double lambda = 0.0;
  double amplitude = 0.0;  ///< A, referred to t = 0
  double n_ss = 0.0;
  double t_lo = 0.0;  ///< first point of the fit window
  double t_hi = 0.0;  ///< last point with |n - n_ss| above the noise floor
  double lambda_err = 0.0;             ///< bootstrap 1-sigma when available, else asymptotic
  double lambda_err_asymptotic = 0.0;  ///< from the least-squares covariance
  double log_linear_r2 = 0.0;          ///< R^2 of log|n - n_ss| vs t on [t_lo, t_hi]
  std::size_t points = 0;
  double residual_lag1 = 0.0;  ///< lag-1 autocorrelation of weighted residuals
  bool residuals_white = false;
  std::size_t bootstrap_samples = 0;
};

struct ExpFitOptions {
  std::optional<double> n_ss_hint;
  /// Manual (t_lo, t_hi) override of the automatic window search; the fit
  /// then uses every point in [t_lo, end of series].
  std::optional<std::pair<double, double>> window;
  double min_r2 = 0.99;
  /// |n - n_ss| must exceed this many standard errors to count as signal.
  double noise_floor_sigmas = 3.0;
  std::size_t min_points = 6;
  /// Signal span required inside the window: this many e-folds of lambda
  /// (or two decades of |n - n_ss|).
  double min_efolds = 3.0;
};

/// Least-squares fit with automatic window selection: the window end is the
/// first time |n - n_ss| falls into the noise floor, the start is the
/// earliest time from which log|n - n_ss| stays linear (R^2 > min_r2). The
/// three parameters are then fitted jointly on [t_lo, end of series],
/// weighted by 1/SE^2 when errors are present. Throws NumericalError
/// ("asymptotic regime not reached") when no such window exists.
ExpFit fit_exponential(const ObservableSeries& series, const ExpFitOptions& options = {});

/// Per-group sums of a series over independent groups of trajectories.
struct GroupedSeries {
  std::vector<double> times;
  std::vector<std::vector<double>> group_sum;  ///< [group][time]
  std::vector<double> group_count;
  double offset = 0.0;  ///< added to each group-mean value (e.g. -1/2)

  static GroupedSeries from_ensemble(const EnsembleResult& ensemble);
  /// Mean and SE (group-to-group) series over the given group multiset.
  ObservableSeries mean_series(std::span<const std::size_t> groups) const;
  ObservableSeries mean_series() const;
};

/// Point fit on the pooled series plus a bootstrap over groups (resampled
/// with replacement, window held fixed) for lambda_err.
ExpFit fit_exponential_bootstrap(const GroupedSeries& data, const ExpFitOptions& options = {},
                                 std::size_t resamples = 200, std::uint64_t seed = 0x5eed);

/// Decay-rate fit of an ensemble's population, with trajectory-level SE for
/// the weights and a group bootstrap for lambda_err.
ExpFit fit_gap(const EnsembleResult& ensemble, const ExpFitOptions& options = {}, std::size_t resamples = 200,
               std::uint64_t seed = 0x5eed);

struct GapPoint {
  double f = 0.0;
  bool ok = false;
  ExpFit fit;
  std::string error;  ///< set when !ok
};

struct GapMinimum {
  double f = 0.0;
  double lambda = 0.0;
  double lambda_err = 0.0;
  bool refined = false;  ///< true when the parabola vertex was used
};

struct GapScan {
  std::vector<GapPoint> points;
  std::optional<GapMinimum> minimum;
};

/// Minimum of lambda(F) over successful points, refined by a 3-point
/// parabola in log(lambda) when the grid minimum is interior.
std::optional<GapMinimum> gap_minimum(std::span<const GapPoint> points);

/// Vacuum-start ensembles at every F, each fitted with fit_gap. Fit
/// failures are recorded per point; engine failures propagate.
GapScan gap_vs_drive(const ModelParams& param_template, std::span<const double> f_values, const Lattice& lattice,
                     const EngineConfig& config, const ExpFitOptions& options = {}, std::size_t resamples = 200);

struct PowerLawFit {
  double eta = 0.0;        ///< min_lambda ~ prefactor * L^-eta
  double prefactor = 0.0;
  double eta_err = 0.0;
  double chi2_per_dof = 0.0;
};

/// Weighted regression of log(lambda) on log(L) with sigma = err / lambda
/// (unweighted when any error is zero). Errors are scaled by
/// sqrt(max(1, chi2/dof)). Needs at least 3 positive points.
PowerLawFit fit_power_law(std::span<const double> sizes, std::span<const double> gap_minima,
                          std::span<const double> gap_errors = {});

}  // namespace ddbh
