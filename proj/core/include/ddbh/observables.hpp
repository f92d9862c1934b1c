#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "ddbh/twa.hpp"

namespace ddbh {

enum class ObservableKind { population, f0, g2, custom };

std::string_view to_string(ObservableKind kind);

/// Ensemble-averaged time series with 1-sigma statistical errors. `valid[k]`
/// is false where the observable is undefined (e.g. g2 at zero population).
struct ObservableSeries {
  ObservableKind kind = ObservableKind::custom;
  std::vector<double> times;
  std::vector<double> value;
  std::vector<double> std_error;
  std::vector<bool> valid;

  std::size_t size() const { return times.size(); }
  /// Copy restricted to indices [first, last).
  ObservableSeries slice(std::size_t first, std::size_t last) const;
};

/// Normally ordered population per site, <a^dag a> = <|a|^2>_W - 1/2,
/// averaged over sites. Needs at least 2 valid trajectories.
ObservableSeries population(const EnsembleResult& ensemble);

/// Fraction of the population in the k = 0 mode, n_k0 / n_tot with
/// n_k0 = <|b0|^2>_W - 1/2 and n_tot = N (<m1>_W - 1/2). Invalid where
/// n_tot <= 0.
ObservableSeries condensate_fraction(const EnsembleResult& ensemble);

/// Site-averaged local g2(0) = <a^dag^2 a^2> / <a^dag a>^2 with
/// <a^dag^2 a^2> = <|a|^4>_W - 2<|a|^2>_W + 1/2. Invalid where the
/// population is not significantly positive.
ObservableSeries g2_local(const EnsembleResult& ensemble);

/// Wigner moment conversions, exposed for cross-checks against exact
/// density matrices.
double wigner_to_population(double mean_abs2_w);
double wigner_to_pair_correlation(double mean_abs2_w, double mean_abs4_w);

/// Steady-state onset: the earliest recorded time after which
/// |n(t) - n(t_end)| < 3 SE holds for the rest of the series.
double steady_state_onset(const ObservableSeries& series);

/// Time- and ensemble-averaged normally ordered population over recorded
/// times >= t_start. The SE comes from the spread of the per-group time
/// averages (groups are independent), so serial correlation within a
/// trajectory is accounted for.
struct SteadyValue {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};
SteadyValue steady_population(const EnsembleResult& ensemble, double t_start);

struct PopulationHistogram {
  std::vector<double> bin_edges;    ///< size = bins + 1
  std::vector<double> probability;  ///< normalized to unit mass
  double t_start = 0.0;
  std::size_t samples = 0;
  double mean_raw = 0.0;        ///< mean of the histogrammed raw Wigner samples
  double mean_corrected = 0.0;  ///< mean_raw - 1/2

  std::vector<double> bin_centers() const;
};

/// Histogram of the site-averaged raw Wigner population over every kept
/// trajectory and every recorded time > t_start. bins = 0 selects the
/// Freedman-Diaconis rule. Throws UsageError if the trajectories' series
/// were not kept and NumericalError if no samples fall after t_start.
PopulationHistogram histogram_p_of_n(const EnsembleResult& ensemble, double t_start, std::size_t bins = 0);

/// Same, on an explicit sample set.
PopulationHistogram histogram_from_samples(const std::vector<double>& samples, std::size_t bins = 0);

/// Peaks of a histogram ranked by height, each with the deepest dip separating
/// it from a higher peak (topographic prominence, expressed as a ratio).
struct Modality {
  struct Peak {
    std::size_t bin = 0;
    double height = 0.0;
    /// height / (lowest probability between this peak and the nearest
    /// higher one); infinity for the global maximum
    double dip_ratio = 0.0;
  };
  std::vector<Peak> peaks;  ///< local maxima after 3-bin smoothing, highest first

  /// Number of peaks whose dip ratio is at least `min_ratio`.
  std::size_t count(double min_ratio) const;
  /// Largest dip ratio among the secondary peaks (0 if there is only one).
  double strongest_secondary_ratio() const;
};

/// Local maxima lower than min_relative_height times the highest one are
/// treated as sampling noise and dropped.
Modality analyze_modality(const PopulationHistogram& histogram, double min_relative_height = 0.02);

}  // namespace ddbh
