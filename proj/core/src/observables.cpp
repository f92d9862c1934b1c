#include "ddbh/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ddbh/error.hpp"

namespace ddbh {
namespace {

struct TimeMoments {
  double count, m1, m2, k0;
  double var_m1, var_m2, var_k0, cov_m1_m2, cov_k0_m1;
};

TimeMoments moments_at(const MomentSums& s, std::size_t k) {
  const double c = s.count;
  TimeMoments t{};
  t.count = c;
  t.m1 = s.m1[k] / c;
  t.m2 = s.m2[k] / c;
  t.k0 = s.k0[k] / c;
  if (c > 1.0) {
    const double bessel = c / (c - 1.0);
    t.var_m1 = std::max(0.0, s.m1_sq[k] / c - t.m1 * t.m1) * bessel;
    t.var_m2 = std::max(0.0, s.m2_sq[k] / c - t.m2 * t.m2) * bessel;
    t.var_k0 = std::max(0.0, s.k0_sq[k] / c - t.k0 * t.k0) * bessel;
    t.cov_m1_m2 = (s.m1_m2[k] / c - t.m1 * t.m2) * bessel;
    t.cov_k0_m1 = (s.k0_m1[k] / c - t.k0 * t.m1) * bessel;
  }
  return t;
}

ObservableSeries empty_series(const EnsembleResult& e, ObservableKind kind) {
  ObservableSeries s;
  s.kind = kind;
  s.times = e.times;
  s.value.assign(e.times.size(), std::numeric_limits<double>::quiet_NaN());
  s.std_error.assign(e.times.size(), 0.0);
  s.valid.assign(e.times.size(), false);
  return s;
}

}  // namespace

std::string_view to_string(ObservableKind kind) {
  switch (kind) {
    case ObservableKind::population: return "population";
    case ObservableKind::f0: return "f0";
    case ObservableKind::g2: return "g2";
    case ObservableKind::custom: return "custom";
  }
  return "?";
}

ObservableSeries ObservableSeries::slice(std::size_t first, std::size_t last) const {
  last = std::min(last, size());
  first = std::min(first, last);
  ObservableSeries out;
  out.kind = kind;
  out.times.assign(times.begin() + first, times.begin() + last);
  out.value.assign(value.begin() + first, value.begin() + last);
  out.std_error.assign(std_error.begin() + first, std_error.begin() + last);
  out.valid.assign(valid.begin() + first, valid.begin() + last);
  return out;
}

double wigner_to_population(double mean_abs2_w) { return mean_abs2_w - 0.5; }

double wigner_to_pair_correlation(double mean_abs2_w, double mean_abs4_w) {
  return mean_abs4_w - 2.0 * mean_abs2_w + 0.5;
}

ObservableSeries population(const EnsembleResult& e) {
  if (e.moments.count < 2.0) throw UsageError("population needs at least 2 valid trajectories");
  ObservableSeries s = empty_series(e, ObservableKind::population);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const TimeMoments t = moments_at(e.moments, k);
    s.value[k] = wigner_to_population(t.m1);
    s.std_error[k] = std::sqrt(t.var_m1 / t.count);
    s.valid[k] = true;
  }
  return s;
}

ObservableSeries condensate_fraction(const EnsembleResult& e) {
  ObservableSeries s = empty_series(e, ObservableKind::f0);
  const double n_sites = static_cast<double>(e.n_sites);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const TimeMoments t = moments_at(e.moments, k);
    const double n_k0 = t.k0 - 0.5;
    const double n_tot = n_sites * (t.m1 - 0.5);
    if (!(n_tot > 0.0)) continue;
    const double ratio = n_k0 / n_tot;
    // delta method: d/dk0 = 1/n_tot, d/dm1 = -ratio N / n_tot
    const double var = (t.var_k0 - 2.0 * ratio * n_sites * t.cov_k0_m1 + ratio * ratio * n_sites * n_sites * t.var_m1) /
                       (n_tot * n_tot);
    s.value[k] = ratio;
    s.std_error[k] = std::sqrt(std::max(0.0, var) / t.count);
    s.valid[k] = true;
  }
  return s;
}

ObservableSeries g2_local(const EnsembleResult& e) {
  ObservableSeries s = empty_series(e, ObservableKind::g2);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const TimeMoments t = moments_at(e.moments, k);
    const double n = wigner_to_population(t.m1);
    const double se_n = std::sqrt(t.var_m1 / t.count);
    if (!(n > 0.0) || n <= 2.0 * se_n) continue;
    const double pair = wigner_to_pair_correlation(t.m1, t.m2);
    const double g2 = pair / (n * n);
    const double d_m2 = 1.0 / (n * n);
    const double d_m1 = -2.0 / (n * n) - 2.0 * pair / (n * n * n);
    const double var = d_m2 * d_m2 * t.var_m2 + 2.0 * d_m2 * d_m1 * t.cov_m1_m2 + d_m1 * d_m1 * t.var_m1;
    s.value[k] = g2;
    s.std_error[k] = std::sqrt(std::max(0.0, var) / t.count);
    s.valid[k] = true;
  }
  return s;
}

double steady_state_onset(const ObservableSeries& series) {
  if (series.size() == 0) throw UsageError("empty series");
  const std::size_t last = series.size() - 1;
  const double ref = series.value[last];
  const double ref_se = series.std_error[last];
  std::size_t onset = last;
  for (std::size_t k = last + 1; k-- > 0;) {
    const double tol = 3.0 * std::hypot(series.std_error[k], ref_se);
    if (!(std::abs(series.value[k] - ref) < tol) && k != last) break;
    onset = k;
  }
  return series.times[onset];
}

SteadyValue steady_population(const EnsembleResult& e, double t_start) {
  const auto first = static_cast<std::size_t>(std::lower_bound(e.times.begin(), e.times.end(), t_start) -
                                              e.times.begin());
  if (first >= e.times.size()) throw NumericalError("no recorded samples after t_start");
  SteadyValue out;
  out.samples = e.times.size() - first;
  const double span = static_cast<double>(out.samples);
  std::vector<double> group_means;
  std::vector<double> group_weights;
  for (std::size_t g = 0; g < e.group_m1.size(); ++g) {
    if (e.group_count[g] <= 0.0) continue;
    double acc = 0.0;
    for (std::size_t k = first; k < e.times.size(); ++k) acc += e.group_m1[g][k];
    group_means.push_back(acc / (span * e.group_count[g]));
    group_weights.push_back(e.group_count[g]);
  }
  const double w_total = std::accumulate(group_weights.begin(), group_weights.end(), 0.0);
  double mean = 0.0;
  for (std::size_t g = 0; g < group_means.size(); ++g) mean += group_weights[g] * group_means[g];
  mean /= w_total;
  out.value = wigner_to_population(mean);
  const std::size_t n_groups = group_means.size();
  if (n_groups > 1) {
    // weighted between-group variance of the mean
    double ss = 0.0;
    for (std::size_t g = 0; g < n_groups; ++g) {
      const double d = group_means[g] - mean;
      ss += group_weights[g] * group_weights[g] * d * d;
    }
    out.std_error = std::sqrt(ss * static_cast<double>(n_groups) / static_cast<double>(n_groups - 1)) / w_total;
  }
  return out;
}

std::vector<double> PopulationHistogram::bin_centers() const {
  std::vector<double> c(probability.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * (bin_edges[i] + bin_edges[i + 1]);
  return c;
}

PopulationHistogram histogram_from_samples(const std::vector<double>& samples, std::size_t bins) {
  if (samples.empty()) throw NumericalError("histogram has no samples");
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  double hi = sorted.back();
  const auto n = static_cast<double>(sorted.size());
  if (bins == 0) {
    auto quantile = [&](double q) {
      const double pos = q * (n - 1.0);
      const auto i = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(i);
      return i + 1 < sorted.size() ? sorted[i] * (1.0 - frac) + sorted[i + 1] * frac : sorted[i];
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    const double width = 2.0 * iqr / std::cbrt(n);
    bins = width > 0.0 ? static_cast<std::size_t>(std::ceil((hi - lo) / width)) : 1;
    bins = std::clamp<std::size_t>(bins, 1, 10000);
  }
  if (hi == lo) hi = lo + 1.0;
  PopulationHistogram h;
  h.samples = sorted.size();
  h.bin_edges.resize(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) h.bin_edges[i] = lo + width * static_cast<double>(i);
  h.bin_edges.back() = hi;
  std::vector<std::size_t> counts(bins, 0);
  for (double x : sorted) {
    auto i = static_cast<std::size_t>((x - lo) / width);
    counts[std::min(i, bins - 1)]++;
  }
  h.probability.resize(bins);
  for (std::size_t i = 0; i < bins; ++i) h.probability[i] = static_cast<double>(counts[i]) / n;
  h.mean_raw = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  h.mean_corrected = wigner_to_population(h.mean_raw);
  return h;
}

PopulationHistogram histogram_p_of_n(const EnsembleResult& e, double t_start, std::size_t bins) {
  if (!e.config.keep_series) {
    throw UsageError("p(n) needs every trajectory's series; run the ensemble with keep_series");
  }
  std::vector<double> samples;
  for (const auto& r : e.records) {
    for (std::size_t k = 0; k < r.times.size(); ++k) {
      if (r.times[k] > t_start) samples.push_back(r.site_avg_population_w[k]);
    }
  }
  if (samples.empty()) throw NumericalError("no samples after t_s = " + std::to_string(t_start));
  PopulationHistogram h = histogram_from_samples(samples, bins);
  h.t_start = t_start;
  return h;
}

std::size_t Modality::count(double min_ratio) const {
  return static_cast<std::size_t>(
      std::count_if(peaks.begin(), peaks.end(), [&](const Peak& p) { return p.dip_ratio >= min_ratio; }));
}

double Modality::strongest_secondary_ratio() const {
  double best = 0.0;
  for (std::size_t i = 1; i < peaks.size(); ++i) best = std::max(best, peaks[i].dip_ratio);
  return best;
}

Modality analyze_modality(const PopulationHistogram& h, double min_relative_height) {
  const std::size_t n = h.probability.size();
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = h.probability[i];
    double w = 1.0;
    if (i > 0) acc += h.probability[i - 1], w += 1.0;
    if (i + 1 < n) acc += h.probability[i + 1], w += 1.0;
    p[i] = acc / w;
  }
  Modality m;
  for (std::size_t i = 0; i < n; ++i) {
    const bool left_ok = i == 0 || p[i] > p[i - 1];
    // plateaus count once, at their left end
    std::size_t j = i;
    while (j + 1 < n && p[j + 1] == p[i]) ++j;
    const bool right_ok = j + 1 == n || p[i] > p[j + 1];
    if (left_ok && right_ok && p[i] > 0.0) m.peaks.push_back({i, p[i], 0.0});
    i = j;
  }
  double top = 0.0;
  for (const auto& peak : m.peaks) top = std::max(top, peak.height);
  std::erase_if(m.peaks, [&](const Modality::Peak& peak) { return peak.height < min_relative_height * top; });
  for (auto& peak : m.peaks) {
    // Each side's base is its minimum up to the first strictly higher bin;
    // a side that reaches the edge of the support bottoms out at zero. The
    // col separating the peak from higher ground is the larger base.
    double left_min = peak.height;
    bool left_higher = false;
    for (std::size_t k = peak.bin; k-- > 0;) {
      if (p[k] > peak.height) {
        left_higher = true;
        break;
      }
      left_min = std::min(left_min, p[k]);
    }
    double right_min = peak.height;
    bool right_higher = false;
    for (std::size_t k = peak.bin + 1; k < n; ++k) {
      if (p[k] > peak.height) {
        right_higher = true;
        break;
      }
      right_min = std::min(right_min, p[k]);
    }
    if (!left_higher && !right_higher) {
      peak.dip_ratio = std::numeric_limits<double>::infinity();
      continue;
    }
    if (!left_higher) left_min = 0.0;
    if (!right_higher) right_min = 0.0;
    const double col = std::max(left_min, right_min);
    peak.dip_ratio = col > 0.0 ? peak.height / col : std::numeric_limits<double>::infinity();
  }
  std::sort(m.peaks.begin(), m.peaks.end(), [](const auto& a, const auto& b) { return a.height > b.height; });
  return m;
}

}  // namespace ddbh
