#include "ddbh/fitting.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <boost/math/tools/minima.hpp>

#include "ddbh/error.hpp"

namespace ddbh {
namespace {

struct Points {
  std::vector<double> t, y, se;
};

Points valid_points(const ObservableSeries& s) {
  Points p;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!s.valid.empty() && !s.valid[k]) continue;
    if (!std::isfinite(s.value[k])) continue;
    p.t.push_back(s.times[k]);
    p.y.push_back(s.value[k]);
    p.se.push_back(s.std_error.empty() ? 0.0 : s.std_error[k]);
  }
  return p;
}

struct Model {
  double n_ss, amplitude_ref, lambda, rss;
};

/// For fixed lambda, (n_ss, A) by weighted linear least squares on [first, end).
Model linear_part(const Points& p, std::span<const double> w, std::size_t first, double lambda, double t_ref) {
  double sw = 0, se = 0, see = 0, sy = 0, sey = 0;
  for (std::size_t k = first; k < p.t.size(); ++k) {
    const double e = std::exp(-lambda * (p.t[k] - t_ref));
    sw += w[k];
    se += w[k] * e;
    see += w[k] * e * e;
    sy += w[k] * p.y[k];
    sey += w[k] * e * p.y[k];
  }
  const double det = sw * see - se * se;
  Model m{};
  m.lambda = lambda;
  if (!(std::abs(det) > 0.0)) {
    m.rss = std::numeric_limits<double>::infinity();
    return m;
  }
  m.n_ss = (see * sy - se * sey) / det;
  m.amplitude_ref = (sw * sey - se * sy) / det;
  double rss = 0.0;
  for (std::size_t k = first; k < p.t.size(); ++k) {
    const double r = p.y[k] - m.n_ss - m.amplitude_ref * std::exp(-lambda * (p.t[k] - t_ref));
    rss += w[k] * r * r;
  }
  m.rss = rss;
  return m;
}

Model nonlinear_fit(const Points& p, std::span<const double> w, std::size_t first, double lambda_guess) {
  const double t_ref = p.t[first];
  const double lo = std::log(lambda_guess) - std::log(30.0);
  const double hi = std::log(lambda_guess) + std::log(30.0);
  auto objective = [&](double log_lambda) { return linear_part(p, w, first, std::exp(log_lambda), t_ref).rss; };
  const auto [best, value] = boost::math::tools::brent_find_minima(objective, lo, hi, 52);
  (void)value;
  return linear_part(p, w, first, std::exp(best), t_ref);
}

/// Inverse of a symmetric 3x3 matrix; returns false if singular.
bool invert3(const std::array<double, 9>& m, std::array<double, 9>& inv) {
  const double c00 = m[4] * m[8] - m[5] * m[7];
  const double c01 = m[5] * m[6] - m[3] * m[8];
  const double c02 = m[3] * m[7] - m[4] * m[6];
  const double det = m[0] * c00 + m[1] * c01 + m[2] * c02;
  if (!(std::abs(det) > 0.0)) return false;
  inv = {c00 / det,
         (m[2] * m[7] - m[1] * m[8]) / det,
         (m[1] * m[5] - m[2] * m[4]) / det,
         c01 / det,
         (m[0] * m[8] - m[2] * m[6]) / det,
         (m[2] * m[3] - m[0] * m[5]) / det,
         c02 / det,
         (m[1] * m[6] - m[0] * m[7]) / det,
         (m[0] * m[4] - m[1] * m[3]) / det};
  return true;
}

struct Window {
  std::size_t first = 0, end = 0;  // log-linear segment [first, end)
  double r2 = 0.0;
  double slope = 0.0;
};

/// Log-linear runs up to the noise floor that satisfy the R^2 and span
/// requirements, in order of their start.
std::vector<Window> candidate_windows(const Points& p, double n_ss, double n_ss_se, const ExpFitOptions& opt) {
  std::vector<Window> out;
  const std::size_t n = p.t.size();
  std::vector<double> d(n);
  double d_max = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    d[k] = std::abs(p.y[k] - n_ss);
    d_max = std::max(d_max, d[k]);
  }
  if (!(d_max > 0.0)) return out;
  std::vector<bool> signal(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double floor =
        std::max(opt.noise_floor_sigmas * std::hypot(p.se[k], n_ss_se), 1e-10 * d_max);
    signal[k] = d[k] > floor;
  }
  // next_quiet[k]: first index >= k without signal
  std::vector<std::size_t> next_quiet(n + 1, n);
  for (std::size_t k = n; k-- > 0;) next_quiet[k] = signal[k] ? next_quiet[k + 1] : k;

  std::vector<double> ly(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) ly[k] = signal[k] ? std::log(d[k]) : 0.0;
  std::vector<double> st(n + 1, 0), sy(n + 1, 0), stt(n + 1, 0), syy(n + 1, 0), sty(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) {
    st[k + 1] = st[k] + p.t[k];
    sy[k + 1] = sy[k] + ly[k];
    stt[k + 1] = stt[k] + p.t[k] * p.t[k];
    syy[k + 1] = syy[k] + ly[k] * ly[k];
    sty[k + 1] = sty[k] + p.t[k] * ly[k];
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (!signal[s]) continue;
    const std::size_t e = next_quiet[s];
    const std::size_t m = e - s;
    if (m < opt.min_points) continue;
    const double cnt = static_cast<double>(m);
    const double mt = (st[e] - st[s]) / cnt;
    const double my = (sy[e] - sy[s]) / cnt;
    const double vtt = (stt[e] - stt[s]) / cnt - mt * mt;
    const double vyy = (syy[e] - syy[s]) / cnt - my * my;
    const double vty = (sty[e] - sty[s]) / cnt - mt * my;
    if (!(vtt > 0.0) || !(vyy > 0.0)) continue;
    const double slope = vty / vtt;
    const double r2 = vty * vty / (vtt * vyy);
    if (!(slope < 0.0) || r2 <= opt.min_r2) continue;
    const double efolds = -slope * (p.t[e - 1] - p.t[s]);
    if (efolds < opt.min_efolds && efolds < 2.0 * std::log(10.0)) continue;
    out.push_back(Window{s, e, r2, slope});
  }
  return out;
}

ExpFit finish_fit(const Points& p, std::span<const double> w, bool weighted, std::size_t first,
                  std::size_t signal_end, double r2, const Model& m) {
  ExpFit fit;
  const double t_ref = p.t[first];
  fit.lambda = m.lambda;
  fit.n_ss = m.n_ss;
  fit.amplitude = m.amplitude_ref * std::exp(m.lambda * t_ref);
  fit.t_lo = t_ref;
  fit.t_hi = p.t[signal_end - 1];
  fit.log_linear_r2 = r2;
  fit.points = p.t.size() - first;

  // Gauss-Newton covariance in (n_ss, A_ref, lambda)
  std::array<double, 9> jtj{};
  std::vector<double> resid;
  for (std::size_t k = first; k < p.t.size(); ++k) {
    const double e = std::exp(-m.lambda * (p.t[k] - t_ref));
    const std::array<double, 3> g{1.0, e, -m.amplitude_ref * (p.t[k] - t_ref) * e};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) jtj[i * 3 + j] += w[k] * g[i] * g[j];
    }
    resid.push_back(std::sqrt(w[k]) * (p.y[k] - m.n_ss - m.amplitude_ref * e));
  }
  const double dof = static_cast<double>(fit.points) - 3.0;
  std::array<double, 9> cov{};
  if (dof > 0.0 && invert3(jtj, cov)) {
    const double chi2 = m.rss / dof;
    const double scale = weighted ? std::max(1.0, chi2) : chi2;
    fit.lambda_err_asymptotic = std::sqrt(std::max(0.0, cov[8] * scale));
  }
  fit.lambda_err = fit.lambda_err_asymptotic;

  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < resid.size(); ++k) {
    den += resid[k] * resid[k];
    if (k > 0) num += resid[k] * resid[k - 1];
  }
  fit.residual_lag1 = den > 0.0 ? num / den : 0.0;
  fit.residuals_white = std::abs(fit.residual_lag1) < 2.0 / std::sqrt(static_cast<double>(resid.size()));
  return fit;
}

/// Earliest start inside a candidate window whose fitted rate is stable:
/// refitting from one e-fold later moves lambda by less than 2% or twice the
/// later fit's error (inflated for residual autocorrelation). Early fast
/// transients bias the joint fit and fail this test; the start then moves
/// forward by a quarter e-fold while the rest of the window still spans the
/// required number of e-folds.
std::optional<std::pair<Window, ExpFit>> select_window(const Points& p, std::span<const double> w, bool weighted,
                                                       double n_ss, double n_ss_se, const ExpFitOptions& opt) {
  const auto candidates = candidate_windows(p, n_ss, n_ss_se, opt);
  double skip_until = -std::numeric_limits<double>::infinity();
  for (const Window& c : candidates) {
    if (p.t[c.first] < skip_until) continue;
    double guess = -c.slope;
    for (std::size_t first = c.first; first + opt.min_points < c.end;) {
      const Model m = nonlinear_fit(p, w, first, guess);
      const ExpFit fit = finish_fit(p, w, weighted, first, c.end, c.r2, m);
      if (!(fit.lambda > 0.0)) break;
      const double efolds = fit.lambda * (p.t[c.end - 1] - p.t[first]);
      if (first != c.first && efolds < opt.min_efolds && efolds < 2.0 * std::log(10.0)) break;
      const double t_later = p.t[first] + 1.0 / fit.lambda;
      const auto later =
          static_cast<std::size_t>(std::lower_bound(p.t.begin(), p.t.end(), t_later) - p.t.begin());
      if (later + opt.min_points >= c.end) {
        // too short to test; only an untouched candidate is taken as is
        if (first == c.first) return std::make_pair(c, fit);
        break;
      }
      const Model m2 = nonlinear_fit(p, w, later, fit.lambda);
      const ExpFit fit2 = finish_fit(p, w, weighted, later, c.end, c.r2, m2);
      // serially correlated residuals: AR(1) effective-sample-size correction
      const double rho = std::clamp(fit2.residual_lag1, 0.0, 0.999);
      const double err2 = fit2.lambda_err_asymptotic * std::sqrt((1.0 + rho) / (1.0 - rho));
      const double tol = std::max(0.02 * fit.lambda, 2.0 * err2);
      if (std::abs(fit2.lambda - fit.lambda) <= tol) {
        Window chosen = c;
        chosen.first = first;
        return std::make_pair(chosen, fit);
      }
      const double t_next = p.t[first] + 0.25 / std::max(fit.lambda, fit2.lambda);
      skip_until = std::max(skip_until, t_next);
      guess = fit2.lambda;
      const auto next =
          static_cast<std::size_t>(std::lower_bound(p.t.begin(), p.t.end(), t_next) - p.t.begin());
      first = std::max(next, first + 1);
    }
  }
  return std::nullopt;
}

}  // namespace

ExpFit fit_exponential(const ObservableSeries& series, const ExpFitOptions& opt) {
  const Points p = valid_points(series);
  const std::size_t n = p.t.size();
  if (n < opt.min_points + 1) throw NumericalError("asymptotic regime not reached: series too short");
  const bool weighted = std::all_of(p.se.begin(), p.se.end(), [](double s) { return s > 0.0; });
  std::vector<double> w(n, 1.0);
  if (weighted) {
    for (std::size_t k = 0; k < n; ++k) w[k] = 1.0 / (p.se[k] * p.se[k]);
  }

  if (opt.window) {
    const auto [t_lo, t_hi] = *opt.window;
    const auto first = static_cast<std::size_t>(std::lower_bound(p.t.begin(), p.t.end(), t_lo) - p.t.begin());
    auto end = static_cast<std::size_t>(std::upper_bound(p.t.begin(), p.t.end(), t_hi) - p.t.begin());
    end = std::max(end, first + 1);
    if (n - first < 4 || end <= first + 1) throw NumericalError("manual fit window holds too few points");
    // initial rate from the endpoints of the window relative to the tail
    const double tail = p.y.back();
    const double d0 = std::abs(p.y[first] - tail);
    const double d1 = std::abs(p.y[end - 1] - tail);
    double guess = (d0 > 0.0 && d1 > 0.0 && d0 != d1) ? std::abs(std::log(d0 / d1)) / (p.t[end - 1] - p.t[first])
                                                       : 1.0 / (p.t.back() - p.t[first]);
    if (!(guess > 0.0) || !std::isfinite(guess)) guess = 1.0 / (p.t.back() - p.t[first]);
    const Model m = nonlinear_fit(p, w, first, guess);
    return finish_fit(p, w, weighted, first, end, 0.0, m);
  }

  // initial n_ss from the last 20% of the series
  const std::size_t tail = std::max<std::size_t>(1, n / 5);
  double n_ss = 0.0;
  std::vector<double> tail_se;
  for (std::size_t k = n - tail; k < n; ++k) {
    n_ss += p.y[k];
    tail_se.push_back(p.se[k]);
  }
  n_ss /= static_cast<double>(tail);
  std::nth_element(tail_se.begin(), tail_se.begin() + tail_se.size() / 2, tail_se.end());
  double n_ss_se = opt.n_ss_hint ? 0.0 : tail_se[tail_se.size() / 2] / std::sqrt(static_cast<double>(tail));
  if (opt.n_ss_hint) n_ss = *opt.n_ss_hint;

  std::optional<Window> window;
  std::optional<ExpFit> fit;
  for (int iter = 0; iter < 6; ++iter) {
    const auto next = select_window(p, w, weighted, n_ss, n_ss_se, opt);
    if (!next) break;
    if (window && fit && next->first.first == window->first && next->first.end == window->end) break;
    window = next->first;
    fit = next->second;
    n_ss = fit->n_ss;
    n_ss_se = 0.0;
  }
  if (!fit) throw NumericalError("asymptotic regime not reached: no log-linear late-time window");
  if (!(fit->lambda > 0.0)) throw NumericalError("asymptotic regime not reached: non-positive decay rate");
  return *fit;
}

GroupedSeries GroupedSeries::from_ensemble(const EnsembleResult& e) {
  GroupedSeries g;
  g.times = e.times;
  g.group_sum = e.group_m1;
  g.group_count = e.group_count;
  g.offset = -0.5;
  return g;
}

ObservableSeries GroupedSeries::mean_series(std::span<const std::size_t> groups) const {
  ObservableSeries s;
  s.kind = ObservableKind::population;
  s.times = times;
  const std::size_t n_t = times.size();
  s.value.assign(n_t, 0.0);
  s.std_error.assign(n_t, 0.0);
  s.valid.assign(n_t, false);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t g : groups) {
    if (group_count[g] <= 0.0) continue;
    total += group_count[g];
    ++used;
  }
  if (total <= 0.0) return s;
  for (std::size_t k = 0; k < n_t; ++k) {
    double acc = 0.0;
    for (std::size_t g : groups) acc += group_sum[g][k];
    const double mean = acc / total;
    double ss = 0.0;
    for (std::size_t g : groups) {
      if (group_count[g] <= 0.0) continue;
      const double d = group_sum[g][k] / group_count[g] - mean;
      ss += group_count[g] * group_count[g] * d * d;
    }
    s.value[k] = mean + offset;
    if (used > 1) {
      s.std_error[k] = std::sqrt(ss * static_cast<double>(used) / static_cast<double>(used - 1)) / total;
    }
    s.valid[k] = true;
  }
  return s;
}

ObservableSeries GroupedSeries::mean_series() const {
  std::vector<std::size_t> all(group_sum.size());
  std::iota(all.begin(), all.end(), 0);
  return mean_series(all);
}

namespace {

void bootstrap_into(ExpFit& fit, const GroupedSeries& data, const ExpFitOptions& options, std::size_t resamples,
                    std::uint64_t seed) {
  const std::size_t n_groups = data.group_sum.size();
  if (resamples == 0 || n_groups < 2) return;
  ExpFitOptions fixed = options;
  fixed.window = std::make_pair(fit.t_lo, fit.t_hi);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n_groups - 1);
  std::vector<double> lambdas;
  std::vector<std::size_t> sample(n_groups);
  for (std::size_t b = 0; b < resamples; ++b) {
    for (auto& g : sample) g = pick(rng);
    try {
      const ExpFit f = fit_exponential(data.mean_series(sample), fixed);
      if (std::isfinite(f.lambda) && f.lambda > 0.0) lambdas.push_back(f.lambda);
    } catch (const NumericalError&) {
    }
  }
  if (lambdas.size() < 2) return;
  const double mean = std::accumulate(lambdas.begin(), lambdas.end(), 0.0) / static_cast<double>(lambdas.size());
  double ss = 0.0;
  for (double l : lambdas) ss += (l - mean) * (l - mean);
  fit.lambda_err = std::sqrt(ss / static_cast<double>(lambdas.size() - 1));
  fit.bootstrap_samples = lambdas.size();
}

}  // namespace

ExpFit fit_exponential_bootstrap(const GroupedSeries& data, const ExpFitOptions& options, std::size_t resamples,
                                 std::uint64_t seed) {
  ExpFit fit = fit_exponential(data.mean_series(), options);
  bootstrap_into(fit, data, options, resamples, seed);
  return fit;
}

ExpFit fit_gap(const EnsembleResult& ensemble, const ExpFitOptions& options, std::size_t resamples,
               std::uint64_t seed) {
  ExpFit fit = fit_exponential(population(ensemble), options);
  bootstrap_into(fit, GroupedSeries::from_ensemble(ensemble), options, resamples, seed);
  return fit;
}

std::optional<GapMinimum> gap_minimum(std::span<const GapPoint> points) {
  std::vector<const GapPoint*> ok;
  for (const auto& p : points) {
    if (p.ok) ok.push_back(&p);
  }
  if (ok.empty()) return std::nullopt;
  std::sort(ok.begin(), ok.end(), [](const GapPoint* a, const GapPoint* b) { return a->f < b->f; });
  std::size_t best = 0;
  for (std::size_t i = 1; i < ok.size(); ++i) {
    if (ok[i]->fit.lambda < ok[best]->fit.lambda) best = i;
  }
  GapMinimum m{ok[best]->f, ok[best]->fit.lambda, ok[best]->fit.lambda_err, false};
  if (best == 0 || best + 1 == ok.size()) return m;
  const double x0 = ok[best - 1]->f, x1 = ok[best]->f, x2 = ok[best + 1]->f;
  const double y0 = std::log(ok[best - 1]->fit.lambda), y1 = std::log(ok[best]->fit.lambda),
               y2 = std::log(ok[best + 1]->fit.lambda);
  // vertex of the parabola through the three points
  const double d01 = (y1 - y0) / (x1 - x0);
  const double d12 = (y2 - y1) / (x2 - x1);
  const double curvature = (d12 - d01) / (x2 - x0);
  if (!(curvature > 0.0)) return m;
  const double xv = 0.5 * (x0 + x1) - d01 / (2.0 * curvature);
  if (xv < x0 || xv > x2) return m;
  const double yv = y1 + d01 * (xv - x1) + curvature * (xv - x0) * (xv - x1);
  m.f = xv;
  m.lambda = std::exp(yv);
  m.lambda_err = ok[best]->fit.lambda_err * m.lambda / ok[best]->fit.lambda;
  m.refined = true;
  return m;
}

GapScan gap_vs_drive(const ModelParams& tmpl, std::span<const double> f_values, const Lattice& lattice,
                     const EngineConfig& config, const ExpFitOptions& options, std::size_t resamples) {
  if (f_values.empty()) throw UsageError("gap scan needs at least one F value");
  GapScan scan;
  EngineConfig cfg = config;
  cfg.initial = InitialState::vacuum();
  for (double f : f_values) {
    ModelParams p = tmpl;
    p.f = f;
    GapPoint point;
    point.f = f;
    const EnsembleResult ensemble = run_ensemble(p, lattice, cfg);
    try {
      point.fit = fit_gap(ensemble, options, resamples, cfg.seed ^ 0xb007u);
      point.ok = true;
    } catch (const NumericalError& e) {
      point.error = e.what();
    }
    scan.points.push_back(std::move(point));
  }
  scan.minimum = gap_minimum(scan.points);
  return scan;
}

PowerLawFit fit_power_law(std::span<const double> sizes, std::span<const double> minima,
                          std::span<const double> errors) {
  if (sizes.size() != minima.size() || (!errors.empty() && errors.size() != sizes.size())) {
    throw UsageError("power-law fit needs matching sizes, minima and errors");
  }
  if (sizes.size() < 3) throw UsageError("power-law fit needs at least 3 sizes");
  const std::size_t n = sizes.size();
  std::vector<double> x(n), y(n), w(n, 1.0);
  bool weighted = !errors.empty();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(sizes[i] > 0.0) || !(minima[i] > 0.0)) throw UsageError("power-law fit needs positive sizes and minima");
    x[i] = std::log(sizes[i]);
    y[i] = std::log(minima[i]);
    if (weighted) {
      if (!(errors[i] > 0.0)) {
        weighted = false;
      } else {
        const double sigma = errors[i] / minima[i];
        w[i] = 1.0 / (sigma * sigma);
      }
    }
  }
  if (!weighted) std::fill(w.begin(), w.end(), 1.0);
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double mx = sx / sw;
  const double my = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += w[i] * (x[i] - mx) * (x[i] - mx);
    sxy += w[i] * (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw UsageError("power-law fit needs at least two distinct sizes");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - intercept - slope * x[i];
    chi2 += w[i] * r * r;
  }
  const double dof = static_cast<double>(n - 2);
  PowerLawFit fit;
  fit.eta = -slope;
  fit.prefactor = std::exp(intercept);
  fit.chi2_per_dof = chi2 / dof;
  const double scale = weighted ? std::max(1.0, fit.chi2_per_dof) : fit.chi2_per_dof;
  fit.eta_err = std::sqrt(scale / sxx);
  return fit;
}

}  // namespace ddbh
