#include "ddbh/twa.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <boost/random/normal_distribution.hpp>

#include "ddbh/error.hpp"

namespace ddbh {
namespace {

bool all_finite(const std::vector<complex>& v) {
  return std::all_of(v.begin(), v.end(),
                     [](const complex& a) { return std::isfinite(a.real()) && std::isfinite(a.imag()); });
}

/// Reusable scratch space for one trajectory's time stepping.
class Integrator {
 public:
  Integrator(const ModelParams& params, const Lattice& lattice, double dt, Scheme scheme, Dynamics dynamics,
             std::size_t substeps = 1)
      : params_(params),
        lattice_(lattice),
        dt_(dt),
        scheme_(scheme),
        noisy_(dynamics == Dynamics::truncated_wigner),
        shift_(noisy_ ? 1.0 : 0.0),
        substeps_(substeps),
        noise_scale_(std::sqrt(0.5 * params.gamma) * std::sqrt(0.5 * dt / static_cast<double>(substeps))),
        f0_(lattice.site_count()),
        f1_(lattice.site_count()),
        trial_(lattice.site_count()),
        kick_(lattice.site_count()) {}

  void advance(std::vector<complex>& a, const NoiseSource& noise, std::uint64_t step_index) {
    const std::size_t n = a.size();
    if (noisy_) {
      if (substeps_ == 1) {
        for (std::size_t s = 0; s < n; ++s) kick_[s] = noise_scale_ * noise.normal(step_index, s);
      } else {
        for (std::size_t s = 0; s < n; ++s) {
          complex sum{};
          for (std::size_t i = 0; i < substeps_; ++i) sum += noise.normal(step_index * substeps_ - (substeps_ - 1) + i, s);
          kick_[s] = noise_scale_ * sum;
        }
      }
    }
    detail::drift_unchecked(params_, lattice_, a.data(), f0_.data(), shift_);
    if (scheme_ == Scheme::euler_maruyama) {
      for (std::size_t s = 0; s < n; ++s) a[s] += f0_[s] * dt_ + kick_[s];
      return;
    }
    for (std::size_t s = 0; s < n; ++s) trial_[s] = a[s] + f0_[s] * dt_ + kick_[s];
    detail::drift_unchecked(params_, lattice_, trial_.data(), f1_.data(), shift_);
    const double half_dt = 0.5 * dt_;
    for (std::size_t s = 0; s < n; ++s) a[s] += (f0_[s] + f1_[s]) * half_dt + kick_[s];
  }

 private:
  const ModelParams& params_;
  const Lattice& lattice_;
  double dt_;
  Scheme scheme_;
  bool noisy_;
  double shift_;
  std::size_t substeps_;
  double noise_scale_;
  std::vector<complex> f0_, f1_, trial_, kick_;
};

/// Everything one trajectory contributes to the ensemble.
struct TrajectorySample {
  TrajectoryRecord record;
  std::vector<double> m2;
  std::vector<double> k0;
  std::vector<double> site;  // time-major |a_j|^2, kept for site-resolved sums
};

TrajectorySample simulate(const ModelParams& params, const Lattice& lattice, const EngineConfig& config,
                          std::size_t index, bool keep_sites) {
  const std::size_t n_sites = lattice.site_count();
  const std::size_t n_rec = config.record_count();
  const std::size_t n_steps = config.step_count();
  const bool site_series = keep_sites || config.site_resolved;
  const NoiseSource noise(config.seed, index);

  TrajectorySample out;
  TrajectoryRecord& rec = out.record;
  rec.index = index;
  rec.times.reserve(n_rec);
  rec.site_avg_population_w.reserve(n_rec);
  out.m2.reserve(n_rec);
  out.k0.reserve(n_rec);
  if (site_series) out.site.reserve(n_rec * n_sites);

  FieldState state = sample_initial(config.initial, lattice, noise, config.dynamics);
  Integrator integrator(params, lattice, config.dt, config.scheme, config.dynamics, config.noise_substeps);

  const double inv_n = 1.0 / static_cast<double>(n_sites);
  auto record = [&](std::size_t step) {
    double m1 = 0.0;
    double m2 = 0.0;
    complex total{};
    for (const complex& a : state.amplitudes) {
      const double p = std::norm(a);
      m1 += p;
      m2 += p * p;
      total += a;
      if (site_series) out.site.push_back(p);
    }
    m1 *= inv_n;
    if (!std::isfinite(m1) || !std::isfinite(m2)) return false;
    rec.times.push_back(static_cast<double>(step) * config.dt);
    rec.site_avg_population_w.push_back(m1);
    out.m2.push_back(m2 * inv_n);
    out.k0.push_back(std::norm(total) * inv_n);
    return true;
  };

  bool ok = record(0);
  for (std::size_t step = 1; ok && step <= n_steps; ++step) {
    integrator.advance(state.amplitudes, noise, step);
    if (step % config.record_stride == 0) ok = record(step);
  }
  ok = ok && all_finite(state.amplitudes);
  state.time = static_cast<double>(n_steps) * config.dt;
  rec.final_state = std::move(state);
  rec.diverged = !ok;
  if (keep_sites) {
    rec.site_population_w = out.site;
    rec.site_population_w.resize(rec.times.size() * n_sites);
  }
  return out;
}

/// Pairwise (cascade) summation over a stream of values with `+=`: the
/// merge tree depends only on the number of pushes.
template <class T>
class PairwiseReducer {
 public:
  void push(T value) {
    int level = 0;
    while (!stack_.empty() && stack_.back().first == level) {
      T left = std::move(stack_.back().second);
      stack_.pop_back();
      left += value;
      value = std::move(left);
      ++level;
    }
    stack_.emplace_back(level, std::move(value));
  }

  std::optional<T> finish() {
    if (stack_.empty()) return std::nullopt;
    T acc = std::move(stack_.back().second);
    for (std::size_t i = stack_.size() - 1; i-- > 0;) {
      T left = std::move(stack_[i].second);
      left += acc;
      acc = std::move(left);
    }
    stack_.clear();
    return acc;
  }

 private:
  std::vector<std::pair<int, T>> stack_;
};

MomentSums moments_of(const TrajectorySample& s, std::size_t n_sites, bool site_resolved) {
  const auto& m1 = s.record.site_avg_population_w;
  const std::size_t n_rec = m1.size();
  MomentSums m;
  m.resize(n_rec, site_resolved ? n_sites : 0);
  m.count = 1.0;
  for (std::size_t k = 0; k < n_rec; ++k) {
    m.m1[k] = m1[k];
    m.m1_sq[k] = m1[k] * m1[k];
    m.m2[k] = s.m2[k];
    m.m2_sq[k] = s.m2[k] * s.m2[k];
    m.m1_m2[k] = m1[k] * s.m2[k];
    m.k0[k] = s.k0[k];
    m.k0_sq[k] = s.k0[k] * s.k0[k];
    m.k0_m1[k] = s.k0[k] * m1[k];
  }
  if (site_resolved) std::copy(s.site.begin(), s.site.end(), m.site.begin());
  return m;
}

struct GroupResult {
  std::optional<MomentSums> moments;
  std::vector<TrajectoryRecord> records;
  std::vector<std::size_t> diverged;
};

}  // namespace

namespace {

/// UniformRandomBitGenerator over successive Philox blocks of one counter.
class BlockWords {
 public:
  using result_type = std::uint32_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return 0xffffffffu; }

  BlockWords(const Philox4x32& gen, const Philox4x32::Block& counter)
      : gen_(gen), counter_(counter), block_(gen(counter)) {}

  result_type operator()() {
    if (used_ == 4) {
      ext_ = (ext_ + 1) & 0x3f;
      Philox4x32::Block c = counter_;
      c[2] ^= ext_ << 26;
      block_ = gen_(c);
      used_ = 0;
    }
    return block_[used_++];
  }

 private:
  const Philox4x32& gen_;
  Philox4x32::Block counter_;
  Philox4x32::Block block_;
  int used_ = 0;
  std::uint32_t ext_ = 0;
};

}  // namespace

complex NoiseSource::normal(std::uint64_t step, std::uint64_t site, NoiseStream stream) const {
  BlockWords words(gen_, noise_counter(trajectory_, step, site, stream));
  boost::random::normal_distribution<double> gauss;
  const double re = gauss(words);
  return {re, gauss(words)};
}

std::string_view to_string(Scheme scheme) {
  return scheme == Scheme::heun ? "heun" : "euler_maruyama";
}

Scheme scheme_from_string(std::string_view name) {
  if (name == "heun") return Scheme::heun;
  if (name == "euler_maruyama" || name == "euler") return Scheme::euler_maruyama;
  throw UsageError("unknown scheme '" + std::string(name) + "' (expected heun|euler_maruyama)");
}

void EngineConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw UsageError("dt must be positive");
  if (!(t_end >= dt) || !std::isfinite(t_end)) throw UsageError("t_end must be at least dt");
  if (n_traj < 1) throw UsageError("n_traj must be at least 1");
  if (record_stride < 1) throw UsageError("record_stride must be at least 1");
  if (groups < 1) throw UsageError("groups must be at least 1");
  if (noise_substeps < 1) throw UsageError("noise_substeps must be at least 1");
  if (!(max_diverged_fraction >= 0.0)) throw UsageError("max_diverged_fraction must be non-negative");
  if (n_traj > (std::size_t{1} << 32)) throw UsageError("n_traj exceeds the 2^32 trajectory counter range");
}

std::size_t EngineConfig::step_count() const {
  return static_cast<std::size_t>(std::llround(t_end / dt));
}

std::size_t EngineConfig::record_count() const { return step_count() / record_stride + 1; }

std::vector<double> EngineConfig::record_times() const {
  std::vector<double> t(record_count());
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = static_cast<double>(k * record_stride) * dt;
  return t;
}

void MomentSums::resize(std::size_t n_times, std::size_t n_sites_resolved) {
  for (auto* v : {&m1, &m1_sq, &m2, &m2_sq, &m1_m2, &k0, &k0_sq, &k0_m1}) v->assign(n_times, 0.0);
  site.assign(n_times * n_sites_resolved, 0.0);
}

MomentSums& MomentSums::operator+=(const MomentSums& o) {
  count += o.count;
  auto add = [](std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  add(m1, o.m1);
  add(m1_sq, o.m1_sq);
  add(m2, o.m2);
  add(m2_sq, o.m2_sq);
  add(m1_m2, o.m1_m2);
  add(k0, o.k0);
  add(k0_sq, o.k0_sq);
  add(k0_m1, o.k0_m1);
  add(site, o.site);
  return *this;
}

FieldState sample_initial(const InitialState& initial, const Lattice& lattice, const NoiseSource& noise,
                          Dynamics dynamics) {
  const std::size_t n = lattice.site_count();
  FieldState state;
  state.amplitudes.assign(n, complex{});
  if (initial.kind == InitialState::Kind::coherent) {
    state.amplitudes.assign(n, initial.alpha0);
  } else if (initial.kind == InitialState::Kind::custom) {
    if (initial.site_means.size() != n) throw UsageError("custom initial state length does not match lattice");
    state.amplitudes = initial.site_means;
  }
  if (dynamics == Dynamics::truncated_wigner) {
    for (std::size_t s = 0; s < n; ++s) state.amplitudes[s] += 0.5 * noise.normal(0, s, NoiseStream::initial_state);
  }
  return state;
}

FieldState step(const FieldState& state, const ModelParams& params, const Lattice& lattice, double dt,
                const NoiseSource& noise, std::uint64_t step_index, Scheme scheme, Dynamics dynamics) {
  if (state.amplitudes.size() != lattice.site_count()) {
    throw UsageError("field state length does not match lattice site count");
  }
  if (!all_finite(state.amplitudes)) throw NumericalError("step called on a non-finite state");
  FieldState next = state;
  Integrator integrator(params, lattice, dt, scheme, dynamics);
  integrator.advance(next.amplitudes, noise, step_index);
  next.time = state.time + dt;
  if (!all_finite(next.amplitudes)) throw NumericalError("trajectory diverged (non-finite amplitude)");
  return next;
}

TrajectoryRecord run_trajectory(const ModelParams& params, const Lattice& lattice, const EngineConfig& config,
                                std::size_t index, bool keep_sites) {
  lattice.check(params);
  config.validate();
  return simulate(params, lattice, config, index, keep_sites).record;
}

EnsembleResult run_ensemble(const ModelParams& params, const Lattice& lattice, const EngineConfig& config) {
  lattice.check(params);
  config.validate();
  const std::size_t n_sites = lattice.site_count();
  const std::size_t n_traj = config.n_traj;
  const std::size_t n_groups = std::min(config.groups, n_traj);
  auto group_begin = [&](std::size_t g) { return g * n_traj / n_groups; };

  std::vector<GroupResult> groups(n_groups);
  auto run_group = [&](std::size_t g) {
    PairwiseReducer<MomentSums> reducer;
    GroupResult& out = groups[g];
    for (std::size_t i = group_begin(g); i < group_begin(g + 1); ++i) {
      const bool keep_sites = i < config.keep_sites;
      TrajectorySample sample = simulate(params, lattice, config, i, keep_sites);
      if (sample.record.diverged) {
        out.diverged.push_back(i);
        continue;
      }
      reducer.push(moments_of(sample, n_sites, config.site_resolved));
      if (keep_sites || config.keep_series) out.records.push_back(std::move(sample.record));
    }
    out.moments = reducer.finish();
  };

  unsigned workers = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n_groups));
  if (workers <= 1) {
    for (std::size_t g = 0; g < n_groups; ++g) run_group(g);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t g = next++; g < n_groups; g = next++) {
          try {
            run_group(g);
          } catch (...) {
            const std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  EnsembleResult result;
  result.config = config;
  result.n_sites = n_sites;
  result.times = config.record_times();
  const std::size_t n_rec = result.times.size();

  PairwiseReducer<MomentSums> total;
  result.group_m1.reserve(n_groups);
  for (auto& g : groups) {
    result.n_diverged += g.diverged.size();
    result.diverged_indices.insert(result.diverged_indices.end(), g.diverged.begin(), g.diverged.end());
    for (auto& r : g.records) result.records.push_back(std::move(r));
    if (g.moments) {
      result.group_m1.push_back(g.moments->m1);
      result.group_count.push_back(g.moments->count);
      total.push(std::move(*g.moments));
    } else {
      result.group_m1.emplace_back(n_rec, 0.0);
      result.group_count.push_back(0.0);
    }
  }
  if (result.n_diverged == n_traj) {
    throw NumericalError("all " + std::to_string(n_traj) + " trajectories diverged; reduce dt");
  }
  const double diverged_fraction = static_cast<double>(result.n_diverged) / static_cast<double>(n_traj);
  if (diverged_fraction > config.max_diverged_fraction) {
    throw NumericalError(std::to_string(result.n_diverged) + " of " + std::to_string(n_traj) +
                         " trajectories diverged (limit " + std::to_string(config.max_diverged_fraction) +
                         "); reduce dt");
  }
  result.moments = std::move(*total.finish());

  EnsembleSummary& summary = result.summary;
  summary.times = result.times;
  summary.mean.resize(n_rec);
  summary.std_error.resize(n_rec);
  const double count = result.moments.count;
  for (std::size_t k = 0; k < n_rec; ++k) {
    const double mean = result.moments.m1[k] / count;
    summary.mean[k] = mean;
    if (count > 1.0) {
      const double var = std::max(0.0, (result.moments.m1_sq[k] - count * mean * mean) / (count - 1.0));
      summary.std_error[k] = std::sqrt(var / count);
    }
  }
  return result;
}

}  // namespace ddbh
