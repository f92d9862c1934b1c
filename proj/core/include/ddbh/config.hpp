#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ddbh/error.hpp"
#include "ddbh/model.hpp"
#include "ddbh/twa.hpp"

namespace ddbh {

/// Parse failure; the message is "<source>:<line>: <field>: <problem>".
class ConfigError : public UsageError {
 public:
  ConfigError(std::string source, std::size_t line, std::string field, const std::string& problem);
  const std::string& field() const { return field_; }
  std::size_t line() const { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

/// Run configuration. Text format (one `key = value` per line, `#` starts a
/// comment). Frequencies take an optional `gamma` suffix, times an optional
/// `/gamma` suffix; any other suffix is an error. Lists are comma separated
/// or `start:stop:count` (inclusive, evenly spaced).
///
///   lattice        site | dimer | ring | torus
///   L              linear size(s); ignored for site/dimer
///   delta, zJ      [gamma]
///   U              [gamma], list allowed (benchmark scans over U)
///   F              [gamma], list allowed
///   UF2            [gamma^3] optional; replaces F by sqrt(UF2/U) per U
///   dt, t_end      [/gamma]
///   t_start        [/gamma] or `auto`: start of steady-state averaging
///   n_traj, seed, record_stride, groups, threads
///   scheme         heun | euler_maruyama
///   dynamics       truncated_wigner | gross_pitaevskii
///   histogram      true | false;  bins (0 = Freedman-Diaconis)
///   dump           true | false: write trajectories_<tag>.bin (sweep/histogram)
///   fit_window     t_lo, t_hi [/gamma] (manual gap-fit window)
///   fit_resamples  bootstrap resamples per gap fit
///   n_max          exact-solver cutoff or `auto` (cutoff scan)
///   displaced      true | false (displaced Fock basis for the exact solver)
///   max_dimension  Hilbert-space cap for the exact solver
struct RunConfig {
  LatticeKind lattice = LatticeKind::site;
  std::vector<int> sizes{0};  ///< 0 = the lattice kind's default size
  double delta = 0.0;
  double zj = 0.0;
  std::vector<double> u_values{0.0};
  std::vector<double> f_values{0.0};
  std::optional<double> uf2;

  EngineConfig engine;
  std::optional<double> t_start;  ///< empty = automatic onset

  bool histogram = false;
  std::size_t bins = 0;
  bool dump = false;

  std::optional<std::pair<double, double>> fit_window;
  std::size_t fit_resamples = 200;

  std::optional<std::size_t> n_max;  ///< empty = cutoff scan
  bool displaced = false;
  std::size_t max_dimension = 4096;

  /// Drive amplitudes for interaction `u` (F list, or sqrt(UF2/u)).
  std::vector<double> drives_for(double u) const;
  Lattice lattice_for(int size) const;
  ModelParams params_for(const Lattice& lattice, double u, double f) const;

  /// Canonical text form: parses back to an identical configuration.
  std::string to_text() const;
};

RunConfig parse_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

/// FNV-1a 64-bit hash.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t config_hash(const RunConfig& config);

}  // namespace ddbh
