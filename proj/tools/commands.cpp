#include "commands.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "ddbh/error.hpp"
#include "ddbh/fitting.hpp"
#include "ddbh/lindblad.hpp"
#include "ddbh/meanfield.hpp"
#include "ddbh/observables.hpp"
#include "ddbh/twa.hpp"

namespace ddbh::cli {
namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

class Recorder {
 public:
  Recorder(std::string command, const RunConfig& config, std::filesystem::path out_dir)
      : dir_(std::move(out_dir)) {
    out_.manifest.command = std::move(command);
    out_.manifest.config_text = config.to_text();
    out_.manifest.seed = config.engine.seed;
    out_.manifest.started = utc_now();
  }

  void write(const std::string& name, const std::string& content) {
    const std::uint64_t h = write_file(dir_ / name, content);
    out_.manifest.outputs.push_back({name, h});
  }

  void fail_point(const std::string& what) {
    out_.exit_code = 2;
    out_.warnings.push_back(what);
  }

  CommandOutput finish() {
    out_.manifest.finished = utc_now();
    write_file(dir_ / "manifest.json", out_.manifest.to_json());
    return std::move(out_);
  }

 private:
  std::filesystem::path dir_;
  CommandOutput out_;
};

std::string tag(int size, double u, double f) {
  return "L" + std::to_string(size) + "_U" + format_number(u) + "_F" + format_number(f);
}

std::string cell(double v) { return format_number(v); }

double steady_onset(const RunConfig& config, const EnsembleResult& e) {
  if (config.t_start) return *config.t_start;
  return steady_state_onset(population(e));
}

CsvTable series_table(const EnsembleResult& e) {
  const auto n = population(e);
  const auto g2 = g2_local(e);
  const auto f0 = condensate_fraction(e);
  CsvTable t({"t[1/gamma]", "n[per site]", "n_SE", "g2", "g2_SE", "f0", "f0_SE"});
  auto get = [](const ObservableSeries& s, std::size_t k, bool se) {
    if (!s.valid[k]) return nan;
    return se ? s.std_error[k] : s.value[k];
  };
  for (std::size_t k = 0; k < n.size(); ++k) {
    t.add_row(std::vector<double>{n.times[k], get(n, k, false), get(n, k, true), get(g2, k, false), get(g2, k, true),
                                  get(f0, k, false), get(f0, k, true)});
  }
  return t;
}

CsvTable histogram_table(const PopulationHistogram& h) {
  CsvTable t({"bin_center[Wigner n per site]", "probability"});
  const auto centers = h.bin_centers();
  for (std::size_t i = 0; i < centers.size(); ++i) t.add_row(std::vector<double>{centers[i], h.probability[i]});
  return t;
}

CommandOutput ensemble_sweep(const std::string& name, const RunConfig& config, const std::filesystem::path& out_dir,
                             bool histograms) {
  Recorder rec(name, config, out_dir);
  CsvTable table({"L", "U[gamma]", "F[gamma]", "n_ss[per site]", "n_ss_SE[per site]", "t_start[1/gamma]",
                  "n_diverged", "status"});
  CsvTable modes({"L", "U[gamma]", "F[gamma]", "peaks_dip2", "peaks_dip5", "secondary_dip_ratio", "mean_raw",
                  "mean_corrected"});
  EngineConfig engine = config.engine;
  engine.keep_series = histograms || config.dump;
  for (int size : config.sizes) {
    const Lattice lattice = config.lattice_for(size);
    for (double u : config.u_values) {
      for (double f : config.drives_for(u)) {
        const ModelParams p = config.params_for(lattice, u, f);
        const std::string id = tag(lattice.linear_size(), u, f);
        try {
          const EnsembleResult e = run_ensemble(p, lattice, engine);
          const double t_start = steady_onset(config, e);
          const SteadyValue ss = steady_population(e, t_start);
          table.add_row(std::vector<std::string>{std::to_string(lattice.linear_size()), cell(u), cell(f),
                                                 cell(ss.value), cell(ss.std_error), cell(t_start),
                                                 std::to_string(e.n_diverged), "ok"});
          rec.write("series_" + id + ".csv", series_table(e).str());
          if (config.dump) rec.write("trajectories_" + id + ".bin", encode_trajectories(e, config_hash(config)));
          if (histograms) {
            const auto h = histogram_p_of_n(e, t_start, config.bins);
            rec.write("histogram_" + id + ".csv", histogram_table(h).str());
            const Modality m = analyze_modality(h);
            modes.add_row(std::vector<std::string>{std::to_string(lattice.linear_size()), cell(u), cell(f),
                                                   std::to_string(m.count(2.0)), std::to_string(m.count(5.0)),
                                                   cell(m.strongest_secondary_ratio()), cell(h.mean_raw),
                                                   cell(h.mean_corrected)});
          }
        } catch (const NumericalError& err) {
          table.add_row(std::vector<std::string>{std::to_string(lattice.linear_size()), cell(u), cell(f), "nan",
                                                 "nan", "nan", "nan", std::string("failed: ") + err.what()});
          rec.fail_point(id + ": " + err.what());
        }
      }
    }
  }
  rec.write(name + ".csv", table.str());
  if (histograms) rec.write("modality.csv", modes.str());
  return rec.finish();
}

}  // namespace

CommandOutput cmd_meanfield(const RunConfig& config, const std::filesystem::path& out_dir) {
  Recorder rec("meanfield", config, out_dir);
  CsvTable table({"U[gamma]", "F[gamma]", "branches", "n1[per site]", "stable1", "n2[per site]", "stable2",
                  "n3[per site]", "stable3"});
  CsvTable windows({"U[gamma]", "F_lo[gamma]", "F_hi[gamma]"});
  const Lattice lattice = config.lattice_for(config.sizes.front());
  for (double u : config.u_values) {
    const auto drives = config.drives_for(u);
    const MeanFieldSweep sweep = meanfield_sweep(config.params_for(lattice, u, 0.0), drives);
    for (const auto& pt : sweep.points) {
      std::vector<std::string> row{cell(u), cell(pt.f), std::to_string(pt.branches.size())};
      for (std::size_t b = 0; b < 3; ++b) {
        if (b < pt.branches.size()) {
          row.push_back(cell(pt.branches[b].n));
          row.push_back(pt.branches[b].stable ? "1" : "0");
        } else {
          row.push_back("nan");
          row.push_back("nan");
        }
      }
      table.add_row(row);
    }
    if (sweep.bistable_window) {
      windows.add_row(std::vector<double>{u, (*sweep.bistable_window)[0], (*sweep.bistable_window)[1]});
    }
  }
  rec.write("meanfield.csv", table.str());
  rec.write("bistable_window.csv", windows.str());
  return rec.finish();
}

CommandOutput cmd_sweep(const RunConfig& config, const std::filesystem::path& out_dir) {
  return ensemble_sweep("sweep", config, out_dir, config.histogram);
}

CommandOutput cmd_histogram(const RunConfig& config, const std::filesystem::path& out_dir) {
  return ensemble_sweep("histogram", config, out_dir, true);
}

CommandOutput cmd_gap(const RunConfig& config, const std::filesystem::path& out_dir) {
  Recorder rec("gap", config, out_dir);
  ExpFitOptions options;
  options.window = config.fit_window;
  CsvTable minima({"L", "U[gamma]", "F_min[gamma]", "min_lambda[gamma]", "min_lambda_err[gamma]", "refined"});
  std::map<double, std::pair<std::vector<double>, std::pair<std::vector<double>, std::vector<double>>>> by_u;
  bool any_ok = false;
  for (int size : config.sizes) {
    const Lattice lattice = config.lattice_for(size);
    for (double u : config.u_values) {
      const auto drives = config.drives_for(u);
      const ModelParams tmpl = config.params_for(lattice, u, 0.0);
      const GapScan scan = gap_vs_drive(tmpl, drives, lattice, config.engine, options, config.fit_resamples);
      CsvTable table({"F[gamma]", "lambda[gamma]", "lambda_err[gamma]", "n_ss[per site]", "t_lo[1/gamma]",
                      "t_hi[1/gamma]", "log_linear_r2", "status"});
      for (const auto& pt : scan.points) {
        if (pt.ok) {
          any_ok = true;
          table.add_row(std::vector<std::string>{cell(pt.f), cell(pt.fit.lambda), cell(pt.fit.lambda_err),
                                                 cell(pt.fit.n_ss), cell(pt.fit.t_lo), cell(pt.fit.t_hi),
                                                 cell(pt.fit.log_linear_r2), "ok"});
        } else {
          table.add_row(std::vector<std::string>{cell(pt.f), "nan", "nan", "nan", "nan", "nan", "nan",
                                                 "failed: " + pt.error});
        }
      }
      rec.write("gap_L" + std::to_string(lattice.linear_size()) + "_U" + format_number(u) + ".csv", table.str());
      if (scan.minimum) {
        const auto& m = *scan.minimum;
        minima.add_row(std::vector<std::string>{std::to_string(lattice.linear_size()), cell(u), cell(m.f),
                                                cell(m.lambda), cell(m.lambda_err), m.refined ? "1" : "0"});
        auto& entry = by_u[u];
        entry.first.push_back(lattice.linear_size());
        entry.second.first.push_back(m.lambda);
        entry.second.second.push_back(m.lambda_err);
      }
    }
  }
  rec.write("gap_minima.csv", minima.str());
  CsvTable power({"U[gamma]", "eta", "eta_err", "prefactor[gamma]", "chi2_per_dof"});
  for (const auto& [u, data] : by_u) {
    if (data.first.size() < 3) continue;
    const PowerLawFit fit = fit_power_law(data.first, data.second.first, data.second.second);
    power.add_row(std::vector<double>{u, fit.eta, fit.eta_err, fit.prefactor, fit.chi2_per_dof});
  }
  if (power.rows() > 0) rec.write("power_law.csv", power.str());
  if (!any_ok) rec.fail_point("no gap fit succeeded");
  return rec.finish();
}

CommandOutput cmd_benchmark(const RunConfig& config, const std::filesystem::path& out_dir) {
  Recorder rec("benchmark", config, out_dir);
  CsvTable table({"L", "U[gamma]", "F[gamma]", "n_exact[per site]", "n_max", "n_twa[per site]", "n_twa_SE[per site]",
                  "ratio", "ratio_SE", "status"});
  for (int size : config.sizes) {
    const Lattice lattice = config.lattice_for(size);
    for (double u : config.u_values) {
      for (double f : config.drives_for(u)) {
        const ModelParams p = config.params_for(lattice, u, f);
        const std::size_t sites = lattice.site_count();
        double n_exact = 0.0;
        std::size_t cutoff = 0;
        try {
          if (config.n_max) {
            std::vector<complex> beta;
            if (config.displaced) {
              complex alpha{};
              double best = -1.0;
              for (const auto& b : meanfield_roots(p)) {
                if (b.stable && b.n > best) {
                  best = b.n;
                  alpha = b.alpha;
                }
              }
              beta.assign(sites, alpha);
            }
            const FockBasis basis(sites, *config.n_max, beta);
            if (basis.dimension() > config.max_dimension) {
              throw UsageError("Hilbert dimension " + std::to_string(basis.dimension()) + " exceeds max_dimension " +
                               std::to_string(config.max_dimension) +
                               "; use fewer sites, a smaller n_max, or displaced = true");
            }
            const Liouvillian l(p, lattice, basis, config.max_dimension);
            const SteadyStateResult ss = steady_state(l);
            check_cutoff(ss.rho);
            n_exact = expectation(ss.rho, ExactObservable::population);
            cutoff = *config.n_max;
          } else {
            CutoffScan scan;
            scan.displaced = config.displaced;
            scan.max_dimension = config.max_dimension;
            const ConvergedSteadyState ss = converged_steady_state(p, lattice, scan);
            n_exact = ss.population;
            cutoff = ss.cutoffs.back();
          }
        } catch (const UsageError& err) {
          throw UsageError(std::string("exact solver refused ") + lattice.shape() + " system: " + err.what() +
                           " (suggest fewer sites or a smaller cutoff)");
        }
        const std::string id = tag(lattice.linear_size(), u, f);
        try {
          const EnsembleResult e = run_ensemble(p, lattice, config.engine);
          const SteadyValue tw = steady_population(e, steady_onset(config, e));
          const double ratio = tw.value / n_exact;
          table.add_row(std::vector<std::string>{std::to_string(lattice.linear_size()), cell(u), cell(f),
                                                 cell(n_exact), std::to_string(cutoff), cell(tw.value),
                                                 cell(tw.std_error), cell(ratio),
                                                 cell(tw.std_error / std::abs(n_exact)), "ok"});
        } catch (const NumericalError& err) {
          table.add_row(std::vector<std::string>{std::to_string(lattice.linear_size()), cell(u), cell(f),
                                                 cell(n_exact), std::to_string(cutoff), "nan", "nan", "nan", "nan",
                                                 std::string("failed: ") + err.what()});
          rec.fail_point(id + ": " + err.what());
        }
      }
    }
  }
  rec.write("benchmark.csv", table.str());
  return rec.finish();
}

CommandOutput run_command(const std::string& name, const RunConfig& config, const std::filesystem::path& out_dir) {
  if (name == "meanfield") return cmd_meanfield(config, out_dir);
  if (name == "sweep") return cmd_sweep(config, out_dir);
  if (name == "histogram") return cmd_histogram(config, out_dir);
  if (name == "gap") return cmd_gap(config, out_dir);
  if (name == "benchmark") return cmd_benchmark(config, out_dir);
  throw UsageError("unknown command '" + name + "'");
}

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Driven-dissipative Bose-Hubbard toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::vector<CLI::App*> subs;
  for (const char* name : {"meanfield", "sweep", "gap", "benchmark", "histogram"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("config", config_path, "run configuration file")->required();
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
    sub->add_option("--threads", threads, "worker threads (0 = all cores); never changes results");
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  std::string command;
  for (auto* s : subs) {
    if (s->parsed()) command = s->get_name();
  }
  try {
    RunConfig config = load_config(config_path);
    if (seed) config.engine.seed = *seed;
    if (threads) config.engine.threads = *threads;
    const CommandOutput result = run_command(command, config, out_dir);
    for (const auto& w : result.warnings) err << "warning: " << w << "\n";
    out << "wrote " << result.manifest.outputs.size() << " files to " << out_dir << " (manifest "
        << hex64(result.manifest.content_hash()) << ")\n";
    return result.exit_code;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ddbh::cli
