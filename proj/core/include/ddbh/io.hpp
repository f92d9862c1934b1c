#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ddbh/config.hpp"
#include "ddbh/twa.hpp"

namespace ddbh {

inline constexpr const char* version_string = "0.3.0";

/// Shortest round-trip decimal form of v (locale independent).
std::string format_number(double v);

/// In-memory CSV table. Header names carry units, e.g. "F[gamma]", "t[1/gamma]".
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add_row(const std::vector<double>& values);
  /// Row of pre-formatted cells (for text flags).
  void add_row(const std::vector<std::string>& cells);
  std::string str() const;
  std::size_t rows() const { return rows_.size(); }
  const std::vector<std::string>& header() const { return header_; }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Writes bytes to path (creating parent directories) and returns the
/// FNV-1a 64 hash of the content.
std::uint64_t write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// Trajectory dump layout (little-endian):
///   char[8]  magic "DDBHTRJ1"
///   u64      config hash (FNV-1a 64 of the canonical config text)
///   u64      n_sites, n_times, n_records
///   u64      record indices[n_records]
///   f64      times[n_times]
///   then for each time k, for each record r: f64 site-averaged |a|^2,
///   followed by n_sites f64 |a_j|^2 when that record kept its site series
///   (u8 flags[n_records] just before the data says which did).
/// Diverged records are skipped.
std::string encode_trajectories(const EnsembleResult& ensemble, std::uint64_t config_hash);

struct TrajectoryDump {
  std::uint64_t config_hash = 0;
  std::size_t n_sites = 0;
  std::vector<double> times;
  std::vector<std::uint64_t> indices;
  std::vector<std::vector<double>> site_avg;  ///< [record][time]
};
TrajectoryDump decode_trajectories(const std::string& bytes);

struct ManifestOutput {
  std::string path;  ///< relative to the manifest's directory
  std::uint64_t hash = 0;
};

struct RunManifest {
  std::string command;
  std::string config_text;
  std::string version = version_string;
  std::uint64_t seed = 0;
  std::string started;   ///< ISO-8601 UTC
  std::string finished;  ///< ISO-8601 UTC
  std::vector<ManifestOutput> outputs;

  /// FNV-1a over the output hashes in order; recomputable from the files.
  std::uint64_t content_hash() const;
  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

std::string utc_now();
std::string hex64(std::uint64_t v);

}  // namespace ddbh
