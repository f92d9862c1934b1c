#include "ddbh/io.hpp"

#include <charconv>
#include <cmath>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ddbh/error.hpp"

namespace ddbh {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void CsvTable::add_row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_number(v));
  add_row(cells);
}

void CsvTable::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size()) throw std::logic_error("csv row width does not match header");
  rows_.push_back(cells);
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

std::uint64_t write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw UsageError("write to '" + path.string() + "' failed");
  return fnv1a64(content);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace {

constexpr char magic[8] = {'D', 'D', 'B', 'H', 'T', 'R', 'J', '1'};

template <class T>
void put(std::string& out, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));  // host order; only little-endian hosts are supported
  out.append(bytes, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw UsageError("truncated trajectory dump");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string encode_trajectories(const EnsembleResult& e, std::uint64_t config_hash) {
  std::vector<const TrajectoryRecord*> recs;
  for (const auto& r : e.records) {
    if (!r.diverged) recs.push_back(&r);
  }
  std::string out(magic, sizeof magic);
  put<std::uint64_t>(out, config_hash);
  put<std::uint64_t>(out, e.n_sites);
  put<std::uint64_t>(out, e.times.size());
  put<std::uint64_t>(out, recs.size());
  for (const auto* r : recs) put<std::uint64_t>(out, r->index);
  for (double t : e.times) put<double>(out, t);
  for (const auto* r : recs) put<std::uint8_t>(out, r->site_population_w.empty() ? 0 : 1);
  for (std::size_t k = 0; k < e.times.size(); ++k) {
    for (const auto* r : recs) {
      put<double>(out, r->site_avg_population_w[k]);
      if (!r->site_population_w.empty()) {
        for (std::size_t j = 0; j < e.n_sites; ++j) put<double>(out, r->site_population_w[k * e.n_sites + j]);
      }
    }
  }
  return out;
}

TrajectoryDump decode_trajectories(const std::string& in) {
  if (in.size() < sizeof magic || std::memcmp(in.data(), magic, sizeof magic) != 0) {
    throw UsageError("not a trajectory dump (bad magic)");
  }
  std::size_t pos = sizeof magic;
  TrajectoryDump d;
  d.config_hash = get<std::uint64_t>(in, pos);
  d.n_sites = get<std::uint64_t>(in, pos);
  const auto n_times = get<std::uint64_t>(in, pos);
  const auto n_rec = get<std::uint64_t>(in, pos);
  for (std::uint64_t r = 0; r < n_rec; ++r) d.indices.push_back(get<std::uint64_t>(in, pos));
  for (std::uint64_t k = 0; k < n_times; ++k) d.times.push_back(get<double>(in, pos));
  std::vector<std::uint8_t> flags;
  for (std::uint64_t r = 0; r < n_rec; ++r) flags.push_back(get<std::uint8_t>(in, pos));
  d.site_avg.assign(n_rec, std::vector<double>(n_times));
  for (std::uint64_t k = 0; k < n_times; ++k) {
    for (std::uint64_t r = 0; r < n_rec; ++r) {
      d.site_avg[r][k] = get<double>(in, pos);
      if (flags[r]) pos += d.n_sites * sizeof(double);
    }
  }
  if (pos != in.size()) throw UsageError("trailing bytes in trajectory dump");
  return d;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t RunManifest::content_hash() const {
  std::string bytes;
  for (const auto& o : outputs) {
    bytes += o.path;
    bytes += '\0';
    bytes += hex64(o.hash);
  }
  return fnv1a64(bytes);
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["version"] = version;
  j["seed"] = seed;
  j["started"] = started;
  j["finished"] = finished;
  j["config"] = config_text;
  auto outs = nlohmann::ordered_json::array();
  for (const auto& o : outputs) outs.push_back({{"path", o.path}, {"fnv1a64", hex64(o.hash)}});
  j["outputs"] = outs;
  j["content_hash"] = hex64(content_hash());
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  RunManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.command = j.at("command").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.started = j.at("started").get<std::string>();
    m.finished = j.at("finished").get<std::string>();
    m.config_text = j.at("config").get<std::string>();
    for (const auto& o : j.at("outputs")) {
      m.outputs.push_back({o.at("path").get<std::string>(), std::stoull(o.at("fnv1a64").get<std::string>(), nullptr, 16)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

}  // namespace ddbh
