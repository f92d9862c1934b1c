#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "ddbh/config.hpp"
#include "ddbh/io.hpp"

using namespace ddbh;

namespace {

const char* full_config = R"(# torus scan
lattice = torus
L = 2, 3, 4
delta = 0.1 gamma
zJ = 0.9 gamma
U = 0.1 gamma
F = 1.4:1.6:5 gamma
dt = 0.02 /gamma
t_end = 300 /gamma
t_start = 100 /gamma
n_traj = 5000
seed = 42
record_stride = 25
groups = 32
scheme = euler_maruyama
dynamics = truncated_wigner
histogram = true
bins = 40
fit_window = 10, 200 /gamma
fit_resamples = 50
n_max = auto
displaced = true
max_dimension = 2000
)";

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("parse a full configuration") {
  const RunConfig c = parse_config(full_config);
  CHECK(c.lattice == LatticeKind::torus);
  CHECK(c.sizes == std::vector<int>{2, 3, 4});
  CHECK(c.delta == 0.1);
  CHECK(c.zj == 0.9);
  REQUIRE(c.f_values.size() == 5);
  CHECK(c.f_values[2] == doctest::Approx(1.5));
  CHECK(c.engine.dt == 0.02);
  CHECK(c.engine.t_end == 300);
  CHECK(*c.t_start == 100);
  CHECK(c.engine.n_traj == 5000);
  CHECK(c.engine.seed == 42);
  CHECK(c.engine.scheme == Scheme::euler_maruyama);
  CHECK(c.histogram);
  CHECK(c.bins == 40);
  CHECK(c.fit_window->second == 200);
  CHECK_FALSE(c.n_max);
  CHECK(c.displaced);
  CHECK(c.max_dimension == 2000);
}

TEST_CASE("lists with unit suffix and plain comma lists") {
  const RunConfig c = parse_config("lattice = ring\nL = 8\nF = 1.4, 1.5\nU = 0.1\n");
  CHECK(c.f_values == std::vector<double>{1.4, 1.5});
  CHECK(c.sizes == std::vector<int>{8});
}

TEST_CASE("UF2 derives F per U") {
  const RunConfig c = parse_config("lattice = dimer\nU = 0.1, 0.4\nUF2 = 2.465\n");
  CHECK(c.drives_for(0.1).front() == doctest::Approx(std::sqrt(24.65)));
  CHECK(c.drives_for(0.4).front() == doctest::Approx(std::sqrt(2.465 / 0.4)));
}

TEST_CASE("errors name the line and the field") {
  CHECK(error_of("lattice = ring\n\nF = 1.0 Hz\n").find("cfg:3: F:") == 0);
  CHECK(error_of("lattice = hexagon\n").find("cfg:1: lattice:") == 0);
  CHECK(error_of("dt = 0.01 gamma\n").find("cfg:1: dt:") == 0);
  CHECK(error_of("F = 1\nF = 2\n").find("cfg:2: F:") == 0);
  CHECK(error_of("colour = blue\n").find("cfg:1: colour:") == 0);
  CHECK(error_of("n_traj = -5\n").find("cfg:1: n_traj:") == 0);
  CHECK(error_of("U = 0.1\nF = 1\nUF2 = 2\n").find("UF2") != std::string::npos);
  CHECK(error_of("t_end = 10\nt_start = 20\n").find("t_start") != std::string::npos);
  CHECK(error_of("lattice = ring\nL = 2\n").find("L") != std::string::npos);
  CHECK(error_of("no equals sign\n").find("cfg:1:") == 0);
  CHECK(error_of("F = 1:2\n").find("start:stop:count") != std::string::npos);
}

TEST_CASE("canonical text parses back to the same configuration") {
  const RunConfig c = parse_config(full_config);
  const std::string text = c.to_text();
  const RunConfig back = parse_config(text);
  CHECK(back.to_text() == text);
  CHECK(config_hash(back) == config_hash(c));
  RunConfig other = c;
  other.engine.seed = 43;
  CHECK(config_hash(other) != config_hash(c));
  // threads never changes results, so it is not part of the identity
  other = c;
  other.engine.threads = 7;
  CHECK(config_hash(other) == config_hash(c));
}

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 12345678.9}) CHECK(std::stod(format_number(v)) == v);
  CHECK(format_number(std::nan("")) == "nan");
}

TEST_CASE("CSV table layout") {
  CsvTable t({"t[1/gamma]", "n"});
  t.add_row(std::vector<double>{0.5, 2.0});
  t.add_row(std::vector<std::string>{"1", "failed"});
  CHECK(t.str() == "t[1/gamma],n\n0.5,2\n1,failed\n");
  CHECK_THROWS_AS(t.add_row(std::vector<double>{1.0}), std::logic_error);
}

TEST_CASE("trajectory dump round-trip") {
  const Lattice r = build_lattice(LatticeKind::ring, 3);
  EngineConfig c;
  c.t_end = 1.0;
  c.record_stride = 10;
  c.n_traj = 7;
  c.keep_series = true;
  const auto e = run_ensemble(r.params(0.1, 0.1, 1.0, 0.9), r, c);
  const std::string bytes = encode_trajectories(e, 0x1234abcdULL);
  CHECK(bytes.compare(0, 8, "DDBHTRJ1") == 0);
  const auto d = decode_trajectories(bytes);
  CHECK(d.config_hash == 0x1234abcdULL);
  CHECK(d.n_sites == 3);
  CHECK(d.times == e.times);
  REQUIRE(d.site_avg.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(d.indices[i] == e.records[i].index);
    CHECK(std::memcmp(d.site_avg[i].data(), e.records[i].site_avg_population_w.data(),
                      d.site_avg[i].size() * sizeof(double)) == 0);
  }
  CHECK_THROWS(decode_trajectories(bytes.substr(0, bytes.size() - 3)));
  CHECK_THROWS(decode_trajectories("NOTADUMP" + bytes.substr(8)));
}

TEST_CASE("manifest JSON round-trip and content hash") {
  RunManifest m;
  m.command = "sweep";
  m.config_text = "lattice = site\nF = 1 gamma\n";
  m.seed = 9;
  m.started = utc_now();
  m.finished = m.started;
  m.outputs = {{"sweep.csv", 0xdeadbeefULL}, {"series_L1_U0_F1.csv", 42}};
  const auto back = RunManifest::from_json(m.to_json());
  CHECK(back.command == m.command);
  CHECK(back.config_text == m.config_text);
  CHECK(back.seed == 9);
  REQUIRE(back.outputs.size() == 2);
  CHECK(back.outputs[0].hash == 0xdeadbeefULL);
  CHECK(back.content_hash() == m.content_hash());
  m.outputs[1].hash = 43;
  CHECK(back.content_hash() != m.content_hash());
}

TEST_CASE("write_file hash equals the hash of what was read back") {
  const auto dir = std::filesystem::temp_directory_path() / "ddbh_io_test" / "nested";
  std::filesystem::remove_all(dir.parent_path());
  const std::uint64_t h = write_file(dir / "x.csv", "a,b\n1,2\n");
  CHECK(h == fnv1a64(read_file(dir / "x.csv")));
  std::filesystem::remove_all(dir.parent_path());
  CHECK_THROWS(read_file(dir / "missing.csv"));
}
