#include "ddbh/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace ddbh {

ConfigError::ConfigError(std::string source, std::size_t line, std::string field, const std::string& problem)
    : UsageError(source + ":" + std::to_string(line) + ": " + field + ": " + problem),
      field_(std::move(field)),
      line_(line) {}

namespace {

enum class Unit { none, frequency, time };

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

struct Field {
  std::string key;
  std::string value;
  std::size_t line;
};

class Parser {
 public:
  Parser(const std::string& source) : source_(source) {}

  [[noreturn]] void fail(const Field& f, const std::string& problem) const {
    throw ConfigError(source_, f.line, f.key, problem);
  }

  /// Strips the unit suffix allowed for `unit`.
  std::string_view strip_unit(const Field& f, std::string_view v, Unit unit) const {
    v = trim(v);
    const auto space = v.find_last_of(" \t");
    if (space == std::string_view::npos) return v;
    const std::string suffix = lower(trim(v.substr(space + 1)));
    if (!std::isalpha(static_cast<unsigned char>(suffix.front())) && suffix.front() != '/') return v;
    const std::string_view body = trim(v.substr(0, space));
    if (unit == Unit::frequency && suffix == "gamma") return body;
    if (unit == Unit::time && suffix == "/gamma") return body;
    if (unit == Unit::none) fail(f, "unexpected unit suffix '" + suffix + "'");
    fail(f, "unit suffix '" + suffix + "' not allowed, expected " +
                (unit == Unit::frequency ? "'gamma'" : "'/gamma'"));
  }

  double number(const Field& f, std::string_view text) const {
    text = trim(text);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
      fail(f, "'" + std::string(text) + "' is not a finite number");
    }
    return v;
  }

  double scalar(const Field& f, Unit unit) const { return number(f, strip_unit(f, f.value, unit)); }

  std::vector<double> list(const Field& f, Unit unit) const {
    const std::string_view body = strip_unit(f, f.value, unit);
    std::vector<double> out;
    if (body.find(':') != std::string_view::npos) {
      std::vector<std::string_view> parts;
      std::string_view rest = body;
      for (std::size_t pos; (pos = rest.find(':')) != std::string_view::npos;) {
        parts.push_back(rest.substr(0, pos));
        rest.remove_prefix(pos + 1);
      }
      parts.push_back(rest);
      if (parts.size() != 3) fail(f, "range must be start:stop:count");
      const double a = number(f, parts[0]);
      const double b = number(f, parts[1]);
      const double c = number(f, parts[2]);
      if (c < 1 || c != std::floor(c)) fail(f, "range count must be a positive integer");
      const auto n = static_cast<std::size_t>(c);
      if (n == 1) return {a};
      for (std::size_t i = 0; i < n; ++i) out.push_back(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
      return out;
    }
    std::string_view rest = body;
    while (true) {
      const auto pos = rest.find(',');
      out.push_back(number(f, rest.substr(0, pos)));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    return out;
  }

  std::uint64_t integer(const Field& f) const {
    const std::string_view text = trim(f.value);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) fail(f, "'" + std::string(text) + "' is not a non-negative integer");
    return v;
  }

  bool boolean(const Field& f) const {
    const std::string v = lower(trim(f.value));
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    fail(f, "expected true or false");
  }

 private:
  std::string source_;
};

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i]);
  return out;
}

}  // namespace

std::vector<double> RunConfig::drives_for(double u) const {
  if (!uf2) return f_values;
  if (!(u > 0.0)) throw UsageError("UF2 needs U > 0");
  return {std::sqrt(*uf2 / u)};
}

Lattice RunConfig::lattice_for(int size) const { return build_lattice(lattice, size); }

ModelParams RunConfig::params_for(const Lattice& lat, double u, double f) const {
  ModelParams p = lat.params(delta, u, f, zj);
  p.validate();
  return p;
}

std::string RunConfig::to_text() const {
  std::ostringstream o;
  o << "lattice = " << to_string(lattice) << "\n";
  o << "L = ";
  for (std::size_t i = 0; i < sizes.size(); ++i) o << (i ? ", " : "") << sizes[i];
  o << "\n";
  o << "delta = " << fmt(delta) << " gamma\n";
  o << "zJ = " << fmt(zj) << " gamma\n";
  o << "U = " << join(u_values) << " gamma\n";
  if (uf2) {
    o << "UF2 = " << fmt(*uf2) << "\n";
  } else {
    o << "F = " << join(f_values) << " gamma\n";
  }
  o << "dt = " << fmt(engine.dt) << " /gamma\n";
  o << "t_end = " << fmt(engine.t_end) << " /gamma\n";
  o << "t_start = " << (t_start ? fmt(*t_start) + " /gamma" : std::string("auto")) << "\n";
  o << "n_traj = " << engine.n_traj << "\n";
  o << "seed = " << engine.seed << "\n";
  o << "record_stride = " << engine.record_stride << "\n";
  o << "groups = " << engine.groups << "\n";
  o << "scheme = " << to_string(engine.scheme) << "\n";
  o << "dynamics = " << (engine.dynamics == Dynamics::truncated_wigner ? "truncated_wigner" : "gross_pitaevskii")
    << "\n";
  o << "histogram = " << (histogram ? "true" : "false") << "\n";
  o << "dump = " << (dump ? "true" : "false") << "\n";
  o << "bins = " << bins << "\n";
  if (fit_window) o << "fit_window = " << fmt(fit_window->first) << ", " << fmt(fit_window->second) << " /gamma\n";
  o << "fit_resamples = " << fit_resamples << "\n";
  o << "n_max = " << (n_max ? std::to_string(*n_max) : std::string("auto")) << "\n";
  o << "displaced = " << (displaced ? "true" : "false") << "\n";
  o << "max_dimension = " << max_dimension << "\n";
  return o.str();
}

RunConfig parse_config(std::string_view text, const std::string& source) {
  Parser p(source);
  RunConfig c;
  std::map<std::string, Field> fields;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(source, line_no, std::string(line), "expected 'key = value'");
    Field f{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), line_no};
    if (f.key.empty()) throw ConfigError(source, line_no, "<empty>", "missing key");
    if (f.value.empty()) throw ConfigError(source, line_no, f.key, "missing value");
    if (fields.count(f.key)) throw ConfigError(source, line_no, f.key, "duplicate key");
    fields.emplace(f.key, f);
  }

  using Handler = std::function<void(const Field&)>;
  const std::map<std::string, Handler> handlers{
      {"lattice",
       [&](const Field& f) {
         try {
           c.lattice = lattice_kind_from_string(lower(f.value));
         } catch (const UsageError&) {
           p.fail(f, "unknown lattice '" + f.value + "' (site, dimer, ring, torus)");
         }
       }},
      {"L",
       [&](const Field& f) {
         c.sizes.clear();
         for (double v : p.list(f, Unit::none)) {
           if (v < 0 || v != std::floor(v)) p.fail(f, "sizes must be non-negative integers");
           c.sizes.push_back(static_cast<int>(v));
         }
       }},
      {"delta", [&](const Field& f) { c.delta = p.scalar(f, Unit::frequency); }},
      {"zJ", [&](const Field& f) { c.zj = p.scalar(f, Unit::frequency); }},
      {"U",
       [&](const Field& f) {
         c.u_values = p.list(f, Unit::frequency);
         for (double u : c.u_values) {
           if (u < 0) p.fail(f, "must be non-negative");
         }
       }},
      {"F",
       [&](const Field& f) {
         c.f_values = p.list(f, Unit::frequency);
         for (double v : c.f_values) {
           if (v < 0) p.fail(f, "must be non-negative");
         }
       }},
      {"UF2",
       [&](const Field& f) {
         c.uf2 = p.scalar(f, Unit::none);
         if (!(*c.uf2 > 0)) p.fail(f, "must be positive");
       }},
      {"dt",
       [&](const Field& f) {
         c.engine.dt = p.scalar(f, Unit::time);
         if (!(c.engine.dt > 0)) p.fail(f, "must be positive");
       }},
      {"t_end",
       [&](const Field& f) {
         c.engine.t_end = p.scalar(f, Unit::time);
         if (!(c.engine.t_end > 0)) p.fail(f, "must be positive");
       }},
      {"t_start",
       [&](const Field& f) {
         if (lower(f.value) == "auto") {
           c.t_start.reset();
         } else {
           c.t_start = p.scalar(f, Unit::time);
           if (*c.t_start < 0) p.fail(f, "must be non-negative");
         }
       }},
      {"n_traj",
       [&](const Field& f) {
         c.engine.n_traj = p.integer(f);
         if (c.engine.n_traj < 1) p.fail(f, "must be at least 1");
       }},
      {"seed", [&](const Field& f) { c.engine.seed = p.integer(f); }},
      {"record_stride",
       [&](const Field& f) {
         c.engine.record_stride = p.integer(f);
         if (c.engine.record_stride < 1) p.fail(f, "must be at least 1");
       }},
      {"groups",
       [&](const Field& f) {
         c.engine.groups = p.integer(f);
         if (c.engine.groups < 1) p.fail(f, "must be at least 1");
       }},
      {"threads", [&](const Field& f) { c.engine.threads = static_cast<unsigned>(p.integer(f)); }},
      {"scheme",
       [&](const Field& f) {
         try {
           c.engine.scheme = scheme_from_string(lower(f.value));
         } catch (const UsageError&) {
           p.fail(f, "unknown scheme '" + f.value + "' (heun, euler_maruyama)");
         }
       }},
      {"dynamics",
       [&](const Field& f) {
         const std::string v = lower(f.value);
         if (v == "truncated_wigner") {
           c.engine.dynamics = Dynamics::truncated_wigner;
         } else if (v == "gross_pitaevskii") {
           c.engine.dynamics = Dynamics::gross_pitaevskii;
         } else {
           p.fail(f, "unknown dynamics '" + f.value + "'");
         }
       }},
      {"histogram", [&](const Field& f) { c.histogram = p.boolean(f); }},
      {"dump", [&](const Field& f) { c.dump = p.boolean(f); }},
      {"bins", [&](const Field& f) { c.bins = p.integer(f); }},
      {"fit_window",
       [&](const Field& f) {
         const auto v = p.list(f, Unit::time);
         if (v.size() != 2 || !(v[0] < v[1])) p.fail(f, "expected 't_lo, t_hi' with t_lo < t_hi");
         c.fit_window = std::make_pair(v[0], v[1]);
       }},
      {"fit_resamples", [&](const Field& f) { c.fit_resamples = p.integer(f); }},
      {"n_max",
       [&](const Field& f) {
         if (lower(f.value) == "auto") {
           c.n_max.reset();
         } else {
           c.n_max = p.integer(f);
           if (*c.n_max < 1) p.fail(f, "must be at least 1");
         }
       }},
      {"displaced", [&](const Field& f) { c.displaced = p.boolean(f); }},
      {"max_dimension", [&](const Field& f) { c.max_dimension = p.integer(f); }},
  };

  std::vector<const Field*> ordered;
  for (const auto& kv : fields) ordered.push_back(&kv.second);
  std::sort(ordered.begin(), ordered.end(), [](const Field* a, const Field* b) { return a->line < b->line; });
  for (const Field* fp : ordered) {
    const Field& f = *fp;
    const auto h = handlers.find(f.key);
    if (h == handlers.end()) p.fail(f, "unknown key");
    h->second(f);
  }

  const auto where = [&](const char* key) -> Field {
    const auto it = fields.find(key);
    return it != fields.end() ? it->second : Field{key, "", 0};
  };
  if (c.uf2 && fields.count("F")) p.fail(where("UF2"), "F and UF2 are mutually exclusive");
  if (c.engine.t_end < c.engine.dt) p.fail(where("t_end"), "must be at least dt");
  if (c.t_start && *c.t_start >= c.engine.t_end) p.fail(where("t_start"), "must be below t_end");
  if (c.fit_window && c.fit_window->second > c.engine.t_end) p.fail(where("fit_window"), "extends beyond t_end");
  for (int size : c.sizes) {
    try {
      const Lattice lat = c.lattice_for(size);
      for (double u : c.u_values) {
        for (double f : c.drives_for(u)) c.params_for(lat, u, f);
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const UsageError& e) {
      p.fail(where(fields.count("L") ? "L" : "lattice"), e.what());
    }
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const RunConfig& config) { return fnv1a64(config.to_text()); }

}  // namespace ddbh
