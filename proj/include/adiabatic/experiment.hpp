#ifndef ADIABATIC_EXPERIMENT_HPP
#define ADIABATIC_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "adiabatic/deviation.hpp"
#include "adiabatic/error.hpp"
#include "adiabatic/hilbert.hpp"
#include "adiabatic/transport.hpp"
#include "adiabatic/tripod.hpp"

namespace adiabatic {

struct ModelConfig {
  std::string name = "tripod";
  TripodParams tripod{.x = 1.0, .z = 0.0};
  ScanAxis scan = ScanAxis::z;
};

struct RunConfig {
  ModelConfig model;
  double start = 0.0;
  double end = 40.0;
  double velocity = 1e-3;
  double dt = 0.01;
  double sample_interval = 0.25;
  Scenario scenario = Scenario::on_patch_start;
  CVector c0 = CVector::Unit(2, 1);
  bool random_c0 = false;
  DistanceMode distance = DistanceMode::raw;
  unsigned long long seed = 0;
  std::string output = "run.csv";
  std::string out_dir = ".";
  int prediction_points = 65;
  double wz_step = 1e-2;
  std::vector<double> velocities;
  int workers = 0;  // 0: one per hardware thread
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

inline const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> s{
      {"model", {"name", "omega0", "k_l", "xi", "x", "z"}},
      {"protocol", {"scan", "start", "end", "velocity", "duration"}},
      {"run",
       {"dt", "sample_interval", "scenario", "c0", "distance", "seed", "output", "out_dir",
        "prediction_points", "wz_step"}},
      {"sweep", {"velocities", "workers"}},
  };
  return s;
}

inline std::optional<std::string> closest(std::string_view word,
                                          const std::vector<std::string>& options) {
  std::optional<std::string> best;
  std::size_t best_d = 3;
  for (const auto& o : options) {
    const std::size_t d = edit_distance(word, o);
    if (d < best_d) {
      best_d = d;
      best = o;
    }
  }
  return best;
}

inline std::string where(int line, int col) {
  return "line " + num_text(line) + ", column " + num_text(col);
}

struct Entry {
  std::string value;
  int line = 0;
};

using Table = std::map<std::string, Entry>;  // "section.key" -> value

inline double parse_double(const std::string& key, const std::string& text) {
  double out = 0.0;
  const char* b = text.data();
  const char* e = b + text.size();
  if (!text.empty() && *b == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || ptr != e || !std::isfinite(out)) {
    throw Error(ErrorCode::ValidationError, key + ": expected a number, got '" + text + "'");
  }
  return out;
}

inline long long parse_int(const std::string& key, const std::string& text) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::ValidationError, key + ": expected an integer, got '" + text + "'");
  }
  return out;
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

/// "a", "bi", "a+bi", "a-bi", "i", "-i".
inline Complex parse_complex(const std::string& key, std::string text) {
  text.erase(std::remove_if(text.begin(), text.end(), [](char c) { return c == ' ' || c == '\t'; }),
             text.end());
  if (text.empty()) throw Error(ErrorCode::ValidationError, key + ": empty complex number");
  if (text.back() != 'i') return {parse_double(key, text), 0.0};
  const std::string body = text.substr(0, text.size() - 1);
  std::size_t split = std::string::npos;
  for (std::size_t i = 1; i < body.size(); ++i) {
    if ((body[i] == '+' || body[i] == '-') && body[i - 1] != 'e' && body[i - 1] != 'E') split = i;
  }
  auto imag_of = [&](const std::string& s) {
    if (s.empty() || s == "+") return 1.0;
    if (s == "-") return -1.0;
    return parse_double(key, s);
  };
  if (split == std::string::npos) return {0.0, imag_of(body)};
  return {parse_double(key, body.substr(0, split)), imag_of(body.substr(split))};
}

}  // namespace config_detail

/// Checks every cross-field constraint; throws ValidationError naming the key.
inline void validate(const RunConfig& cfg) {
  auto fail = [](const std::string& key, const std::string& msg) {
    throw Error(ErrorCode::ValidationError, key + ": " + msg);
  };
  if (cfg.model.name != "tripod") fail("model.name", "unknown model '" + cfg.model.name + "' (available: tripod)");
  const auto& t = cfg.model.tripod;
  if (!(t.omega0 > 0.0)) fail("model.omega0", "must be positive");
  if (!(t.k_l > 0.0)) fail("model.k_l", "must be positive");
  if (!(t.xi > 0.0 && t.xi < std::numbers::pi / 2)) fail("model.xi", "must lie in (0, pi/2)");
  if (!(cfg.dt > 0.0)) fail("run.dt", "must be positive");
  if (cfg.dt * t.omega0 > kMaxPhasePerStep) {
    fail("run.dt", "dt * omega0 = " + num_text(cfg.dt * t.omega0) + " exceeds 0.05");
  }
  if (!(cfg.sample_interval >= cfg.dt)) fail("run.sample_interval", "must be at least dt");
  if (!(cfg.wz_step > 0.0)) fail("run.wz_step", "must be positive");
  if (cfg.prediction_points < 2) fail("run.prediction_points", "must be at least 2");
  if (cfg.start == cfg.end) fail("protocol.end", "scan interval is empty");
  if (cfg.velocity == 0.0 || !std::isfinite(cfg.velocity)) fail("protocol.velocity", "must be nonzero");
  if (!cfg.random_c0) {
    if (cfg.c0.size() != 2) fail("run.c0", "needs one coefficient per dark state (2)");
    if (!(cfg.c0.norm() > 0.0)) fail("run.c0", "must not be zero");
  }
  for (double v : cfg.velocities) {
    if (!(v > 0.0)) fail("sweep.velocities", "velocities must be positive");
  }
  if (cfg.workers < 0) fail("sweep.workers", "must be non-negative");
  if (cfg.output.empty()) fail("run.output", "must name a file");
}

/// Parses the sectioned key = value format. Unknown sections/keys and syntax
/// problems raise ParseError with a position; bad values raise ValidationError.
inline RunConfig parse_config(std::string_view text) {
  using namespace config_detail;
  const auto& sch = schema();
  Table table;
  std::string section;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    if (line_no == 1 && raw.starts_with("\xEF\xBB\xBF")) raw.erase(0, 3);
    std::string line = raw;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const int col = static_cast<int>(line.find_first_not_of(" \t")) + 1;
    if (body.front() == '[') {
      if (body.back() != ']') {
        throw Error(ErrorCode::ParseError, where(line_no, col) + ": unterminated section header");
      }
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      if (!sch.contains(section)) {
        std::vector<std::string> names;
        for (const auto& [k, v] : sch) names.push_back(k);
        const auto hint = closest(section, names);
        throw Error(ErrorCode::ParseError,
                    where(line_no, col + 1) + ": unknown section [" + section + "]" +
                        (hint ? " (did you mean [" + *hint + "]?)" : ""));
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ParseError, where(line_no, col) + ": expected 'key = value'");
    }
    if (section.empty()) {
      throw Error(ErrorCode::ParseError, where(line_no, col) + ": key outside of any section");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw Error(ErrorCode::ParseError, where(line_no, col) + ": missing key");
    const auto& allowed = sch.at(section);
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      std::optional<std::string> hint;
      for (const auto& [sec, keys] : sch) {
        if (std::find(keys.begin(), keys.end(), key) != keys.end()) hint = "[" + sec + "] " + key;
      }
      if (!hint) hint = closest(key, allowed);
      if (!hint) {
        for (const auto& [sec, keys] : sch) {
          if (auto h = closest(key, keys)) {
            hint = "[" + sec + "] " + *h;
            break;
          }
        }
      }
      throw Error(ErrorCode::ParseError, where(line_no, col) + ": unknown key '" + key + "' in [" +
                                             section + "]" +
                                             (hint ? " (did you mean '" + *hint + "'?)" : ""));
    }
    const std::string full = section + "." + key;
    if (table.contains(full)) {
      throw Error(ErrorCode::ParseError, where(line_no, col) + ": duplicate key '" + key + "'");
    }
    if (value.empty()) {
      throw Error(ErrorCode::ParseError,
                  where(line_no, static_cast<int>(eq) + 2) + ": missing value for '" + key + "'");
    }
    table[full] = Entry{value, line_no};
  }

  RunConfig cfg;
  auto get = [&](const std::string& k) -> const std::string* {
    const auto it = table.find(k);
    return it == table.end() ? nullptr : &it->second.value;
  };
  auto num = [&](const std::string& k, double& dst) {
    if (const auto* v = get(k)) dst = parse_double(k, *v);
  };
  if (const auto* v = get("model.name")) cfg.model.name = *v;
  num("model.omega0", cfg.model.tripod.omega0);
  num("model.k_l", cfg.model.tripod.k_l);
  num("model.xi", cfg.model.tripod.xi);
  num("model.x", cfg.model.tripod.x);
  num("model.z", cfg.model.tripod.z);
  if (const auto* v = get("protocol.scan")) {
    if (*v == "x") {
      cfg.model.scan = ScanAxis::x;
    } else if (*v == "z") {
      cfg.model.scan = ScanAxis::z;
    } else {
      throw Error(ErrorCode::ValidationError, "protocol.scan: expected x or z, got '" + *v + "'");
    }
  }
  num("protocol.start", cfg.start);
  num("protocol.velocity", cfg.velocity);
  const bool has_end = get("protocol.end") != nullptr;
  const bool has_duration = get("protocol.duration") != nullptr;
  if (has_end && has_duration) {
    throw Error(ErrorCode::ValidationError, "protocol.duration: give either end or duration");
  }
  if (has_end) {
    num("protocol.end", cfg.end);
  } else if (has_duration) {
    double duration = 0.0;
    num("protocol.duration", duration);
    if (!(duration > 0.0)) throw Error(ErrorCode::ValidationError, "protocol.duration: must be positive");
    cfg.end = cfg.start + cfg.velocity * duration;
  } else {
    cfg.end = cfg.start + 40.0;
  }
  num("run.dt", cfg.dt);
  num("run.sample_interval", cfg.sample_interval);
  num("run.wz_step", cfg.wz_step);
  if (const auto* v = get("run.scenario")) {
    if (*v == "on_patch_start") {
      cfg.scenario = Scenario::on_patch_start;
    } else if (*v == "offset_start") {
      cfg.scenario = Scenario::offset_start;
    } else {
      throw Error(ErrorCode::ValidationError,
                  "run.scenario: expected on_patch_start or offset_start, got '" + *v + "'");
    }
  }
  if (const auto* v = get("run.distance")) {
    if (*v == "raw") {
      cfg.distance = DistanceMode::raw;
    } else if (*v == "phase_aligned") {
      cfg.distance = DistanceMode::phase_aligned;
    } else {
      throw Error(ErrorCode::ValidationError,
                  "run.distance: expected raw or phase_aligned, got '" + *v + "'");
    }
  }
  if (const auto* v = get("run.seed")) {
    const long long s = parse_int("run.seed", *v);
    if (s < 0) throw Error(ErrorCode::ValidationError, "run.seed: must be non-negative");
    cfg.seed = static_cast<unsigned long long>(s);
  }
  if (const auto* v = get("run.c0")) {
    if (*v == "random") {
      cfg.random_c0 = true;
    } else {
      const auto items = split_list(*v);
      cfg.c0 = CVector(static_cast<Eigen::Index>(items.size()));
      for (std::size_t i = 0; i < items.size(); ++i) cfg.c0(i) = parse_complex("run.c0", items[i]);
    }
  }
  if (const auto* v = get("run.output")) cfg.output = *v;
  if (const auto* v = get("run.out_dir")) cfg.out_dir = *v;
  if (const auto* v = get("run.prediction_points")) {
    cfg.prediction_points = static_cast<int>(parse_int("run.prediction_points", *v));
  }
  if (const auto* v = get("sweep.velocities")) {
    for (const auto& item : split_list(*v)) cfg.velocities.push_back(parse_double("sweep.velocities", item));
  }
  if (const auto* v = get("sweep.workers")) cfg.workers = static_cast<int>(parse_int("sweep.workers", *v));
  validate(cfg);
  if (!cfg.random_c0) cfg.c0.normalize();
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline ParamHamiltonian make_model(const RunConfig& cfg) {
  if (cfg.model.name != "tripod") {
    throw Error(ErrorCode::ValidationError, "model.name: unknown model '" + cfg.model.name + "'");
  }
  return tripod_model(cfg.model.tripod, cfg.model.scan);
}

/// Linear sweep over [start, end] at |v|; a velocity whose sign opposes
/// end - start traverses the same interval backwards.
inline Protocol make_protocol(const RunConfig& cfg, double v) {
  const bool forward = (cfg.end > cfg.start) == (v > 0.0);
  const double from = forward ? cfg.start : cfg.end;
  const double to = forward ? cfg.end : cfg.start;
  return Protocol::between(from, to, std::abs(v));
}

inline CVector initial_coefficients(const RunConfig& cfg) {
  if (!cfg.random_c0) return cfg.c0;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> g;
  CVector c(2);
  for (int i = 0; i < 2; ++i) c(i) = Complex(g(rng), g(rng));
  return c / c.norm();
}

/// Shortest round-trip decimal text is not required; 17 significant digits
/// always are.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline constexpr std::string_view kTraceHeader = "t,R,d_perp,d_par,norm_err,predicted_offset";

inline std::string trace_csv(const DeviationTrace& trace) {
  std::string out;
  out.reserve(trace.size() * 120 + 64);
  out += kTraceHeader;
  out += "\r\n";
  for (const auto& r : trace.records) {
    for (double v : {r.t, r.R, r.d_perp, r.d_par, r.norm_err}) {
      out += format_double(v);
      out += ',';
    }
    out += format_double(r.predicted_offset);
    out += "\r\n";
  }
  return out;
}

/// Writes via a temporary sibling and rename so readers never see a partial file.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + path.parent_path().string());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename to " + path.string());
}

struct RunResult {
  DeviationTrace trace;
  TraceSummary summary;
  double velocity = 0.0;
  double predicted_offset_start = 0.0;  // ||delta psi|| at the first sample
  std::filesystem::path csv;
};

/// Offset magnitudes predicted at `points` evenly spaced samples, linearly
/// interpolated in t onto every sample. Also returns delta psi at sample 0.
inline std::vector<double> predicted_offsets(const ParamHamiltonian& model, const WZTrajectory& wz,
                                             double v, int points, const OffsetOptions& opts,
                                             CVector* offset_at_start = nullptr) {
  const std::size_t n = wz.size();
  std::vector<std::size_t> idx;
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(points), n);
  for (std::size_t k = 0; k < count; ++k) {
    idx.push_back(count == 1 ? 0 : (k * (n - 1)) / (count - 1));
  }
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  std::vector<double> at(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto pred = predict_offset(model, wz.point(idx[k]), v, opts);
    at[k] = pred.offset.as_state.norm();
    if (k == 0 && offset_at_start) {
      // The WZ state at t = 0 carries no dynamical phase, so the offset applies as is.
      *offset_at_start = pred.offset.as_state;
    }
  }
  std::vector<double> out(n, at.front());
  for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
    const double t0 = wz.t[idx[k]], t1 = wz.t[idx[k + 1]];
    for (std::size_t j = idx[k]; j <= idx[k + 1]; ++j) {
      const double s = t1 > t0 ? (wz.t[j] - t0) / (t1 - t0) : 0.0;
      out[j] = (1.0 - s) * at[k] + s * at[k + 1];
    }
  }
  return out;
}

/// One protocol run: WZ reference, predicted offsets, exact integration from
/// the scenario's initial state, deviation decomposition, CSV (if `write`).
inline RunResult run_scenario(const RunConfig& cfg, double velocity, Scenario scenario,
                              const std::filesystem::path& csv_path, bool write = true) {
  const ParamHamiltonian model = make_model(cfg);
  const Protocol prot = make_protocol(cfg, velocity);
  const SampleGrid grid = make_sample_grid(prot, cfg.dt, cfg.sample_interval);
  WzOptions wz_opts;
  wz_opts.step_R = cfg.wz_step;
  const WZTrajectory wz = integrate_wz(model, prot, initial_coefficients(cfg), grid.times, wz_opts);

  OffsetOptions off_opts;
  off_opts.wz = wz_opts;
  CVector delta0;
  const std::vector<double> predicted =
      predicted_offsets(model, wz, prot.velocity(), cfg.prediction_points, off_opts, &delta0);

  CVector psi0 = wz.states.front();
  if (scenario == Scenario::offset_start) psi0 += delta0;
  const Trajectory exact =
      integrate_schrodinger(model, prot, StateVector::normalized(psi0), cfg.dt, cfg.sample_interval);

  RunResult res;
  res.velocity = prot.velocity();
  res.trace = decompose_deviation(exact, wz, cfg.distance, predicted);
  res.trace.metadata = TraceMetadata{model.name, prot.start(), prot.velocity(), prot.duration(),
                                     cfg.dt, scenario, cfg.distance};
  res.summary = summarize(res.trace);
  res.predicted_offset_start = delta0.norm();
  if (write) {
    write_atomically(csv_path, trace_csv(res.trace));
    res.csv = csv_path;
  }
  return res;
}

inline RunResult run_scenario(const RunConfig& cfg) {
  return run_scenario(cfg, cfg.velocity, cfg.scenario,
                      std::filesystem::path(cfg.out_dir) / cfg.output);
}

inline std::string summary_line(const RunResult& r) {
  std::ostringstream os;
  os << std::setprecision(6) << "velocity=" << r.velocity << " scenario="
     << to_string(r.trace.metadata.scenario) << " mean_d_perp=" << r.summary.mean_perp
     << " std_d_perp=" << r.summary.std_perp << " max_d_par=" << r.summary.max_par
     << " predicted_offset=" << r.summary.mean_predicted;
  return os.str();
}

struct SweepResult {
  std::vector<RunResult> runs;
  std::optional<PowerLawFit> perp_fit;
  std::optional<PowerLawFit> par_fit;
  std::string fit_error;  // PoorFit message when a fit failed
  std::filesystem::path summary_csv;
  std::filesystem::path scaling_csv;
};

inline std::string velocity_tag(std::size_t index, double v) {
  std::ostringstream os;
  os << "run_" << std::setw(2) << std::setfill('0') << index << "_v" << std::setprecision(6) << v
     << ".csv";
  return os.str();
}

/// On-patch runs for every velocity on a worker pool, then summary.csv
/// (per-velocity statistics) and scaling.csv (fitted exponents). A failed fit
/// is reported in `fit_error` after both files are written.
inline SweepResult run_sweep(const RunConfig& cfg) {
  if (cfg.velocities.size() < 3) {
    throw Error(ErrorCode::ValidationError, "sweep.velocities: need at least 3 velocities");
  }
  const std::filesystem::path dir(cfg.out_dir);
  const std::size_t n = cfg.velocities.size();
  SweepResult out;
  out.runs.resize(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  unsigned workers = cfg.workers > 0 ? static_cast<unsigned>(cfg.workers)
                                     : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(n));
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out.runs[i] = run_scenario(cfg, cfg.velocities[i], Scenario::on_patch_start,
                                   dir / velocity_tag(i, cfg.velocities[i]));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::string summary = "velocity,mean_d_perp,std_d_perp,max_d_perp,max_d_par,mean_predicted_offset,csv\r\n";
  std::vector<double> vs, perps, pars;
  for (const auto& r : out.runs) {
    const auto& s = r.summary;
    summary += format_double(std::abs(r.velocity)) + "," + format_double(s.mean_perp) + "," +
               format_double(s.std_perp) + "," + format_double(s.max_perp) + "," +
               format_double(s.max_par) + "," + format_double(s.mean_predicted) + "," +
               csv_field(r.csv.filename().string()) + "\r\n";
    vs.push_back(std::abs(r.velocity));
    perps.push_back(s.mean_perp);
    pars.push_back(s.max_par);
  }
  out.summary_csv = dir / "summary.csv";
  write_atomically(out.summary_csv, summary);

  std::string scaling = "statistic,slope,intercept,r2,status\r\n";
  auto fit_row = [&](const char* name, const std::vector<double>& ys,
                     std::optional<PowerLawFit>& slot) {
    try {
      slot = fit_power_law(vs, ys);
      scaling += std::string(name) + "," + format_double(slot->slope) + "," +
                 format_double(slot->intercept) + "," + format_double(slot->r2) + ",ok\r\n";
    } catch (const Error& e) {
      if (e.code() != ErrorCode::PoorFit) throw;
      if (!out.fit_error.empty()) out.fit_error += "; ";
      out.fit_error += std::string(name) + ": " + e.what();
      scaling += std::string(name) + ",,,," + csv_field(e.what()) + "\r\n";
    }
  };
  fit_row("mean_perp", perps, out.perp_fit);
  fit_row("max_par", pars, out.par_fit);
  out.scaling_csv = dir / "scaling.csv";
  write_atomically(out.scaling_csv, scaling);
  return out;
}

/// Gamma, its spectrum and the predicted offset at the protocol start.
inline void emit_gamma(const RunConfig& cfg, std::ostream& os) {
  const ParamHamiltonian model = make_model(cfg);
  const Protocol prot = make_protocol(cfg, cfg.velocity);
  const WzPoint start{prot.start(), initial_frame(model, prot.start()), initial_coefficients(cfg)};
  const auto pred = predict_offset(model, start, prot.velocity());
  const Eigen::IOFormat fmt(Eigen::FullPrecision, 0, ", ", "\n", "  [", "]");
  os << "R = " << format_double(prot.start()) << ", velocity = " << format_double(prot.velocity())
     << "\nGamma (" << pred.spectrum.gamma.rows() << "x" << pred.spectrum.gamma.cols() << "):\n"
     << pred.spectrum.gamma.format(fmt) << "\neigenvalues d:\n";
  for (int i = 0; i < pred.spectrum.size(); ++i) {
    const Complex d = pred.spectrum.d(i);
    os << "  " << format_double(d.real()) << (d.imag() < 0 ? " - " : " + ")
       << format_double(std::abs(d.imag())) << "i" << (i < pred.spectrum.zero_modes ? "  (zero mode)" : "")
       << "\n";
  }
  os << "zero_tol = " << format_double(pred.spectrum.zero_tol)
     << "\neigenvector condition = " << format_double(pred.spectrum.condition)
     << "\nreconstruction residual = " << format_double(pred.spectrum.reconstruction_residual())
     << "\ntransformed tangent in-patch norm = " << format_double(pred.tangent.in_patch().norm())
     << "\ntransformed tangent NZ norm = " << format_double(pred.tangent.nz().norm())
     << "\npredicted offset norm = " << format_double(pred.offset.as_state.norm())
     << "\noffset imaginary residue = " << format_double(pred.offset.imag_residue) << "\n";
}

}  // namespace adiabatic

#endif
