#include "sdflab/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>
#include <utility>

#include <json.hpp>

namespace sdflab {

namespace {

constexpr double kPi = 3.14159265358979323846264338328;

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string_view::npos) return "";
  const auto b = s.find_last_not_of(ws);
  return std::string(s.substr(a, b - a + 1));
}

bool to_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) return false;
  out = v;
  return true;
}

bool to_int(const std::string& s, long long& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || errno == ERANGE) return false;
  out = v;
  return true;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

// Accumulates violations; each entry cites the key and line so a bad file is
// fixed in one pass.
struct Violations {
  std::vector<std::string> items;
  void add(int line, const std::string& what) {
    items.push_back(line > 0 ? "line " + std::to_string(line) + ": " + what
                             : what);
  }
  void raise_if_any() const {
    if (items.empty()) return;
    std::string msg = "invalid configuration:";
    for (const std::string& item : items) msg += "\n  " + item;
    throw ConfigError(msg);
  }
};

GeometryOptions geometry_options(const FlowConfig& c) {
  GeometryOptions opt;
  opt.dealias_curvature = c.dealias;
  opt.threads = c.threads;
  return opt;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  Violations bad;
  std::set<std::string> seen;
  std::vector<std::pair<int, std::string>> mode_lines;

  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      bad.add(lineno, "expected 'key = value', got '" + line + "'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "surface.mode") {
      mode_lines.emplace_back(lineno, value);
      continue;
    }
    if (!seen.insert(key).second) {
      bad.add(lineno, "duplicate key '" + key + "'");
      continue;
    }

    auto real_into = [&](double& slot) {
      if (!to_double(value, slot))
        bad.add(lineno, "key '" + key + "': expected a real, got '" + value + "'");
    };
    auto int_into = [&](auto& slot) {
      long long v = 0;
      if (!to_int(value, v))
        bad.add(lineno,
                "key '" + key + "': expected an integer, got '" + value + "'");
      else
        slot = static_cast<std::decay_t<decltype(slot)>>(v);
    };
    auto bool_into = [&](bool& slot) {
      if (value == "on" || value == "true" || value == "1")
        slot = true;
      else if (value == "off" || value == "false" || value == "0")
        slot = false;
      else
        bad.add(lineno, "key '" + key + "': expected on/off, got '" + value + "'");
    };

    if (key == "surface.kind") {
      cfg.kind = value;
      if (value != "lamella" && value != "curve")
        bad.add(lineno, "surface.kind must be 'lamella' or 'curve', got '" +
                            value + "'");
    } else if (key == "surface.resolution") {
      for (const std::string& item : split_list(value)) {
        long long n = 0;
        if (!to_int(item, n)) {
          bad.add(lineno, "surface.resolution: expected integers, got '" +
                              item + "'");
          break;
        }
        cfg.resolution.push_back(static_cast<int>(n));
      }
    } else if (key == "surface.periods") {
      for (const std::string& item : split_list(value)) {
        double p = 0;
        if (!to_double(item, p)) {
          bad.add(lineno,
                  "surface.periods: expected reals, got '" + item + "'");
          break;
        }
        cfg.periods.push_back(p);
      }
    } else if (key == "surface.level") {
      real_into(cfg.level);
    } else if (key == "surface.nodes") {
      int_into(cfg.nodes);
    } else if (key == "surface.area") {
      real_into(cfg.area);
    } else if (key == "surface.snapshot") {
      cfg.snapshot_path = value;
    } else if (key == "flow.dt") {
      real_into(cfg.flow.dt);
    } else if (key == "flow.scheme") {
      if (value == "imex" || value == "imex_stabilized")
        cfg.flow.scheme = TimeScheme::imex_stabilized;
      else if (value == "rk4" || value == "explicit_rk4" || value == "explicit")
        cfg.flow.scheme = TimeScheme::explicit_rk4;
      else
        bad.add(lineno, "flow.scheme must be 'imex' or 'rk4', got '" + value + "'");
    } else if (key == "flow.stabilizer") {
      real_into(cfg.flow.stabilizer);
    } else if (key == "flow.volume_correction") {
      bool_into(cfg.flow.volume_correction);
    } else if (key == "flow.max_steps") {
      int_into(cfg.flow.max_steps);
    } else if (key == "flow.sample_every") {
      int_into(cfg.flow.sample_every);
    } else if (key == "flow.dealias") {
      bool_into(cfg.flow.dealias);
    } else if (key == "flow.c1_bound") {
      real_into(cfg.flow.c1_bound);
    } else if (key == "flow.energy_bound") {
      real_into(cfg.flow.energy_bound);
    } else if (key == "flow.volume_distance_bound") {
      real_into(cfg.flow.volume_distance_bound);
    } else if (key == "flow.convergence_tol") {
      real_into(cfg.flow.convergence_tol);
    } else if (key == "flow.resample_every") {
      int_into(cfg.flow.resample_every);
    } else if (key == "flow.sigma") {
      real_into(cfg.flow.sigma);
    } else if (key == "flow.threads") {
      int_into(cfg.flow.threads);
    } else if (key == "diag.k") {
      real_into(cfg.flow.lyapunov_k);
    } else if (key == "diag.seed") {
      long long v = 0;
      if (!to_int(value, v) || v < 0)
        bad.add(lineno, "diag.seed: expected a nonnegative integer, got '" +
                            value + "'");
      else
        cfg.seed = static_cast<std::uint64_t>(v);
    } else if (key == "diag.samples") {
      int_into(cfg.samples);
    } else if (key == "output.dir") {
      cfg.out_dir = value;
    } else {
      bad.add(lineno, "unknown key '" + key + "'");
    }
  }

  const bool graph_kind = cfg.kind == "lamella";
  for (const auto& [line, value] : mode_lines) {
    const std::vector<std::string> parts = split_list(value);
    const std::size_t dim = graph_kind ? cfg.resolution.size() : 1;
    if (graph_kind && cfg.resolution.empty()) {
      bad.add(line, "surface.mode given before/without surface.resolution");
      continue;
    }
    if (parts.size() != dim + 2) {
      bad.add(line, "surface.mode: expected " + std::to_string(dim + 2) +
                        " comma-separated values (wavenumbers, amplitude, "
                        "phase), got " +
                        std::to_string(parts.size()));
      continue;
    }
    FourierMode mode;
    bool ok = true;
    for (std::size_t a = 0; a < dim; ++a) {
      long long k = 0;
      if (!to_int(parts[a], k)) {
        bad.add(line, "surface.mode: wavenumber '" + parts[a] +
                          "' is not an integer");
        ok = false;
        break;
      }
      mode.wavenumbers.push_back(static_cast<int>(k));
    }
    if (!ok) continue;
    if (!to_double(parts[dim], mode.amplitude) ||
        !std::isfinite(mode.amplitude)) {
      bad.add(line, "surface.mode: amplitude '" + parts[dim] +
                        "' is not a finite real");
      continue;
    }
    if (!to_double(parts[dim + 1], mode.phase) || !std::isfinite(mode.phase)) {
      bad.add(line,
              "surface.mode: phase '" + parts[dim + 1] + "' is not a finite real");
      continue;
    }
    if (graph_kind) {
      if (cfg.flow.dealias) {
        for (std::size_t a = 0; a < dim; ++a)
          if (3 * std::abs(mode.wavenumbers[a]) >= cfg.resolution[a])
            bad.add(line, "surface.mode (" + value +
                              "): wavenumber on axis " + std::to_string(a) +
                              " must stay below N/3 = " +
                              std::to_string(cfg.resolution[a]) +
                              "/3 with dealiasing on");
      }
    } else {
      if (mode.wavenumbers[0] < 1)
        bad.add(line, "surface.mode: curve mode index must be >= 1");
      else if (3 * mode.wavenumbers[0] >= cfg.nodes && cfg.flow.dealias)
        bad.add(line, "surface.mode (" + value +
                          "): mode index must stay below nodes/3 = " +
                          std::to_string(cfg.nodes) + "/3 with dealiasing on");
    }
    cfg.modes.push_back(std::move(mode));
  }

  if (graph_kind && cfg.snapshot_path.empty()) {
    if (cfg.resolution.empty()) {
      bad.add(0, "surface.resolution is required for lamella surfaces");
    } else {
      for (int n : cfg.resolution)
        if (n < 8 || n % 2 != 0)
          bad.add(0, "surface.resolution entries must be even and >= 8, got " +
                         std::to_string(n));
    }
    if (cfg.periods.empty())
      cfg.periods.assign(cfg.resolution.size(), 2.0 * kPi);
    if (cfg.periods.size() != cfg.resolution.size())
      bad.add(0, "surface.periods must match surface.resolution in length");
    for (double p : cfg.periods)
      if (!(p > 0.0) || !std::isfinite(p))
        bad.add(0, "surface.periods entries must be positive reals");
    if (!std::isfinite(cfg.level))
      bad.add(0, "surface.level must be finite");
  }
  if (!graph_kind) {
    if (cfg.nodes < 16 || cfg.nodes % 2 != 0)
      bad.add(0, "surface.nodes must be even and >= 16, got " +
                     std::to_string(cfg.nodes));
    if (!(cfg.area > 0.0) || !std::isfinite(cfg.area))
      bad.add(0, "surface.area must be a positive real");
  }

  if (!(cfg.flow.dt >= 0.0) || !std::isfinite(cfg.flow.dt))
    bad.add(0, "flow.dt must be a finite nonnegative real (0 = default)");
  if (cfg.flow.stabilizer != 0.0 && cfg.flow.stabilizer < 1.0)
    bad.add(0, "flow.stabilizer must be 0 (auto) or >= 1");
  if (cfg.flow.max_steps < 0) bad.add(0, "flow.max_steps must be >= 0");
  if (cfg.flow.sample_every < 1) bad.add(0, "flow.sample_every must be >= 1");
  if (cfg.flow.resample_every < 1)
    bad.add(0, "flow.resample_every must be >= 1");
  if (cfg.flow.c1_bound < 0.0) bad.add(0, "flow.c1_bound must be >= 0");
  if (cfg.flow.energy_bound < 0.0) bad.add(0, "flow.energy_bound must be >= 0");
  if (cfg.flow.volume_distance_bound < 0.0)
    bad.add(0, "flow.volume_distance_bound must be >= 0");
  if (!(cfg.flow.convergence_tol > 0.0))
    bad.add(0, "flow.convergence_tol must be positive");
  if (cfg.flow.sigma < 0.0) bad.add(0, "flow.sigma must be >= 0 (0 = default)");
  if (cfg.flow.threads < 1) bad.add(0, "flow.threads must be >= 1");
  if (!(cfg.flow.lyapunov_k > 2.0)) bad.add(0, "diag.k must exceed 2");
  if (cfg.samples < 1) bad.add(0, "diag.samples must be >= 1");

  bad.raise_if_any();
  return cfg;
}

GraphSurface build_graph_initial(const ExperimentConfig& cfg) {
  if (!cfg.snapshot_path.empty()) {
    Snapshot snap = read_snapshot(cfg.snapshot_path);
    if (snap.kind != "lamella")
      throw std::runtime_error("snapshot '" + cfg.snapshot_path +
                               "' holds a " + snap.kind +
                               ", not a graph surface");
    GridPtr grid = make_grid(FlatTorus{snap.periods}, snap.dims);
    if (snap.values.size() != grid->node_count())
      throw std::runtime_error("snapshot '" + cfg.snapshot_path +
                               "' value count does not match its dims");
    ScalarField h{grid, snap.values};
    return make_graph(std::move(h), snap.level);
  }
  GridPtr grid = make_grid(FlatTorus{cfg.periods}, cfg.resolution);
  ScalarField h = sample_field(grid, [&](std::span<const double> x) {
    double v = cfg.level;
    for (const FourierMode& mode : cfg.modes) {
      double arg = mode.phase;
      for (std::size_t a = 0; a < x.size(); ++a)
        arg += mode.wavenumbers[a] * x[a];
      v += mode.amplitude * std::cos(arg);
    }
    return v;
  });
  return make_graph(std::move(h), cfg.level);
}

ParametricCurve build_curve_initial(const ExperimentConfig& cfg) {
  if (!cfg.snapshot_path.empty()) {
    Snapshot snap = read_snapshot(cfg.snapshot_path);
    if (snap.kind != "curve")
      throw std::runtime_error("snapshot '" + cfg.snapshot_path + "' holds a " +
                               snap.kind + ", not a curve");
    const int m = snap.dims.at(0);
    if (static_cast<int>(snap.values.size()) != 2 * m)
      throw std::runtime_error("snapshot '" + cfg.snapshot_path +
                               "' value count does not match its node count");
    std::vector<double> x(snap.values.begin(), snap.values.begin() + m);
    std::vector<double> y(snap.values.begin() + m, snap.values.end());
    return make_curve(std::move(x), std::move(y));
  }
  const double radius = std::sqrt(cfg.area / kPi);
  return sample_curve(cfg.nodes, [&](double t) {
    double r = 1.0;
    for (const FourierMode& mode : cfg.modes)
      r += mode.amplitude * std::cos(mode.wavenumbers[0] * t + mode.phase);
    r *= radius;
    return std::array<double, 2>{r * std::cos(t), r * std::sin(t)};
  });
}

std::string render_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

void write_series(const std::string& path, const std::vector<SeriesRow>& rows,
                  bool curve_columns, HaltReason halt) {
  std::ofstream out = open_out(path);
  out << "t,area,volume,dirichlet,hessian,lyapunov,sup_grad,D,pi_margin,"
         "fit_residual";
  if (curve_columns) out << ",deficit";
  out << '\n';
  for (const SeriesRow& row : rows) {
    out << render_real(row.t) << ',' << render_real(row.area) << ','
        << render_real(row.volume) << ',' << render_real(row.dirichlet) << ','
        << render_real(row.hessian) << ',' << render_real(row.lyapunov) << ','
        << render_real(row.sup_grad) << ',' << render_real(row.distance) << ','
        << render_real(row.pi_margin) << ',' << render_real(row.fit_residual);
    if (curve_columns) out << ',' << render_real(row.deficit);
    out << '\n';
  }
  out << "# halt: " << halt_reason_name(halt) << '\n';
  if (!out) throw std::runtime_error("write failed on '" + path + "'");
}

void write_snapshot(const std::string& path, const Snapshot& snap) {
  std::ofstream out = open_out(path);
  out << "sdflab-snapshot-v1 kind=" << snap.kind << " dims=";
  for (std::size_t i = 0; i < snap.dims.size(); ++i)
    out << (i ? "," : "") << snap.dims[i];
  if (snap.kind == "lamella") {
    out << " periods=";
    for (std::size_t i = 0; i < snap.periods.size(); ++i)
      out << (i ? "," : "") << render_real(snap.periods[i]);
    out << " level=" << render_real(snap.level);
  }
  out << " t=" << render_real(snap.t) << '\n';
  for (double v : snap.values) out << render_real(v) << '\n';
  if (!out) throw std::runtime_error("write failed on '" + path + "'");
}

Snapshot read_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::string header;
  if (!std::getline(in, header))
    throw std::runtime_error("snapshot '" + path + "' is empty");
  std::istringstream head(header);
  std::string tag;
  head >> tag;
  if (tag != "sdflab-snapshot-v1")
    throw std::runtime_error("snapshot '" + path +
                             "': unrecognized header tag '" + tag + "'");
  Snapshot snap;
  std::string token;
  while (head >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("snapshot '" + path + "': bad header token '" +
                               token + "'");
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "kind") {
      snap.kind = value;
    } else if (key == "dims") {
      for (const std::string& item : split_list(value)) {
        long long n = 0;
        if (!to_int(item, n))
          throw std::runtime_error("snapshot '" + path + "': bad dim '" +
                                   item + "'");
        snap.dims.push_back(static_cast<int>(n));
      }
    } else if (key == "periods") {
      for (const std::string& item : split_list(value)) {
        double p = 0;
        if (!to_double(item, p))
          throw std::runtime_error("snapshot '" + path + "': bad period '" +
                                   item + "'");
        snap.periods.push_back(p);
      }
    } else if (key == "level") {
      if (!to_double(value, snap.level))
        throw std::runtime_error("snapshot '" + path + "': bad level");
    } else if (key == "t") {
      if (!to_double(value, snap.t))
        throw std::runtime_error("snapshot '" + path + "': bad time");
    } else {
      throw std::runtime_error("snapshot '" + path + "': unknown header key '" +
                               key + "'");
    }
  }
  std::string line;
  while (std::getline(in, line)) {
    const std::string item = trim(line);
    if (item.empty()) continue;
    double v = 0;
    if (!to_double(item, v))
      throw std::runtime_error("snapshot '" + path + "': bad value '" + item +
                               "'");
    snap.values.push_back(v);
  }
  return snap;
}

Snapshot graph_snapshot(const GraphSurface& s, double t) {
  Snapshot snap;
  snap.kind = "lamella";
  snap.dims = s.grid()->shape();
  snap.periods = s.grid()->torus().periods;
  snap.level = s.reference_height;
  snap.t = t;
  snap.values = s.heights.values;
  return snap;
}

Snapshot curve_snapshot(const ParametricCurve& c, double t) {
  Snapshot snap;
  snap.kind = "curve";
  snap.dims = {c.size()};
  snap.t = t;
  snap.values = c.x;
  snap.values.insert(snap.values.end(), c.y.begin(), c.y.end());
  return snap;
}

std::vector<IdentityRow> identity_study(const ExperimentConfig& cfg,
                                        int levels) {
  if (cfg.kind != "lamella")
    throw ConfigError("the identity study runs on lamella surfaces only");
  if (levels < 1) throw ConfigError("identity study needs at least one level");
  GraphSurface s0 = build_graph_initial(cfg);
  SpectralWorkspace ws(s0.grid());
  const GeometryOptions opt = geometry_options(cfg.flow);
  GeometryCache cache0 = build_geometry(s0, ws, opt);
  const double d0 = dirichlet_energy(cache0, ws);
  double stabilizer = cfg.flow.stabilizer;
  if (stabilizer <= 0.0) {
    const double w2 = 1.0 + cache0.sup_grad * cache0.sup_grad;
    stabilizer = 1.0 + w2 * w2;
  }
  const double target = enclosed_volume(s0);
  const double base_dt = cfg.flow.dt > 0.0 ? cfg.flow.dt : 1e-5;

  std::vector<IdentityRow> rows;
  for (int k = 0; k < levels; ++k) {
    const double dt = base_dt / static_cast<double>(1 << k);
    GraphSurface s1 = step_graph(s0, ws, cfg.flow, dt, stabilizer, target);
    GraphSurface s2 = step_graph(s1, ws, cfg.flow, dt, stabilizer, target);
    GeometryCache cache1 = build_geometry(s1, ws, opt);
    GeometryCache cache2 = build_geometry(s2, ws, opt);
    const IdentityTerms mid = identity_terms(cache1, ws);
    const double d2 = dirichlet_energy(cache2, ws);
    rows.push_back({dt, energy_identity_residual(d0, d2, 2.0 * dt, mid)});
  }
  return rows;
}

namespace {

std::string out_path(const std::string& out_dir, const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
  fs::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  HaltReason halt;
  if (cfg.kind == "curve") {
    CurveRunResult res = run_curve_flow(build_curve_initial(cfg), cfg.flow);
    write_series(out_path(out_dir, "series.csv"), res.series, true, res.halt);
    write_snapshot(out_path(out_dir, "final.snap"),
                   curve_snapshot(res.curve, res.time));
    std::printf("halt: %s\nsteps: %lld\ntime: %s\ndeficit: %s\n",
                halt_reason_name(res.halt), static_cast<long long>(res.steps),
                render_real(res.time).c_str(),
                render_real(res.series.back().deficit).c_str());
    halt = res.halt;
  } else {
    GraphRunResult res = run_graph_flow(build_graph_initial(cfg), cfg.flow);
    write_series(out_path(out_dir, "series.csv"), res.series, false, res.halt);
    write_snapshot(out_path(out_dir, "final.snap"),
                   graph_snapshot(res.surface, res.time));
    std::printf("halt: %s\nsteps: %lld\ntime: %s\nfit_residual: %s\n",
                halt_reason_name(res.halt), static_cast<long long>(res.steps),
                render_real(res.time).c_str(),
                render_real(res.series.back().fit_residual).c_str());
    halt = res.halt;
  }
  return halt_is_failure(halt) ? 2 : 0;
}

int run_stability(const ExperimentConfig& cfg, const std::string& out_dir) {
  StabilityReport rep;
  std::string surface_label;
  if (cfg.kind == "curve") {
    // The analyzer works on references; a curve config is analyzed as its
    // equal-area circle.
    const double radius = std::sqrt(cfg.area / kPi);
    rep = analyze_stability(circle_reference(radius, cfg.nodes), 1e-7,
                            cfg.flow.threads);
    surface_label = "circle";
  } else if (cfg.modes.empty() && cfg.snapshot_path.empty()) {
    GridPtr grid = make_grid(FlatTorus{cfg.periods}, cfg.resolution);
    rep = analyze_stability(lamella_reference(grid, cfg.level), 1e-7,
                            cfg.flow.threads);
    surface_label = "lamella";
  } else {
    rep = analyze_stability(graph_reference(build_graph_initial(cfg)), 1e-7,
                            cfg.flow.threads);
    surface_label = "graph";
  }

  nlohmann::json j;
  j["surface"] = surface_label;
  j["sigma_min"] = rep.sigma_min;
  j["zero_modes"] = rep.zero_modes;
  j["classification"] = classification_name(rep.classification);
  j["low_spectrum"] = rep.low_spectrum;
  j["surviving_axes"] = rep.surviving_axes;
  j["max_asymmetry"] = rep.max_asymmetry;
  j["zero_tol"] = rep.zero_tol;
  std::ofstream out = open_out(out_path(out_dir, "stability.json"));
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed on stability.json");
  std::printf("surface: %s\nsigma_min: %s\nzero_modes: %d\nclass: %s\n",
              surface_label.c_str(), render_real(rep.sigma_min).c_str(),
              rep.zero_modes, classification_name(rep.classification));
  return 0;
}

int run_identity(const ExperimentConfig& cfg, const std::string& out_dir) {
  const std::vector<IdentityRow> rows = identity_study(cfg);
  std::ofstream out = open_out(out_path(out_dir, "identity.csv"));
  out << "dt,residual,ratio\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << render_real(rows[i].dt) << ',' << render_real(rows[i].residual)
        << ',';
    if (i > 0) out << render_real(rows[i - 1].residual / rows[i].residual);
    out << '\n';
    std::printf("dt=%s residual=%s\n", render_real(rows[i].dt).c_str(),
                render_real(rows[i].residual).c_str());
  }
  if (!out) throw std::runtime_error("write failed on identity.csv");
  return 0;
}

int run_probe(const ExperimentConfig& cfg, const std::string& out_dir) {
  if (cfg.kind != "lamella")
    throw ConfigError("the probe subcommand runs on lamella surfaces only");
  GridPtr grid = make_grid(FlatTorus{cfg.periods}, cfg.resolution);
  const PoincareReport pr = poincare_probe(grid, cfg.samples, cfg.seed);
  const GNReport gr = gn_probe(grid, GNExponents{}, cfg.samples, cfg.seed);
  std::ofstream out = open_out(out_path(out_dir, "probe.txt"));
  out << "poincare_worst_ratio = " << render_real(pr.worst_ratio) << '\n'
      << "poincare_bound = " << render_real(pr.bound) << '\n'
      << "poincare_samples = " << pr.samples << '\n'
      << "gn_worst_ratio = " << render_real(gr.worst_ratio) << '\n'
      << "gn_worst_ratio_doubled = " << render_real(gr.worst_ratio_doubled)
      << '\n';
  if (!out) throw std::runtime_error("write failed on probe.txt");
  std::printf("poincare: worst %s of bound %s\ngn: worst %s\n",
              render_real(pr.worst_ratio).c_str(),
              render_real(pr.bound).c_str(),
              render_real(gr.worst_ratio).c_str());
  return 0;
}

int dispatch(const std::string& subcommand, const ExperimentConfig& cfg,
             const std::string& out_dir) {
  if (subcommand == "run") return run_experiment(cfg, out_dir);
  if (subcommand == "stability") return run_stability(cfg, out_dir);
  if (subcommand == "identity") return run_identity(cfg, out_dir);
  if (subcommand == "probe") return run_probe(cfg, out_dir);
  throw ConfigError("unknown subcommand '" + subcommand + "'");
}

}  // namespace sdflab
