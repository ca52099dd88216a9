#pragma once
// Experiment configuration, text artifacts and the subcommand drivers shared
// by the command line tool and the acceptance harness. All reals are written
// with 17 significant digits, enough for binary doubles to round-trip
// bit-exactly, so identical runs produce byte-identical files.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdflab/flow.hpp"
#include "sdflab/stability.hpp"

namespace sdflab {

// Thrown by parse_config; the message carries one line per violated
// constraint so a bad file is fixed in one round.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One cosine perturbation: amplitude * cos(k . x + phase) for graphs
// (one integer per grid axis), or a radial amplitude * cos(m t + phase)
// for curves (single integer).
struct FourierMode {
  std::vector<int> wavenumbers;
  double amplitude = 0.0;
  double phase = 0.0;
};

struct ExperimentConfig {
  // surface.*
  std::string kind = "lamella";  // "lamella" or "curve"
  std::vector<int> resolution;   // graphs: nodes per axis
  std::vector<double> periods;   // graphs: box periods, default 2*pi each
  double level = 0.0;            // graphs: reference height
  int nodes = 256;               // curves: node count
  double area = 3.14159265358979323846264338328;  // curves: base-circle area
  std::vector<FourierMode> modes;
  std::string snapshot_path;     // optional: restart from a snapshot file

  // flow.*
  FlowConfig flow;

  // diag.*
  std::uint64_t seed = 2026;  // probe sampling
  int samples = 50;           // probe sample count

  // output.*
  std::string out_dir;
};

// Parses the line-oriented key=value format (sections surface., flow.,
// diag., output.; '#' comments; surface.mode repeatable). Collects every
// violation before throwing.
ExperimentConfig parse_config(const std::string& text);

// Initial states assembled from the config (or loaded from snapshot_path).
GraphSurface build_graph_initial(const ExperimentConfig& cfg);
ParametricCurve build_curve_initial(const ExperimentConfig& cfg);

// Fixed 17-significant-digit decimal; recovers the double exactly on
// read-back.
std::string render_real(double x);

// Series CSV: fixed header, one row per sample, '# halt: <reason>' footer.
// Curves append the isoperimetric deficit as a final column.
void write_series(const std::string& path, const std::vector<SeriesRow>& rows,
                  bool curve_columns, HaltReason halt);

// One header line (version, kind, dims, geometry, time) + node values.
struct Snapshot {
  std::string kind;             // "lamella" or "curve"
  std::vector<int> dims;        // grid shape, or {node count}
  std::vector<double> periods;  // graphs only
  double level = 0.0;           // graphs only
  double t = 0.0;
  std::vector<double> values;   // graphs: heights; curves: x then y
};

void write_snapshot(const std::string& path, const Snapshot& snap);
Snapshot read_snapshot(const std::string& path);

Snapshot graph_snapshot(const GraphSurface& s, double t);
Snapshot curve_snapshot(const ParametricCurve& c, double t);

// Energy-identity convergence table: the residual of the Dirichlet-energy
// derivative identity across halved step sizes, first order in dt.
struct IdentityRow {
  double dt = 0.0;
  double residual = 0.0;
};
std::vector<IdentityRow> identity_study(const ExperimentConfig& cfg,
                                        int levels = 3);

// Subcommand drivers. Each writes its artifacts under out_dir and prints a
// short summary; returns the process exit code (0 ok, 2 failure-class halt).
int run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);
int run_stability(const ExperimentConfig& cfg, const std::string& out_dir);
int run_identity(const ExperimentConfig& cfg, const std::string& out_dir);
int run_probe(const ExperimentConfig& cfg, const std::string& out_dir);

// subcommand in {run, stability, identity, probe}; throws ConfigError on an
// unknown name.
int dispatch(const std::string& subcommand, const ExperimentConfig& cfg,
             const std::string& out_dir);

}  // namespace sdflab
