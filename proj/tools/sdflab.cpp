// Command line front end: reads a key=value experiment config and runs one
// of the four drivers. Exit codes: 0 success, 1 usage/config/runtime error,
// 2 run halted by a guard (C1, energy or distance bound, or a step guard).
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <string>

#include "sdflab/io.hpp"

namespace {

int usage(std::FILE* to) {
  std::fprintf(to,
               "usage: sdflab <run|stability|identity|probe> --config <path> "
               "[--out <dir>]\n"
               "  run        integrate the flow; writes series.csv and "
               "final.snap\n"
               "  stability  spectrum of the second-variation operator; "
               "writes stability.json\n"
               "  identity   energy-identity residuals across halved dt; "
               "writes identity.csv\n"
               "  probe      Poincare and interpolation inequality probes; "
               "writes probe.txt\n");
  return to == stdout ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc >= 2 && (std::string(argv[1]) == "--help" ||
                    std::string(argv[1]) == "-h"))
    return usage(stdout);
  if (argc < 2) return usage(stderr);

  const std::string subcommand = argv[1];
  std::string config_path;
  std::string out_dir;
  for (int i = 2; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      config_path = argv[++i];
    } else if (arg == "--out" && i + 1 < argc) {
      out_dir = argv[++i];
    } else {
      std::fprintf(stderr, "unrecognized argument '%s'\n", arg.c_str());
      return usage(stderr);
    }
  }
  if (config_path.empty()) {
    std::fprintf(stderr, "missing --config <path>\n");
    return usage(stderr);
  }

  try {
    std::ifstream in(config_path);
    if (!in) {
      std::fprintf(stderr, "cannot open config '%s'\n", config_path.c_str());
      return 1;
    }
    std::ostringstream text;
    text << in.rdbuf();
    sdflab::ExperimentConfig cfg = sdflab::parse_config(text.str());
    if (out_dir.empty()) out_dir = cfg.out_dir;
    return sdflab::dispatch(subcommand, cfg, out_dir);
  } catch (const sdflab::ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
