#pragma once

// Front-end for the cbie tool. Exposed as a library so tests can drive the
// subcommands in-process.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cbie/adaptive.hpp"
#include "cbie/geometry.hpp"
#include "cbie/postprocess.hpp"
#include "cbie/solver.hpp"

namespace cbie::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNotConverged = 1;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitInternalError = 3;

// Name of the environment variable that sets the default output directory.
inline constexpr const char* kOutputDirEnv = "CBIE_OUTPUT_DIR";

struct GeometrySpec {
  std::string type = "sphere";  // sphere | toroid | mesh
  double diameter = 1.0;        // sphere, in units of the wavelength's length unit
  int refinement = 2;           // sphere: 6 r^2 patches
  bool non_uniform = false;
  double d_out = 4.0, d_in = 2.0;  // toroid
  int n_major = 24, n_minor = 8;
  std::string path;  // mesh
};

struct SweepSpec {
  double theta_start = 0.0;
  double theta_stop = 180.0;
  double theta_step = 0.5;
  double phi = 90.0;
};

struct RunConfig {
  GeometrySpec geometry;
  double wavelength = 1.0;
  int order = 10;
  AdaptiveConfig adaptive;
  GmresOptions gmres;
  bool dense = false;
  std::string output_dir;  // empty: $CBIE_OUTPUT_DIR or "."
  std::string cache_dir;   // empty: no precompute cache
  SweepSpec sweep;

  void validate() const;
  double k0() const { return 2.0 * kPi / wavelength; }
};

RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

Mesh build_mesh(const RunConfig& cfg);
std::filesystem::path output_directory(const RunConfig& cfg);

// CSV helpers (17 significant digits, '.' decimal separator).
std::string format_double(double x);
void write_rcs_csv(const std::filesystem::path& path, const FarFieldPattern& pattern);

struct HistogramBin {
  double lo = 0, hi = 0;
  std::size_t count = 0;
};
std::vector<HistogramBin> histogram(std::vector<double> values, int bins);

/// Entry point; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace cbie::cli
