#pragma once

#include "driftlab/io.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace driftlab {

const char* version();

/// Either a constant height or periodic samples on a uniform phi grid.
struct CurveSpec {
  double constant = 0.0;
  std::vector<double> samples;
  EssentialCurve make(int n) const;
};

struct ExperimentConfig {
  std::string name = "run";
  MapDef map = product_twist_standard(4.0);
  Band band{0.05, 0.35};
  Band sub_band{0.1, 0.3};
  struct Grid {
    int cyl_phi = 64, cyl_I = 16;
    int B_phi = 32, B_I = 16;
  } grid;
  struct Cylinder {
    double tol = 1e-10;
    int max_iter = 200;
  } cylinder;
  double delta = 0.05;
  int homoclinic_count = 1;
  struct Transport {
    CurveSpec gamma_minus{0.12, {}}, gamma_plus{0.28, {}};
    int samples = 512;
    double tol = 1e-7;
    int max_gen = 2000;
  } transport;
  struct Shadowing {
    int k_bar = 10;
    double gamma_rate = 2.0;
    int D = 5;
    double epsilon = -1.0;       // endpoint tolerance; default 2x the deviation bound
    double target_dI = 0.05;
    double return_radius = 0.05;
    double start_tol = 0.02;     // vertical distance of v*_0 from gamma_minus
  } shadowing;
  struct Check {
    int n_points = 1000;
    double symplectic_tol = 1e-9;
    double exact_tol = 1e-8;
    int quadrature = 512;
    bool homoclinic = true;
    int lambda_iterations = 10;
  } check;
  std::optional<SyntheticSpec> synthetic;
  struct Family {
    std::vector<PerturbationStep> steps;
    std::vector<double> mu1, mu2;
  } family;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  double tol_override = -1.0;
  std::string output_dir = "out";
  json source;  // as parsed
};

/// Throws ConfigError.
ExperimentConfig parse_config(const json& j);
ExperimentConfig load_config(const std::string& path);

enum ExitCode : int { kExitPass = 0, kExitFailure = 1, kExitInconclusive = 2, kExitConfig = 3 };

struct StageRecord {
  std::string name;
  double seconds = 0.0;
  bool passed = false;
  std::string detail;
  json data;
};

struct ArtifactRecord {
  std::string path;  // relative to the output directory
  std::string sha256;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::vector<StageRecord> stages;
  std::vector<ArtifactRecord> artifacts;
  json summary;
  int exit_code = 0;

  /// with_timings = false drops the per-stage seconds (for determinism comparisons)
  json to_json(bool with_timings = true) const;
};

RunManifest cmd_check(const ExperimentConfig& cfg, const std::string& out_dir);
RunManifest cmd_cylinder(const ExperimentConfig& cfg, const std::string& out_dir);
RunManifest cmd_scattering(const ExperimentConfig& cfg, const std::string& out_dir);
RunManifest cmd_transport(const ExperimentConfig& cfg, const std::string& out_dir);
RunManifest cmd_drift(const ExperimentConfig& cfg, const std::string& out_dir);
RunManifest cmd_mu_scan(const ExperimentConfig& cfg, const std::string& out_dir);

/// Dispatch by subcommand name; writes manifest.json into out_dir. Unknown command: ConfigError.
RunManifest run_command(const std::string& command, const ExperimentConfig& cfg, const std::string& out_dir);

/// gnuplot-style column descriptions of the files a command emits.
std::string plot_columns(const std::string& command);

}  // namespace driftlab
