#pragma once

// Stage functions shared by the CLI subcommands, and the full pipeline run.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qcube/cube.hpp"
#include "qcube/dataset.hpp"
#include "qcube/error.hpp"
#include "qcube/ingest.hpp"
#include "qcube/kinematics.hpp"
#include "qcube/pca.hpp"

namespace qcube {

struct RunConfig {
  std::filesystem::path input_dir;
  std::filesystem::path output_dir;
  BinLayout layout;
  KinematicThresholds thresholds;
  double rate_hz = 10.0;
  int reps = 10'000;
  double alpha_base = 0.05;
  std::uint64_t seed = 1;
  std::string design = "half+position+logtime";
  /// Extra designs ranked against `design` in dmr_model_comparison.csv.
  std::vector<std::string> compare_designs;
  double variance_cutoff = 0.9;
  PcaInput pca_input = PcaInput::kProportions;
  double z_cut = 3.0;
  double angle_baseline_deg = kDefaultAngleBaseline;
  EligibilityRule eligibility;
  std::optional<std::filesystem::path> boundaries_in;
  unsigned threads = 0;  // 0: all cores

  /// Throws kInvalidArgument on non-positive numeric fields or a cutoff
  /// outside (0, 1].
  void validate() const;
};

/// An error raised inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.kind(), cause.what()), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct ManifestEntry {
  std::string stage;
  std::string path;  // relative to the output directory
  std::string sha256;
  std::int64_t rows = 0;  // data rows for CSV, 1 for JSON
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::string to_json() const;
};

/// `<athlete>__<match>__h<n>`.
std::string trace_stem(const TraceMetadata& meta);

struct IngestOutput {
  std::vector<PlanarTrace> traces;  // retained halves only
  EligibilityReport report;
};

IngestOutput ingest_directory(const std::filesystem::path& input_dir,
                              const EligibilityRule& rule = {}, unsigned threads = 0);

std::vector<KinematicSeries> compute_kinematics(std::span<const PlanarTrace> traces,
                                                double rate_hz, const KinematicThresholds& thresholds,
                                                unsigned threads = 0);

/// Cubes in dataset order (match, athlete, half).
std::vector<QuantileCube> compute_cubes(std::span<const KinematicSeries> series,
                                        const QuantileBoundaries& boundaries, unsigned threads = 0);

/// Planar traces as `<stem>.csv` plus a `.meta` sidecar that also records the
/// projection origin.
std::vector<std::filesystem::path> write_planar_directory(const std::filesystem::path& dir,
                                                          std::span<const PlanarTrace> traces);
std::vector<PlanarTrace> load_planar_directory(const std::filesystem::path& dir);

std::vector<std::filesystem::path> write_kinematics_directory(
    const std::filesystem::path& dir, std::span<const KinematicSeries> series);
std::vector<KinematicSeries> load_kinematics_directory(const std::filesystem::path& dir);

/// Reads `covariates.csv`; a missing file is a join error.
std::vector<CovariateRecord> load_covariates(const std::filesystem::path& path);

/// Runs ingest, kinematics, cube, join, Hellinger tests, PCA and DMR, writing
/// every output and `manifest.json` under config.output_dir. On failure the
/// files written so far are removed and a StageError is thrown.
Manifest run_pipeline(const RunConfig& config);

}  // namespace qcube
