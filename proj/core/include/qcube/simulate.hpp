#pragma once

// Synthetic GPS traces and cube datasets with known ground truth.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcube/dataset.hpp"
#include "qcube/dmr.hpp"
#include "qcube/ingest.hpp"

namespace qcube {

/// One movement mode. Each visit draws a target speed, an acceleration used to
/// approach it, a signed turn rate and an exponential dwell time. Ranges may be
/// a single point (min == max).
struct Regime {
  std::string name;
  double speed_min = 0.0;  // m/s
  double speed_max = 0.0;
  double accel_min = 0.0;  // m/s^2
  double accel_max = 0.0;
  double turn_min = 0.0;   // deg/s, magnitude
  double turn_max = 0.0;
  double mean_dwell_s = 10.0;
};

struct RegimeSpec {
  std::vector<Regime> regimes;
  /// Row r gives the probabilities of the next regime after regime r.
  std::vector<std::vector<double>> transitions;
  double pitch_length_m = 105.0;
  double pitch_width_m = 68.0;

  /// Throws kInvalidArgument on inverted ranges, negative weights or rows that
  /// do not sum to 1.
  void validate() const;

  /// A single regime with fixed speed and heading.
  static RegimeSpec constant_speed(double speed_mps, double pitch_m = 10'000.0);
  /// Five regimes from standing to sprinting. Weights depend on position, and
  /// the second half leans toward the slower regimes.
  static RegimeSpec match_play(Position position, Half half);
};

/// Somewhere in central North Carolina.
inline constexpr GeoOrigin kDefaultPitchOrigin{-79.0469, 35.9049};

/// 1 Hz positions at t = 0, 1, ..., floor(duration) - 1 from a walk simulated
/// at 0.1 s steps, reflected at the pitch bounds and mapped to lon/lat about
/// `origin` (the pitch centre). Requires duration >= 10 s.
GpsTrace gen_trace(const RegimeSpec& spec, double duration_s, std::uint64_t seed,
                   const TraceMetadata& meta = {}, const GeoOrigin& origin = kDefaultPitchOrigin);

/// `rows` distinct covariate records (unique keys, mixed positions, halves and
/// match outcomes) each with playing_time = total.
std::vector<CovariateRecord> synthetic_covariates(int rows, std::int64_t total, std::uint64_t seed);

/// Row i is drawn Dirichlet(eta(x_i)) then multinomial(playing_time_i), where
/// eta(x) = exp(beta_truth x) and x encodes records[i] with `design`.
CubeDataset gen_cube_dataset(const Eigen::MatrixXd& beta_truth, const DesignMatrix& design,
                             std::span<const CovariateRecord> records, const BinLayout& layout,
                             std::uint64_t seed);

struct SeasonSpec {
  int athletes = 4;
  int matches = 8;
  std::uint64_t seed = 1;
  double rate_hz = 10.0;
  double half_minutes = 45.0;
  /// Adds one athlete who plays too few matches to be retained.
  bool include_reserve = true;
  GeoOrigin origin = kDefaultPitchOrigin;
};

struct SimulatedSeason {
  std::vector<GpsTrace> traces;
  std::vector<CovariateRecord> covariates;
};

/// A season of halves with a few short halves, occasional dropped samples and
/// some stoppage time past the regulation end.
SimulatedSeason simulate_season(const SeasonSpec& spec);

/// Writes `<athlete>__<match>__h<n>.csv` with a `.meta` sidecar per trace and
/// `covariates.csv`. Returns the written paths.
std::vector<std::filesystem::path> write_season(const std::filesystem::path& dir,
                                                const SimulatedSeason& season);

}  // namespace qcube
