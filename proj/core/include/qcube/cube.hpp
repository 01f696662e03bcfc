#pragma once

// Global quantile boundaries and the per-half quantile cube.
//
// Bin index order: ((v_q - 1) * A + (a_q - 1)) * T + (theta_q - 1), with
// velocity outermost and angle innermost (A acceleration bins, T angle bins).

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qcube/ingest.hpp"
#include "qcube/kinematics.hpp"

namespace qcube {

struct BinLayout {
  int velocity = 5;
  int acceleration = 5;
  int angle = 4;

  int size() const noexcept { return velocity * acceleration * angle; }
  friend bool operator==(const BinLayout&, const BinLayout&) = default;
};

/// Which side of an interior cut a value equal to the cut belongs to.
/// kLeftClosed: [c_k, c_{k+1}) so ties go up. kRightClosed: (c_k, c_{k+1}].
enum class EdgeRule { kLeftClosed, kRightClosed };

struct QuantileBoundaries {
  std::vector<double> v_cuts;      // lower edges, transformed velocity
  std::vector<double> a_cuts;      // lower edges, transformed acceleration
  std::vector<double> angle_cuts;  // arc starts in degrees; the first is the baseline
  EdgeRule edge_rule = EdgeRule::kLeftClosed;
  std::int64_t pool_points = 0;
  std::string pool_sha256;

  BinLayout layout() const;
  /// Throws kDegenerateCuts when cuts are not strictly increasing (angle arcs
  /// in shifted order) or do not match the declared layout.
  void validate() const;
};

struct BinIndex {
  int v = 1;      // 1-based
  int a = 1;      // 1-based
  int angle = 1;  // 1-based

  friend bool operator==(const BinIndex&, const BinIndex&) = default;
};

int vectorize(const BinIndex& bin, const BinLayout& layout);
BinIndex devectorize(int index, const BinLayout& layout);
/// "Q<v>_vel_Q<a>_acc_Q<angle>_angle".
std::string bin_label(int index, const BinLayout& layout);

/// Degrees in [0, 360) measured counterclockwise from the baseline.
double shifted_angle(double angle_deg, double baseline_deg) noexcept;
/// Maps any angle in degrees into (-180, 180].
double wrap_angle(double angle_deg) noexcept;

inline constexpr double kDefaultAngleBaseline = -30.0;

QuantileBoundaries compute_boundaries(std::span<const KinematicSeries> all_series,
                                      const BinLayout& layout = {},
                                      double angle_baseline_deg = kDefaultAngleBaseline);

BinIndex assign_bin(double v, double a, double angle_deg, const QuantileBoundaries& b);

/// Decisecond counts for one athlete-match-half.
struct QuantileCube {
  HalfKey key;
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;

  std::vector<double> proportions() const;
};

QuantileCube build_cube(const KinematicSeries& series, const QuantileBoundaries& b);

/// Bins a list of (v, a, angle) points directly, without kinematic metadata.
QuantileCube build_cube(const HalfKey& key, std::span<const KinematicPoint> points,
                        const QuantileBoundaries& b);

std::string serialize_boundaries(const QuantileBoundaries& b);
QuantileBoundaries parse_boundaries(std::string_view json);

std::string serialize_cubes(std::span<const QuantileCube> cubes);
std::vector<QuantileCube> parse_cubes(std::string_view csv);

}  // namespace qcube
