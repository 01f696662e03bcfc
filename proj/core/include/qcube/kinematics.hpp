#pragma once

// Natural cubic spline fit of planar traces, 10 Hz resampling, and the
// velocity / acceleration / movement-angle series derived from it.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qcube/ingest.hpp"

namespace qcube {

/// Interpolating cubic spline with zero second derivative at both ends.
class NaturalCubicSpline {
 public:
  struct Point {
    double value;
    double first;
    double second;
  };

  NaturalCubicSpline() = default;
  /// Knots must be strictly increasing; at least 4 are required.
  NaturalCubicSpline(std::span<const double> knots, std::span<const double> values);

  Point evaluate(double t) const;
  double operator()(double t) const { return evaluate(t).value; }

  double t_min() const { return knots_.front(); }
  double t_max() const { return knots_.back(); }
  std::size_t size() const { return knots_.size(); }

 private:
  std::vector<double> knots_;
  std::vector<double> values_;
  std::vector<double> second_;  // second derivative at each knot
};

/// Per-axis splines x(t), y(t) of one planar trace.
struct TrajectorySpline {
  TraceMetadata meta;
  NaturalCubicSpline x;
  NaturalCubicSpline y;

  double t_min() const { return x.t_min(); }
  double t_max() const { return x.t_max(); }
};

struct KinematicThresholds {
  double velocity = 0.01;       // m/s
  double acceleration = 0.001;  // m/s^2
};

struct KinematicPoint {
  double t = 0.0;
  double v_raw = 0.0;
  double a_raw = 0.0;
  double angle = 0.0;  // degrees in (-180, 180]
  double v = 0.0;      // log10(1 + v_raw)
  double a = 0.0;      // log10(1 + a_raw)
};

struct KinematicSeries {
  TraceMetadata meta;
  std::vector<KinematicPoint> points;
};

TrajectorySpline fit_spline(const PlanarTrace& trace);

/// Number of points on the grid anchored at t_first with spacing 1/rate that
/// stay within [t_first, t_last]; the final partial step is dropped.
std::int64_t grid_point_count(double t_first, double t_last, double rate_hz);
std::vector<double> make_grid(double t_first, double t_last, double rate_hz);

KinematicSeries derive_kinematics(const TrajectorySpline& spline, std::span<const double> grid,
                                  const KinematicThresholds& thresholds = {});

/// Convenience: fit, grid at rate_hz over the full trace span, derive.
KinematicSeries trace_kinematics(const PlanarTrace& trace, double rate_hz = 10.0,
                                 const KinematicThresholds& thresholds = {});

/// Values below the threshold are stored as zero.
double threshold_magnitude(double raw, double threshold) noexcept;
double log_transform(double raw) noexcept;

/// Signed angle from the velocity vector to the acceleration vector,
/// counterclockwise positive, reduced mod 360 and shifted into (-180, 180].
double signed_angle_deg(double vx, double vy, double ax, double ay) noexcept;

/// Movement angle after thresholding: 0 when either vector was zeroed.
double movement_angle_deg(double vx, double vy, double ax, double ay, double v_stored,
                          double a_stored) noexcept;

std::string serialize_kinematics(const KinematicSeries& series);
KinematicSeries parse_kinematics_text(std::string_view content, const TraceMetadata& meta);

}  // namespace qcube
