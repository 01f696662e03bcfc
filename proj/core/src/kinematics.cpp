#include "qcube/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qcube/error.hpp"
#include "qcube/text.hpp"

namespace qcube {
namespace {

constexpr std::string_view kKinematicsHeader = "t,v_raw,a_raw,angle,v,a";
constexpr double kDomainSlack = 1e-9;

}  // namespace

NaturalCubicSpline::NaturalCubicSpline(std::span<const double> knots,
                                       std::span<const double> values)
    : knots_(knots.begin(), knots.end()), values_(values.begin(), values.end()) {
  const std::size_t n = knots_.size();
  if (n != values_.size()) fail(ErrorKind::kInvalidArgument, "spline: knots/values size mismatch");
  if (n < 4) fail(ErrorKind::kInsufficientData, "spline needs at least 4 samples");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(knots_[i] > knots_[i - 1])) {
      fail(ErrorKind::kIntegrity, "spline knots must be strictly increasing");
    }
  }

  // Tridiagonal system for interior second derivatives (Thomas algorithm).
  second_.assign(n, 0.0);
  std::vector<double> diag(n, 0.0), rhs(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = knots_[i] - knots_[i - 1];
    const double h1 = knots_[i + 1] - knots_[i];
    diag[i] = 2.0 * (h0 + h1);
    rhs[i] = 6.0 * ((values_[i + 1] - values_[i]) / h1 - (values_[i] - values_[i - 1]) / h0);
  }
  for (std::size_t i = 2; i + 1 < n; ++i) {
    const double lower = knots_[i] - knots_[i - 1];
    const double w = lower / diag[i - 1];
    diag[i] -= w * lower;
    rhs[i] -= w * rhs[i - 1];
  }
  for (std::size_t i = n - 2; i >= 1; --i) {
    const double upper = knots_[i + 1] - knots_[i];
    const double next = (i + 2 < n) ? second_[i + 1] : 0.0;
    second_[i] = (rhs[i] - upper * next) / diag[i];
  }
}

NaturalCubicSpline::Point NaturalCubicSpline::evaluate(double t) const {
  if (t < knots_.front() - kDomainSlack || t > knots_.back() + kDomainSlack) {
    fail(ErrorKind::kDomain, "spline evaluated outside [" + text::format_double(knots_.front()) +
                                 ", " + text::format_double(knots_.back()) + "] at " +
                                 text::format_double(t));
  }
  const auto upper = std::upper_bound(knots_.begin(), knots_.end(), t);
  std::size_t i = static_cast<std::size_t>(upper - knots_.begin());
  i = std::clamp<std::size_t>(i, 1, knots_.size() - 1) - 1;

  const double h = knots_[i + 1] - knots_[i];
  const double a = (knots_[i + 1] - t) / h;
  const double b = (t - knots_[i]) / h;
  const double m0 = second_[i];
  const double m1 = second_[i + 1];
  Point p;
  p.value = a * values_[i] + b * values_[i + 1] +
            ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
  p.first = (values_[i + 1] - values_[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0 +
            (3.0 * b * b - 1.0) / 6.0 * h * m1;
  p.second = a * m0 + b * m1;
  return p;
}

TrajectorySpline fit_spline(const PlanarTrace& trace) {
  if (trace.samples.size() < 4) {
    fail(ErrorKind::kInsufficientData,
         to_string(trace.meta.key()) + ": spline needs at least 4 samples, got " +
             std::to_string(trace.samples.size()));
  }
  std::vector<double> t, x, y;
  t.reserve(trace.samples.size());
  x.reserve(trace.samples.size());
  y.reserve(trace.samples.size());
  for (const PlanarSample& s : trace.samples) {
    t.push_back(s.t_s);
    x.push_back(s.x_m);
    y.push_back(s.y_m);
  }
  return {trace.meta, NaturalCubicSpline(t, x), NaturalCubicSpline(t, y)};
}

std::int64_t grid_point_count(double t_first, double t_last, double rate_hz) {
  if (!(rate_hz > 0.0)) fail(ErrorKind::kInvalidArgument, "resample rate must be positive");
  if (t_last < t_first) return 0;
  return static_cast<std::int64_t>(std::floor((t_last - t_first) * rate_hz + 1e-9)) + 1;
}

std::vector<double> make_grid(double t_first, double t_last, double rate_hz) {
  const std::int64_t count = grid_point_count(t_first, t_last, rate_hz);
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) {
    grid.push_back(std::min(t_last, t_first + static_cast<double>(k) / rate_hz));
  }
  return grid;
}

double threshold_magnitude(double raw, double threshold) noexcept {
  return raw < threshold ? 0.0 : raw;
}

double log_transform(double raw) noexcept { return std::log10(1.0 + raw); }

double signed_angle_deg(double vx, double vy, double ax, double ay) noexcept {
  const double cross = vx * ay - vy * ax;
  const double dot = vx * ax + vy * ay;
  double deg = std::atan2(cross, dot) * 180.0 / std::numbers::pi;
  deg = std::fmod(deg, 360.0);
  if (deg < 0.0) deg += 360.0;
  if (deg > 180.0) deg -= 360.0;
  return deg;
}

double movement_angle_deg(double vx, double vy, double ax, double ay, double v_stored,
                          double a_stored) noexcept {
  // Zero vectors have no direction; such points go to the forward bin.
  if (v_stored == 0.0 || a_stored == 0.0) return 0.0;
  return signed_angle_deg(vx, vy, ax, ay);
}

KinematicSeries derive_kinematics(const TrajectorySpline& spline, std::span<const double> grid,
                                  const KinematicThresholds& thresholds) {
  KinematicSeries series;
  series.meta = spline.meta;
  series.points.reserve(grid.size());
  for (const double t : grid) {
    const auto px = spline.x.evaluate(t);
    const auto py = spline.y.evaluate(t);
    KinematicPoint p;
    p.t = t;
    p.v_raw = threshold_magnitude(std::hypot(px.first, py.first), thresholds.velocity);
    p.a_raw = threshold_magnitude(std::hypot(px.second, py.second), thresholds.acceleration);
    p.angle = movement_angle_deg(px.first, py.first, px.second, py.second, p.v_raw, p.a_raw);
    p.v = log_transform(p.v_raw);
    p.a = log_transform(p.a_raw);
    series.points.push_back(p);
  }
  return series;
}

KinematicSeries trace_kinematics(const PlanarTrace& trace, double rate_hz,
                                 const KinematicThresholds& thresholds) {
  const TrajectorySpline spline = fit_spline(trace);
  const auto grid = make_grid(spline.t_min(), spline.t_max(), rate_hz);
  return derive_kinematics(spline, grid, thresholds);
}

std::string serialize_kinematics(const KinematicSeries& series) {
  std::string out(kKinematicsHeader);
  out += '\n';
  for (const KinematicPoint& p : series.points) {
    for (const double v : {p.t, p.v_raw, p.a_raw, p.angle, p.v}) {
      out += text::format_double(v);
      out += ',';
    }
    out += text::format_double(p.a);
    out += '\n';
  }
  return out;
}

KinematicSeries parse_kinematics_text(std::string_view content, const TraceMetadata& meta) {
  KinematicSeries series;
  series.meta = meta;
  const auto all = text::lines(content);
  if (all.empty() || all.front() != kKinematicsHeader) {
    fail(ErrorKind::kParse, to_string(meta.key()) + ": expected header '" +
                                std::string(kKinematicsHeader) + "'");
  }
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].empty()) continue;
    const auto fields = text::split_csv(all[i]);
    if (fields.size() != 6) {
      fail(ErrorKind::kParse, to_string(meta.key()) + ":" + std::to_string(i + 1) +
                                  ": expected 6 fields");
    }
    double v[6];
    for (std::size_t k = 0; k < 6; ++k) {
      const auto d = text::to_double(fields[k]);
      if (!d) {
        fail(ErrorKind::kParse, to_string(meta.key()) + ":" + std::to_string(i + 1) +
                                    ": malformed value");
      }
      v[k] = *d;
    }
    series.points.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
  }
  return series;
}

}  // namespace qcube
