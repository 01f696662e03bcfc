#include "qcube/cube.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "qcube/digest.hpp"
#include "qcube/error.hpp"
#include "qcube/stats.hpp"
#include "qcube/text.hpp"

namespace qcube {
namespace {

// 1-based bin of `value` against ascending lower edges.
int linear_bin(double value, std::span<const double> cuts, EdgeRule rule) {
  std::ptrdiff_t below = 0;
  if (rule == EdgeRule::kLeftClosed) {
    below = std::upper_bound(cuts.begin(), cuts.end(), value) - cuts.begin();
  } else {
    below = std::lower_bound(cuts.begin(), cuts.end(), value) - cuts.begin();
  }
  return static_cast<int>(std::max<std::ptrdiff_t>(below, 1));
}

std::vector<double> arc_starts(const std::vector<double>& angle_cuts) {
  std::vector<double> starts;
  starts.reserve(angle_cuts.size());
  for (const double c : angle_cuts) starts.push_back(shifted_angle(c, angle_cuts.front()));
  return starts;
}

void require_increasing(std::span<const double> cuts, const char* what) {
  for (std::size_t i = 1; i < cuts.size(); ++i) {
    if (!(cuts[i] > cuts[i - 1])) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s cuts %zu and %zu coincide or decrease (%.6g, %.6g)",
                    what, i - 1, i, cuts[i - 1], cuts[i]);
      fail(ErrorKind::kDegenerateCuts, buf);
    }
  }
}

std::vector<double> to_raw(std::span<const double> cuts) {
  std::vector<double> raw;
  for (const double c : cuts) raw.push_back(std::pow(10.0, c) - 1.0);
  return raw;
}

BinIndex assign_bin_with_arcs(double v, double a, double angle_deg, const QuantileBoundaries& b,
                              std::span<const double> starts) {
  BinIndex bin;
  bin.v = linear_bin(v, b.v_cuts, b.edge_rule);
  bin.a = linear_bin(a, b.a_cuts, b.edge_rule);
  const double s = shifted_angle(angle_deg, b.angle_cuts.front());
  if (b.edge_rule == EdgeRule::kLeftClosed) {
    bin.angle = linear_bin(s, starts, EdgeRule::kLeftClosed);
  } else {
    // (S_k, S_{k+1}]; a value on the baseline closes the last arc.
    const auto below = std::lower_bound(starts.begin(), starts.end(), s) - starts.begin();
    bin.angle = below == 0 ? static_cast<int>(starts.size()) : static_cast<int>(below);
  }
  return bin;
}

}  // namespace

BinLayout QuantileBoundaries::layout() const {
  return {static_cast<int>(v_cuts.size()), static_cast<int>(a_cuts.size()),
          static_cast<int>(angle_cuts.size())};
}

void QuantileBoundaries::validate() const {
  if (v_cuts.empty() || a_cuts.empty() || angle_cuts.empty()) {
    fail(ErrorKind::kDegenerateCuts, "boundaries need at least one cut per dimension");
  }
  require_increasing(v_cuts, "velocity");
  require_increasing(a_cuts, "acceleration");
  const auto starts = arc_starts(angle_cuts);
  require_increasing(starts, "angle (shifted)");
}

int vectorize(const BinIndex& bin, const BinLayout& layout) {
  if (bin.v < 1 || bin.v > layout.velocity || bin.a < 1 || bin.a > layout.acceleration ||
      bin.angle < 1 || bin.angle > layout.angle) {
    fail(ErrorKind::kInvalidArgument, "bin index out of layout");
  }
  return ((bin.v - 1) * layout.acceleration + (bin.a - 1)) * layout.angle + (bin.angle - 1);
}

BinIndex devectorize(int index, const BinLayout& layout) {
  if (index < 0 || index >= layout.size()) {
    fail(ErrorKind::kInvalidArgument, "vector index out of layout");
  }
  BinIndex bin;
  bin.angle = index % layout.angle + 1;
  index /= layout.angle;
  bin.a = index % layout.acceleration + 1;
  bin.v = index / layout.acceleration + 1;
  return bin;
}

std::string bin_label(int index, const BinLayout& layout) {
  const BinIndex b = devectorize(index, layout);
  return "Q" + std::to_string(b.v) + "_vel_Q" + std::to_string(b.a) + "_acc_Q" +
         std::to_string(b.angle) + "_angle";
}

double shifted_angle(double angle_deg, double baseline_deg) noexcept {
  double s = std::fmod(angle_deg - baseline_deg, 360.0);
  if (s < 0.0) s += 360.0;
  if (s >= 360.0) s -= 360.0;
  return s;
}

double wrap_angle(double angle_deg) noexcept {
  double w = std::fmod(angle_deg, 360.0);
  if (w > 180.0) w -= 360.0;
  if (w <= -180.0) w += 360.0;
  return w;
}

QuantileBoundaries compute_boundaries(std::span<const KinematicSeries> all_series,
                                      const BinLayout& layout, double angle_baseline_deg) {
  if (layout.velocity < 1 || layout.acceleration < 1 || layout.angle < 1) {
    fail(ErrorKind::kInvalidArgument, "bin layout counts must be positive");
  }
  std::size_t total = 0;
  for (const auto& s : all_series) total += s.points.size();
  if (total == 0) fail(ErrorKind::kInsufficientData, "cannot compute boundaries of an empty pool");

  std::vector<double> v, a, theta;
  v.reserve(total);
  a.reserve(total);
  theta.reserve(total);
  for (const auto& s : all_series) {
    for (const KinematicPoint& p : s.points) {
      v.push_back(p.v);
      a.push_back(p.a);
      theta.push_back(shifted_angle(p.angle, angle_baseline_deg));
    }
  }
  std::sort(v.begin(), v.end());
  std::sort(a.begin(), a.end());
  std::sort(theta.begin(), theta.end());

  QuantileBoundaries b;
  for (int k = 0; k < layout.velocity; ++k) {
    b.v_cuts.push_back(stats::quantile_type7_sorted(v, static_cast<double>(k) / layout.velocity));
  }
  for (int k = 0; k < layout.acceleration; ++k) {
    b.a_cuts.push_back(
        stats::quantile_type7_sorted(a, static_cast<double>(k) / layout.acceleration));
  }
  b.angle_cuts.push_back(wrap_angle(angle_baseline_deg));
  for (int k = 1; k < layout.angle; ++k) {
    const double s = stats::quantile_type7_sorted(theta, static_cast<double>(k) / layout.angle);
    b.angle_cuts.push_back(wrap_angle(angle_baseline_deg + s));
  }
  b.pool_points = static_cast<std::int64_t>(total);
  b.pool_sha256 = sha256_hex(sha256_hex(std::span<const double>(v)) +
                             sha256_hex(std::span<const double>(a)) +
                             sha256_hex(std::span<const double>(theta)));
  b.validate();
  return b;
}

BinIndex assign_bin(double v, double a, double angle_deg, const QuantileBoundaries& b) {
  return assign_bin_with_arcs(v, a, angle_deg, b, arc_starts(b.angle_cuts));
}

std::vector<double> QuantileCube::proportions() const {
  std::vector<double> p(counts.size(), 0.0);
  if (total <= 0) return p;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    p[j] = static_cast<double>(counts[j]) / static_cast<double>(total);
  }
  return p;
}

QuantileCube build_cube(const HalfKey& key, std::span<const KinematicPoint> points,
                        const QuantileBoundaries& b) {
  const BinLayout layout = b.layout();
  QuantileCube cube;
  cube.key = key;
  cube.counts.assign(static_cast<std::size_t>(layout.size()), 0);
  const auto starts = arc_starts(b.angle_cuts);
  for (const KinematicPoint& p : points) {
    const int idx = vectorize(assign_bin_with_arcs(p.v, p.a, p.angle, b, starts), layout);
    ++cube.counts[static_cast<std::size_t>(idx)];
  }
  cube.total = static_cast<std::int64_t>(points.size());
  return cube;
}

QuantileCube build_cube(const KinematicSeries& series, const QuantileBoundaries& b) {
  return build_cube(series.meta.key(), series.points, b);
}

std::string serialize_boundaries(const QuantileBoundaries& b) {
  const BinLayout layout = b.layout();
  nlohmann::ordered_json j;
  j["layout"] = {{"velocity", layout.velocity},
                 {"acceleration", layout.acceleration},
                 {"angle", layout.angle}};
  j["edge_rule"] = b.edge_rule == EdgeRule::kLeftClosed ? "left_closed" : "right_closed";
  j["v_cuts"] = b.v_cuts;
  j["a_cuts"] = b.a_cuts;
  j["angle_cuts"] = b.angle_cuts;
  j["v_cuts_raw"] = to_raw(b.v_cuts);
  j["a_cuts_raw"] = to_raw(b.a_cuts);
  j["pool_points"] = b.pool_points;
  j["pool_sha256"] = b.pool_sha256;
  return j.dump(2) + "\n";
}

QuantileBoundaries parse_boundaries(std::string_view json) {
  QuantileBoundaries b;
  try {
    const auto j = nlohmann::json::parse(json);
    b.v_cuts = j.at("v_cuts").get<std::vector<double>>();
    b.a_cuts = j.at("a_cuts").get<std::vector<double>>();
    b.angle_cuts = j.at("angle_cuts").get<std::vector<double>>();
    if (j.contains("edge_rule") && j["edge_rule"] == "right_closed") {
      b.edge_rule = EdgeRule::kRightClosed;
    }
    b.pool_points = j.value("pool_points", std::int64_t{0});
    b.pool_sha256 = j.value("pool_sha256", std::string{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("boundaries JSON: ") + e.what());
  }
  b.validate();
  return b;
}

std::string serialize_cubes(std::span<const QuantileCube> cubes) {
  std::string out = "athlete_id,match_id,half";
  const std::size_t d = cubes.empty() ? 0 : cubes.front().counts.size();
  char buf[32];
  for (std::size_t j = 0; j < d; ++j) {
    std::snprintf(buf, sizeof(buf), ",bin_%03zu", j);
    out += buf;
  }
  out += '\n';
  for (const QuantileCube& c : cubes) {
    out += c.key.athlete_id + "," + c.key.match_id + "," + std::to_string(half_number(c.key.half));
    for (const std::int64_t n : c.counts) {
      out += ',';
      out += std::to_string(n);
    }
    out += '\n';
  }
  return out;
}

std::vector<QuantileCube> parse_cubes(std::string_view csv) {
  const auto all = text::lines(csv);
  if (all.empty()) fail(ErrorKind::kParse, "cube CSV: missing header");
  const auto header = text::split_csv(all.front());
  if (header.size() < 4 || header[0] != "athlete_id" || header[1] != "match_id" ||
      header[2] != "half") {
    fail(ErrorKind::kParse, "cube CSV: expected header athlete_id,match_id,half,bin_000,...");
  }
  const std::size_t d = header.size() - 3;
  std::vector<QuantileCube> cubes;
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].empty()) continue;
    const auto f = text::split_csv(all[i]);
    if (f.size() != header.size()) {
      fail(ErrorKind::kParse, "cube CSV line " + std::to_string(i + 1) + ": wrong field count");
    }
    QuantileCube c;
    c.key = {std::string(f[0]), std::string(f[1]), parse_half(f[2])};
    c.counts.reserve(d);
    for (std::size_t j = 0; j < d; ++j) {
      const auto n = text::to_int(f[3 + j]);
      if (!n || *n < 0) {
        fail(ErrorKind::kParse, "cube CSV line " + std::to_string(i + 1) + ": bad count");
      }
      c.counts.push_back(*n);
      c.total += *n;
    }
    cubes.push_back(std::move(c));
  }
  return cubes;
}

}  // namespace qcube
