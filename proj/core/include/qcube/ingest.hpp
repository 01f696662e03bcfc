#pragma once

// Raw GPS session parsing, session/athlete eligibility filtering and the
// local equirectangular projection to planar meters.

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qcube {

enum class Half { kFirst = 1, kSecond = 2 };

int half_number(Half h) noexcept;
Half half_from_number(int n);
/// Accepts "1", "2", "first", "second", "h1", "h2".
Half parse_half(std::string_view token);

/// Identifies one athlete-match-half.
struct HalfKey {
  std::string athlete_id;
  std::string match_id;
  Half half = Half::kFirst;

  friend auto operator<=>(const HalfKey&, const HalfKey&) = default;
  friend bool operator==(const HalfKey&, const HalfKey&) = default;
};

/// Canonical dataset ordering: match, then athlete, then half.
bool dataset_order(const HalfKey& lhs, const HalfKey& rhs);

std::string to_string(const HalfKey& key);

struct TraceMetadata {
  std::string athlete_id;
  std::string match_id;
  Half half = Half::kFirst;
  /// Samples after this time (seconds since half start) are overtime.
  std::optional<double> regulation_end_s;

  HalfKey key() const { return {athlete_id, match_id, half}; }
};

struct GpsSample {
  double t_s = 0.0;
  double lon_deg = 0.0;
  double lat_deg = 0.0;
};

struct SamplingGap {
  double start_s = 0.0;
  double length_s = 0.0;
};

/// One athlete-match-half of 1 Hz positions, timestamps strictly increasing.
struct GpsTrace {
  TraceMetadata meta;
  std::vector<GpsSample> samples;
  /// Intervals longer than 1.5 s between consecutive samples.
  std::vector<SamplingGap> gaps;
  std::size_t duplicates_dropped = 0;

  double duration_s() const {
    return samples.empty() ? 0.0 : samples.back().t_s - samples.front().t_s;
  }
};

struct GeoOrigin {
  double lon_deg = 0.0;
  double lat_deg = 0.0;
};

struct PlanarSample {
  double t_s = 0.0;
  double x_m = 0.0;
  double y_m = 0.0;
};

struct PlanarTrace {
  TraceMetadata meta;
  GeoOrigin origin;
  std::vector<PlanarSample> samples;
};

struct EligibilityRow {
  HalfKey key;
  double minutes = 0.0;
  bool retained = false;
  std::string reason;
};

struct EligibilityReport {
  std::vector<EligibilityRow> rows;
  /// Retained match count g_a for every retained athlete.
  std::map<std::string, int> matches_per_athlete;
};

struct FilterResult {
  std::vector<GpsTrace> retained;
  EligibilityReport report;
};

struct EligibilityRule {
  double min_half_minutes = 25.0;
  /// An athlete is kept when the retained match count is strictly greater.
  int min_matches_exclusive = 5;
};

inline constexpr double kEarthRadiusM = 6'371'000.0;

/// Parses the `t_s,lon_deg,lat_deg` CSV layout. Samples are sorted by time and
/// duplicate timestamps collapse to their first occurrence.
GpsTrace parse_trace_text(std::string_view content, const TraceMetadata& meta,
                          std::string_view source = "<memory>");
GpsTrace parse_trace(const std::filesystem::path& path, const TraceMetadata& meta);

std::string serialize_trace(const GpsTrace& trace);

TraceMetadata parse_metadata_text(std::string_view content);
std::string serialize_metadata(const TraceMetadata& meta);

/// Metadata for a trace file: the `<stem>.meta` sidecar when present, else the
/// file name pattern `<athlete>__<match>__h<1|2>.csv`.
TraceMetadata metadata_for(const std::filesystem::path& csv_path);

/// Loads every trace CSV in a directory (sorted by file name), skipping
/// `covariates.csv`.
std::vector<GpsTrace> load_trace_directory(const std::filesystem::path& dir);

/// Drops overtime samples, then applies the per-match and per-athlete rules.
FilterResult filter_sessions(std::vector<GpsTrace> traces, const EligibilityRule& rule = {});

std::string serialize_eligibility(const EligibilityReport& report);

/// Local equirectangular projection about the trace centroid.
PlanarTrace project_to_meters(const GpsTrace& trace);
PlanarTrace project_to_meters(const GpsTrace& trace, const GeoOrigin& origin);

PlanarSample project_point(const GeoOrigin& origin, const GpsSample& sample);
GpsSample unproject_point(const GeoOrigin& origin, const PlanarSample& sample);

std::string serialize_planar(const PlanarTrace& trace);
PlanarTrace parse_planar_text(std::string_view content, const TraceMetadata& meta,
                              const GeoOrigin& origin);

}  // namespace qcube
