#include "qcube/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <tuple>

#include "qcube/error.hpp"
#include "qcube/text.hpp"

namespace qcube {
namespace {

constexpr std::string_view kTraceHeader = "t_s,lon_deg,lat_deg";
constexpr std::string_view kPlanarHeader = "t_s,x_m,y_m";
constexpr double kGapThresholdS = 1.5;
constexpr double kMaxAbsLatitude = 85.0;

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct Row3 {
  double a, b, c;
};

// Shared reader for the two three-column layouts.
std::vector<Row3> parse_three_columns(std::string_view content, std::string_view header,
                                      std::string_view source) {
  const auto all = text::lines(content);
  std::vector<Row3> rows;
  bool seen_header = false;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const std::string_view line = all[i];
    const std::string where = std::string(source) + ":" + std::to_string(i + 1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    const auto fields = text::split_csv(line);
    if (!seen_header) {
      if (text::split_csv(header) != fields) {
        fail(ErrorKind::kParse, where + ": expected header '" + std::string(header) + "'");
      }
      seen_header = true;
      continue;
    }
    if (fields.size() != 3) {
      fail(ErrorKind::kParse, where + ": expected 3 fields, got " + std::to_string(fields.size()));
    }
    const auto a = text::to_double(fields[0]);
    const auto b = text::to_double(fields[1]);
    const auto c = text::to_double(fields[2]);
    if (!a || !b || !c) {
      fail(ErrorKind::kParse, where + ": malformed row '" + std::string(line) + "'");
    }
    rows.push_back({*a, *b, *c});
  }
  if (rows.empty()) fail(ErrorKind::kEmptyTrace, std::string(source) + ": no samples");
  return rows;
}

std::string reason_for(bool complete, bool match_ok, bool athlete_ok) {
  if (!complete) return "incomplete_match";
  if (!match_ok) return "half_under_min_minutes";
  if (!athlete_ok) return "athlete_too_few_matches";
  return "ok";
}

}  // namespace

int half_number(Half h) noexcept { return h == Half::kFirst ? 1 : 2; }

Half half_from_number(int n) {
  if (n == 1) return Half::kFirst;
  if (n == 2) return Half::kSecond;
  fail(ErrorKind::kInvalidArgument, "half must be 1 or 2, got " + std::to_string(n));
}

Half parse_half(std::string_view token) {
  if (token == "1" || token == "first" || token == "h1") return Half::kFirst;
  if (token == "2" || token == "second" || token == "h2") return Half::kSecond;
  fail(ErrorKind::kParse, "unknown half '" + std::string(token) + "'");
}

bool dataset_order(const HalfKey& lhs, const HalfKey& rhs) {
  return std::tie(lhs.match_id, lhs.athlete_id, lhs.half) <
         std::tie(rhs.match_id, rhs.athlete_id, rhs.half);
}

std::string to_string(const HalfKey& key) {
  return key.athlete_id + "/" + key.match_id + "/h" + std::to_string(half_number(key.half));
}

GpsTrace parse_trace_text(std::string_view content, const TraceMetadata& meta,
                          std::string_view source) {
  auto rows = parse_three_columns(content, kTraceHeader, source);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row3& l, const Row3& r) { return l.a < r.a; });

  GpsTrace trace;
  trace.meta = meta;
  trace.samples.reserve(rows.size());
  for (const Row3& row : rows) {
    if (!std::isfinite(row.a) || !std::isfinite(row.b) || !std::isfinite(row.c)) {
      fail(ErrorKind::kIntegrity, std::string(source) + ": non-finite sample value");
    }
    if (!trace.samples.empty() && row.a == trace.samples.back().t_s) {
      ++trace.duplicates_dropped;
      continue;
    }
    trace.samples.push_back({row.a, row.b, row.c});
  }
  for (std::size_t i = 1; i < trace.samples.size(); ++i) {
    const double dt = trace.samples[i].t_s - trace.samples[i - 1].t_s;
    if (!(dt > 0.0)) {
      fail(ErrorKind::kIntegrity, std::string(source) + ": timestamps not strictly increasing");
    }
    if (dt > kGapThresholdS) trace.gaps.push_back({trace.samples[i - 1].t_s, dt});
  }
  return trace;
}

GpsTrace parse_trace(const std::filesystem::path& path, const TraceMetadata& meta) {
  return parse_trace_text(text::read_file(path), meta, path.string());
}

std::string serialize_trace(const GpsTrace& trace) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const GpsSample& s : trace.samples) {
    out += text::format_double(s.t_s);
    out += ',';
    out += text::format_double(s.lon_deg);
    out += ',';
    out += text::format_double(s.lat_deg);
    out += '\n';
  }
  return out;
}

TraceMetadata parse_metadata_text(std::string_view content) {
  const auto kv = text::parse_key_values(content);
  TraceMetadata meta;
  const auto need = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end() || it->second.empty()) {
      fail(ErrorKind::kParse, std::string("metadata missing '") + key + "'");
    }
    return it->second;
  };
  meta.athlete_id = need("athlete_id");
  meta.match_id = need("match_id");
  meta.half = parse_half(need("half"));
  if (const auto it = kv.find("regulation_end_s"); it != kv.end() && !it->second.empty()) {
    const auto v = text::to_double(it->second);
    if (!v) fail(ErrorKind::kParse, "metadata regulation_end_s is not a number");
    meta.regulation_end_s = *v;
  }
  return meta;
}

std::string serialize_metadata(const TraceMetadata& meta) {
  std::string out = "athlete_id=" + meta.athlete_id + "\nmatch_id=" + meta.match_id +
                    "\nhalf=" + std::to_string(half_number(meta.half)) + "\n";
  if (meta.regulation_end_s) {
    out += "regulation_end_s=" + text::format_double(*meta.regulation_end_s) + "\n";
  }
  return out;
}

TraceMetadata metadata_for(const std::filesystem::path& csv_path) {
  auto sidecar = csv_path;
  sidecar.replace_extension(".meta");
  if (std::filesystem::exists(sidecar)) return parse_metadata_text(text::read_file(sidecar));

  const std::string stem = csv_path.stem().string();
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto sep = stem.find("__", start);
    parts.push_back(stem.substr(start, sep == std::string::npos ? sep : sep - start));
    if (sep == std::string::npos) break;
    start = sep + 2;
  }
  if (parts.size() != 3) {
    fail(ErrorKind::kParse, csv_path.string() +
                                ": no .meta sidecar and name is not <athlete>__<match>__h<half>");
  }
  TraceMetadata meta;
  meta.athlete_id = parts[0];
  meta.match_id = parts[1];
  meta.half = parse_half(parts[2]);
  return meta;
}

std::vector<GpsTrace> load_trace_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    fail(ErrorKind::kIo, dir.string() + " is not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    if (entry.path().filename() == "covariates.csv") continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<GpsTrace> traces;
  traces.reserve(files.size());
  for (const auto& f : files) traces.push_back(parse_trace(f, metadata_for(f)));
  return traces;
}

FilterResult filter_sessions(std::vector<GpsTrace> traces, const EligibilityRule& rule) {
  for (GpsTrace& t : traces) {
    if (!t.meta.regulation_end_s) continue;
    const double end = *t.meta.regulation_end_s;
    std::erase_if(t.samples, [end](const GpsSample& s) { return s.t_s > end; });
    std::erase_if(t.gaps, [end](const SamplingGap& g) { return g.start_s + g.length_s > end; });
  }
  std::sort(traces.begin(), traces.end(),
            [](const GpsTrace& l, const GpsTrace& r) { return l.meta.key() < r.meta.key(); });

  struct MatchState {
    int first = 0;
    int second = 0;
    bool long_enough = true;
  };
  std::map<std::pair<std::string, std::string>, MatchState> matches;
  for (const GpsTrace& t : traces) {
    MatchState& m = matches[{t.meta.athlete_id, t.meta.match_id}];
    (t.meta.half == Half::kFirst ? m.first : m.second) += 1;
    if (t.duration_s() / 60.0 < rule.min_half_minutes) m.long_enough = false;
  }
  const auto complete = [](const MatchState& m) { return m.first == 1 && m.second == 1; };

  std::map<std::string, int> match_count;
  for (const auto& [key, m] : matches) {
    if (complete(m) && m.long_enough) ++match_count[key.first];
  }

  FilterResult result;
  for (GpsTrace& t : traces) {
    const MatchState& m = matches.at({t.meta.athlete_id, t.meta.match_id});
    const bool match_ok = complete(m) && m.long_enough;
    const bool athlete_ok = match_count[t.meta.athlete_id] > rule.min_matches_exclusive;
    EligibilityRow row;
    row.key = t.meta.key();
    row.minutes = t.duration_s() / 60.0;
    row.retained = match_ok && athlete_ok;
    row.reason = reason_for(complete(m), m.long_enough, athlete_ok);
    result.report.rows.push_back(row);
    if (row.retained) {
      result.report.matches_per_athlete[t.meta.athlete_id] = match_count[t.meta.athlete_id];
      result.retained.push_back(std::move(t));
    }
  }
  return result;
}

std::string serialize_eligibility(const EligibilityReport& report) {
  std::string out = "athlete_id,match_id,half,minutes,retained,reason\n";
  for (const EligibilityRow& row : report.rows) {
    out += row.key.athlete_id + "," + row.key.match_id + "," +
           std::to_string(half_number(row.key.half)) + "," + text::format_fixed(row.minutes, 4) +
           "," + (row.retained ? "true" : "false") + "," + row.reason + "\n";
  }
  return out;
}

PlanarSample project_point(const GeoOrigin& origin, const GpsSample& sample) {
  if (std::abs(sample.lat_deg) >= kMaxAbsLatitude || std::abs(origin.lat_deg) >= kMaxAbsLatitude) {
    fail(ErrorKind::kProjection,
         "latitude " + text::format_double(sample.lat_deg) + " outside (-85, 85)");
  }
  const double coslat = std::cos(deg2rad(origin.lat_deg));
  return {sample.t_s, kEarthRadiusM * deg2rad(sample.lon_deg - origin.lon_deg) * coslat,
          kEarthRadiusM * deg2rad(sample.lat_deg - origin.lat_deg)};
}

GpsSample unproject_point(const GeoOrigin& origin, const PlanarSample& sample) {
  const double coslat = std::cos(deg2rad(origin.lat_deg));
  return {sample.t_s, origin.lon_deg + rad2deg(sample.x_m / (kEarthRadiusM * coslat)),
          origin.lat_deg + rad2deg(sample.y_m / kEarthRadiusM)};
}

PlanarTrace project_to_meters(const GpsTrace& trace, const GeoOrigin& origin) {
  PlanarTrace out;
  out.meta = trace.meta;
  out.origin = origin;
  out.samples.reserve(trace.samples.size());
  for (const GpsSample& s : trace.samples) out.samples.push_back(project_point(origin, s));
  return out;
}

PlanarTrace project_to_meters(const GpsTrace& trace) {
  if (trace.samples.empty()) {
    fail(ErrorKind::kEmptyTrace, "cannot project empty trace " + to_string(trace.meta.key()));
  }
  GeoOrigin centroid;
  for (const GpsSample& s : trace.samples) {
    centroid.lon_deg += s.lon_deg;
    centroid.lat_deg += s.lat_deg;
  }
  centroid.lon_deg /= static_cast<double>(trace.samples.size());
  centroid.lat_deg /= static_cast<double>(trace.samples.size());
  return project_to_meters(trace, centroid);
}

std::string serialize_planar(const PlanarTrace& trace) {
  std::string out(kPlanarHeader);
  out += '\n';
  for (const PlanarSample& s : trace.samples) {
    out += text::format_double(s.t_s);
    out += ',';
    out += text::format_double(s.x_m);
    out += ',';
    out += text::format_double(s.y_m);
    out += '\n';
  }
  return out;
}

PlanarTrace parse_planar_text(std::string_view content, const TraceMetadata& meta,
                              const GeoOrigin& origin) {
  PlanarTrace trace;
  trace.meta = meta;
  trace.origin = origin;
  for (const Row3& row : parse_three_columns(content, kPlanarHeader, to_string(meta.key()))) {
    if (!trace.samples.empty() && !(row.a > trace.samples.back().t_s)) {
      fail(ErrorKind::kIntegrity, to_string(meta.key()) + ": planar timestamps not increasing");
    }
    trace.samples.push_back({row.a, row.b, row.c});
  }
  return trace;
}

}  // namespace qcube
