#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "oracles.hpp"
#include "qcube/error.hpp"
#include "qcube/ingest.hpp"
#include "qcube/text.hpp"

using namespace qcube;

namespace {

TraceMetadata meta_of(const std::string& athlete, const std::string& match, Half half) {
  return {athlete, match, half, std::nullopt};
}

// Two-sample trace spanning `minutes`; enough for the eligibility rules.
GpsTrace span_trace(const std::string& athlete, const std::string& match, Half half,
                    double minutes) {
  GpsTrace t;
  t.meta = meta_of(athlete, match, half);
  t.samples = {{0.0, -79.0, 35.9}, {minutes * 60.0, -79.0, 35.9}};
  return t;
}

void add_match(std::vector<GpsTrace>& out, const std::string& athlete, const std::string& match,
               double first_minutes = 45.0, double second_minutes = 45.0) {
  out.push_back(span_trace(athlete, match, Half::kFirst, first_minutes));
  out.push_back(span_trace(athlete, match, Half::kSecond, second_minutes));
}

int error_kind_of(const std::function<void()>& fn, ErrorKind& kind, std::string& message) {
  try {
    fn();
  } catch (const Error& e) {
    kind = e.kind();
    message = e.what();
    return 1;
  }
  return 0;
}

}  // namespace

TEST_SUITE("ingest") {
  TEST_CASE("well-formed file echoes its rows") {
    const auto t = parse_trace_text("t_s,lon_deg,lat_deg\n0,-79.0,35.9\n1,-79.00001,35.9\n2,-79.00002,35.90001\n",
                                    meta_of("a", "m", Half::kFirst));
    REQUIRE(t.samples.size() == 3);
    CHECK(t.samples[2].t_s == 2.0);
    CHECK(t.samples[2].lat_deg == 35.90001);
    CHECK(t.gaps.empty());
  }

  TEST_CASE("duplicate timestamp keeps the first row") {
    const auto t = parse_trace_text("t_s,lon_deg,lat_deg\n0,1,1\n1,2,2\n1,3,3\n2,4,4\n",
                                    meta_of("a", "m", Half::kFirst));
    REQUIRE(t.samples.size() == 3);
    CHECK(t.samples[1].lon_deg == 2.0);
    CHECK(t.duplicates_dropped == 1);
  }

  TEST_CASE("unsorted rows are sorted and gaps recorded") {
    const auto t = parse_trace_text("t_s,lon_deg,lat_deg\n5,1,1\n0,2,2\n1,3,3\n",
                                    meta_of("a", "m", Half::kFirst));
    CHECK(t.samples.front().t_s == 0.0);
    REQUIRE(t.gaps.size() == 1);
    CHECK(t.gaps[0].start_s == 1.0);
    CHECK(t.gaps[0].length_s == 4.0);
  }

  TEST_CASE("malformed row names its line") {
    ErrorKind kind{};
    std::string msg;
    REQUIRE(error_kind_of([] {
      parse_trace_text("t_s,lon_deg,lat_deg\n0,1,1\nabc,1.0,2.0\n", {}, "trace.csv");
    }, kind, msg));
    CHECK(kind == ErrorKind::kParse);
    CHECK(msg.find("trace.csv:3") != std::string::npos);
  }

  TEST_CASE("empty file and bad header") {
    ErrorKind kind{};
    std::string msg;
    REQUIRE(error_kind_of([] { parse_trace_text("t_s,lon_deg,lat_deg\n", {}); }, kind, msg));
    CHECK(kind == ErrorKind::kEmptyTrace);
    REQUIRE(error_kind_of([] { parse_trace_text("time,lon,lat\n0,1,1\n", {}); }, kind, msg));
    CHECK(kind == ErrorKind::kParse);
    REQUIRE(error_kind_of([] { parse_trace_text("t_s,lon_deg,lat_deg\n0,nan,1\n", {}); }, kind, msg));
    CHECK(kind == ErrorKind::kIntegrity);
  }

  TEST_CASE("parse, serialize, parse round-trips exactly") {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> jitter(-1e-3, 1e-3);
    for (int trial = 0; trial < 20; ++trial) {
      GpsTrace t;
      t.meta = meta_of("a", "m", Half::kSecond);
      double time = 0.0;
      for (int k = 0; k < 50; ++k) {
        time += 1.0 + (gen() % 4 == 0 ? 1.0 : 0.0);
        t.samples.push_back({time, -79.0 + jitter(gen), 35.9 + jitter(gen)});
      }
      const auto back = parse_trace_text(serialize_trace(t), t.meta);
      REQUIRE(back.samples.size() == t.samples.size());
      for (std::size_t k = 0; k < t.samples.size(); ++k) {
        CHECK(back.samples[k].t_s == t.samples[k].t_s);
        CHECK(back.samples[k].lon_deg == t.samples[k].lon_deg);
        CHECK(back.samples[k].lat_deg == t.samples[k].lat_deg);
      }
    }
  }

  TEST_CASE("metadata sidecar and file-name fallback") {
    const auto dir = oracle::scratch_dir("ingest_meta");
    text::write_file(dir / "a1__m1__h1.csv", "t_s,lon_deg,lat_deg\n0,1,1\n");
    text::write_file(dir / "x.csv", "t_s,lon_deg,lat_deg\n0,1,1\n");
    text::write_file(dir / "x.meta", "athlete_id=a2\nmatch_id=m9\nhalf=second\nregulation_end_s=2700\n");
    text::write_file(dir / "covariates.csv", "ignored\n");
    const auto from_name = metadata_for(dir / "a1__m1__h1.csv");
    CHECK(from_name.athlete_id == "a1");
    CHECK(from_name.half == Half::kFirst);
    const auto from_sidecar = metadata_for(dir / "x.csv");
    CHECK(from_sidecar.match_id == "m9");
    CHECK(from_sidecar.half == Half::kSecond);
    CHECK(from_sidecar.regulation_end_s == 2700.0);
    CHECK(parse_metadata_text(serialize_metadata(from_sidecar)).regulation_end_s == 2700.0);
    CHECK(load_trace_directory(dir).size() == 2);
  }

  TEST_CASE("half under 25 minutes excludes the athlete-match") {
    std::vector<GpsTrace> traces;
    for (int m = 0; m < 6; ++m) add_match(traces, "a", "m" + std::to_string(m));
    add_match(traces, "a", "short", 24.0, 45.0);
    const auto r = filter_sessions(traces);
    CHECK(r.retained.size() == 12);
    for (const auto& row : r.report.rows) {
      if (row.key.match_id == "short") {
        CHECK_FALSE(row.retained);
        CHECK(row.reason == "half_under_min_minutes");
      }
    }
    CHECK(r.report.matches_per_athlete.at("a") == 6);
  }

  TEST_CASE("exactly five retained matches excludes the athlete; six keeps them") {
    std::vector<GpsTrace> traces;
    for (int m = 0; m < 5; ++m) add_match(traces, "five", "m" + std::to_string(m));
    for (int m = 0; m < 6; ++m) add_match(traces, "six", "m" + std::to_string(m));
    const auto r = filter_sessions(traces);
    CHECK(r.retained.size() == 12);
    CHECK_FALSE(r.report.matches_per_athlete.contains("five"));
    CHECK(r.report.matches_per_athlete.at("six") == 6);
    for (const auto& row : r.report.rows) {
      if (row.key.athlete_id == "five") CHECK(row.reason == "athlete_too_few_matches");
    }
  }

  TEST_CASE("incomplete match is reported, not retained") {
    std::vector<GpsTrace> traces;
    for (int m = 0; m < 6; ++m) add_match(traces, "a", "m" + std::to_string(m));
    traces.push_back(span_trace("a", "solo", Half::kFirst, 45.0));
    const auto r = filter_sessions(traces);
    CHECK(r.retained.size() == 12);
    CHECK(r.report.rows.size() == 13);
  }

  TEST_CASE("overtime is dropped before the duration check") {
    std::vector<GpsTrace> traces;
    for (int m = 0; m < 6; ++m) add_match(traces, "a", "m" + std::to_string(m));
    GpsTrace ot = span_trace("a", "ot", Half::kSecond, 20.0);
    ot.samples.push_back({40.0 * 60.0, -79.0, 35.9});
    ot.meta.regulation_end_s = 20.0 * 60.0;
    traces.push_back(span_trace("a", "ot", Half::kFirst, 45.0));
    traces.push_back(ot);
    const auto r = filter_sessions(traces);
    for (const auto& row : r.report.rows) {
      if (row.key.match_id == "ot" && row.key.half == Half::kSecond) {
        CHECK(row.minutes == doctest::Approx(20.0));
        CHECK_FALSE(row.retained);
      }
    }
  }

  TEST_CASE("replica roster reproduces the 9 athlete / 23 match / 396 half funnel") {
    std::vector<GpsTrace> traces;
    for (int a = 0; a < 9; ++a) {
      for (int m = 0; m < 23; ++m) {
        const bool short_half = (a + m) % 23 == 0;
        add_match(traces, "a" + std::to_string(a), "m" + std::to_string(m), 46.0,
                  short_half ? 24.5 : 47.0);
      }
    }
    for (int a = 0; a < 3; ++a) {
      for (int m = 0; m < 5; ++m) add_match(traces, "r" + std::to_string(a), "m" + std::to_string(m));
    }
    const auto r = filter_sessions(traces);
    CHECK(r.retained.size() == 396);
    CHECK(r.report.matches_per_athlete.size() == 9);
    std::set<std::string> matches;
    for (const auto& t : r.retained) matches.insert(t.meta.match_id);
    CHECK(matches.size() == 23);
    for (const auto& [athlete, g] : r.report.matches_per_athlete) CHECK(g == 22);
  }

  TEST_CASE("filtering is idempotent") {
    std::vector<GpsTrace> traces;
    for (int m = 0; m < 8; ++m) add_match(traces, "a", "m" + std::to_string(m), 45.0, m == 3 ? 10.0 : 45.0);
    for (int m = 0; m < 4; ++m) add_match(traces, "b", "m" + std::to_string(m));
    const auto once = filter_sessions(traces);
    const auto twice = filter_sessions(once.retained);
    CHECK(twice.retained.size() == once.retained.size());
    CHECK(std::all_of(twice.report.rows.begin(), twice.report.rows.end(),
                      [](const auto& row) { return row.retained; }));
    CHECK(twice.report.matches_per_athlete == once.report.matches_per_athlete);
  }

  TEST_CASE("eligibility report layout") {
    std::vector<GpsTrace> traces;
    add_match(traces, "a", "m1", 46.66666, 45.0);
    const auto csv = serialize_eligibility(filter_sessions(traces).report);
    CHECK(csv.rfind("athlete_id,match_id,half,minutes,retained,reason\n", 0) == 0);
    CHECK(csv.find("a,m1,1,46.6667,false,athlete_too_few_matches") != std::string::npos);
  }

  TEST_CASE("projection at the origin is the identity") {
    GpsTrace t;
    t.samples = {{0, -79.0, 35.9}, {1, -79.0, 35.9}};
    const auto p = project_to_meters(t);
    CHECK(p.samples[0].x_m == 0.0);
    CHECK(p.samples[1].y_m == 0.0);
    CHECK(p.origin.lon_deg == -79.0);
  }

  TEST_CASE("projected distances match the haversine oracle") {
    const GeoOrigin eq{0.0, 0.0};
    const auto a = project_point(eq, {0, 0.0, 0.0});
    const auto b = project_point(eq, {0, 0.001, 0.0});
    CHECK(b.x_m - a.x_m == doctest::Approx(111.19).epsilon(0.5 / 111.19));
    CHECK(b.x_m - a.x_m == doctest::Approx(oracle::haversine_m(0, 0, 0.001, 0)).epsilon(1e-6));

    const GeoOrigin north{0.0, 60.0};
    const auto c = project_point(north, {0, 0.0, 60.0});
    const auto d = project_point(north, {0, 0.001, 60.0});
    CHECK((d.x_m - c.x_m) / (b.x_m - a.x_m) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(d.x_m - c.x_m == doctest::Approx(oracle::haversine_m(0, 60, 0.001, 60)).epsilon(1e-4));
  }

  TEST_CASE("property: distances within 0.1% of haversine for traces under 2 km") {
    std::mt19937_64 gen(21);
    std::uniform_real_distribution<double> lat0(-70.0, 70.0), lon0(-180.0, 180.0), off(-0.006, 0.006);
    for (int trial = 0; trial < 200; ++trial) {
      GpsTrace t;
      const double la = lat0(gen), lo = lon0(gen);
      const double scale = 1.0 / std::cos(la * std::numbers::pi / 180.0);
      for (int k = 0; k < 10; ++k) t.samples.push_back({double(k), lo + off(gen) * scale, la + off(gen)});
      const auto p = project_to_meters(t);
      for (int i = 0; i < 10; ++i) {
        for (int j = i + 1; j < 10; ++j) {
          const double hv = oracle::haversine_m(t.samples[i].lon_deg, t.samples[i].lat_deg,
                                                t.samples[j].lon_deg, t.samples[j].lat_deg);
          const double planar = std::hypot(p.samples[i].x_m - p.samples[j].x_m,
                                           p.samples[i].y_m - p.samples[j].y_m);
          if (hv < 1.0) continue;
          REQUIRE(hv < 2000.0);
          CHECK(std::abs(planar - hv) / hv < 1e-3);
        }
      }
    }
  }

  TEST_CASE("projection round-trips through its inverse") {
    const GeoOrigin o{-79.05, 35.9};
    const GpsSample s{3.0, -79.0512, 35.9071};
    const auto back = unproject_point(o, project_point(o, s));
    CHECK(back.lon_deg == doctest::Approx(s.lon_deg).epsilon(1e-12));
    CHECK(back.lat_deg == doctest::Approx(s.lat_deg).epsilon(1e-12));
  }

  TEST_CASE("latitude outside (-85, 85) is a projection error") {
    GpsTrace t;
    t.samples = {{0, 0.0, 86.0}, {1, 0.0, 86.1}};
    ErrorKind kind{};
    std::string msg;
    REQUIRE(error_kind_of([&] { project_to_meters(t); }, kind, msg));
    CHECK(kind == ErrorKind::kProjection);
  }

  TEST_CASE("planar traces round-trip") {
    GpsTrace t;
    t.meta = meta_of("a", "m", Half::kFirst);
    t.samples = {{0, -79.0, 35.9}, {1, -79.0001, 35.9002}, {2, -79.0003, 35.9001}};
    const auto p = project_to_meters(t);
    const auto back = parse_planar_text(serialize_planar(p), p.meta, p.origin);
    REQUIRE(back.samples.size() == 3);
    CHECK(back.samples[2].x_m == p.samples[2].x_m);
    CHECK(back.samples[1].y_m == p.samples[1].y_m);
  }
}
