#include "qcube/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "qcube/error.hpp"
#include "qcube/kinematics.hpp"
#include "qcube/rng.hpp"
#include "qcube/text.hpp"

namespace qcube {
namespace {

constexpr double kStep = 0.1;
constexpr int kStepsPerSecond = 10;

constexpr std::uint64_t kTraceStream = 0x7261636b;
constexpr std::uint64_t kCubeStream = 0x63756265;
constexpr std::uint64_t kSeasonStream = 0x73656173;

double draw(RandomStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

std::size_t draw_index(RandomStream& rng, std::span<const double> weights) {
  double u = rng.uniform();
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (u < weights[k]) return k;
    u -= weights[k];
  }
  for (std::size_t k = weights.size(); k-- > 0;) {
    if (weights[k] > 0.0) return k;
  }
  return 0;
}

void reflect(double& pos, double& heading, double limit, bool horizontal) {
  for (int guard = 0; guard < 4 && (pos < 0.0 || pos > limit); ++guard) {
    pos = pos < 0.0 ? -pos : 2.0 * limit - pos;
    heading = horizontal ? std::numbers::pi - heading : -heading;
  }
  pos = std::clamp(pos, 0.0, limit);
}

std::string padded(const char* prefix, int index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 2) digits.insert(0, 2 - digits.size(), '0');
  return prefix + digits;
}

std::vector<double> normalized(std::vector<double> w) {
  double sum = 0.0;
  for (const double v : w) sum += v;
  for (double& v : w) v /= sum;
  return w;
}

}  // namespace

void RegimeSpec::validate() const {
  if (regimes.empty()) fail(ErrorKind::kInvalidArgument, "regime spec: no regimes");
  if (!(pitch_length_m > 0.0 && pitch_width_m > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "regime spec: pitch bounds must be positive");
  }
  for (const Regime& r : regimes) {
    const bool ok = r.speed_min >= 0.0 && r.speed_min <= r.speed_max && r.accel_min >= 0.0 &&
                    r.accel_min <= r.accel_max && r.turn_min >= 0.0 && r.turn_min <= r.turn_max &&
                    r.mean_dwell_s > 0.0;
    if (!ok) fail(ErrorKind::kInvalidArgument, "regime spec: bad ranges in regime '" + r.name + "'");
  }
  if (transitions.size() != regimes.size()) {
    fail(ErrorKind::kInvalidArgument, "regime spec: transition matrix has the wrong size");
  }
  for (const auto& row : transitions) {
    if (row.size() != regimes.size()) {
      fail(ErrorKind::kInvalidArgument, "regime spec: transition matrix has the wrong size");
    }
    double sum = 0.0;
    for (const double w : row) {
      if (!(w >= 0.0)) fail(ErrorKind::kInvalidArgument, "regime spec: negative transition weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      fail(ErrorKind::kInvalidArgument, "regime spec: transition row does not sum to 1");
    }
  }
}

RegimeSpec RegimeSpec::constant_speed(double speed_mps, double pitch_m) {
  RegimeSpec spec;
  spec.regimes.push_back({"constant", speed_mps, speed_mps, 0.0, 0.0, 0.0, 0.0, 1e9});
  spec.transitions = {{1.0}};
  spec.pitch_length_m = pitch_m;
  spec.pitch_width_m = pitch_m;
  return spec;
}

RegimeSpec RegimeSpec::match_play(Position position, Half half) {
  RegimeSpec spec;
  spec.regimes = {
      {"standing", 0.0, 0.4, 0.3, 1.0, 0.0, 40.0, 6.0},
      {"walking", 0.8, 2.0, 0.5, 1.5, 0.0, 25.0, 15.0},
      {"jogging", 2.2, 4.0, 0.8, 2.0, 0.0, 15.0, 10.0},
      {"running", 4.0, 5.5, 1.5, 3.0, 0.0, 10.0, 6.0},
      {"sprinting", 5.5, 8.0, 2.5, 4.5, 0.0, 5.0, 3.0},
  };
  std::vector<double> weights;
  switch (position) {
    case Position::kDefender: weights = {0.15, 0.45, 0.25, 0.10, 0.05}; break;
    case Position::kMidfielder: weights = {0.10, 0.35, 0.35, 0.15, 0.05}; break;
    case Position::kForward: weights = {0.15, 0.40, 0.20, 0.13, 0.12}; break;
  }
  if (half == Half::kSecond) {
    weights[0] *= 1.25;
    weights[3] *= 0.8;
    weights[4] *= 0.7;
  }
  weights = normalized(std::move(weights));
  spec.transitions.assign(spec.regimes.size(), weights);
  return spec;
}

GpsTrace gen_trace(const RegimeSpec& spec, double duration_s, std::uint64_t seed,
                   const TraceMetadata& meta, const GeoOrigin& origin) {
  spec.validate();
  if (!(duration_s >= 10.0)) fail(ErrorKind::kInvalidArgument, "gen_trace: duration must be >= 10 s");
  RandomStream rng(seed, kTraceStream);

  const double half_l = spec.pitch_length_m / 2.0;
  const double half_w = spec.pitch_width_m / 2.0;
  double x = half_l;
  double y = half_w;
  double heading = draw(rng, 0.0, 2.0 * std::numbers::pi);

  std::vector<double> initial(spec.regimes.size(), 1.0 / static_cast<double>(spec.regimes.size()));
  std::size_t regime = draw_index(rng, initial);
  double target = 0.0, accel = 0.0, turn = 0.0, dwell = 0.0;
  auto enter = [&](std::size_t r) {
    const Regime& g = spec.regimes[r];
    target = draw(rng, g.speed_min, g.speed_max);
    accel = draw(rng, g.accel_min, g.accel_max);
    turn = draw(rng, g.turn_min, g.turn_max) * std::numbers::pi / 180.0;
    if (rng.uniform() < 0.5) turn = -turn;
    dwell = std::max(1.0, -g.mean_dwell_s * std::log(rng.uniform_open()));
  };
  enter(regime);
  double speed = target;

  GpsTrace trace;
  trace.meta = meta;
  const auto count = static_cast<std::int64_t>(std::floor(duration_s));
  trace.samples.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) {
    trace.samples.push_back(
        unproject_point(origin, {static_cast<double>(k), x - half_l, y - half_w}));
    for (int s = 0; s < kStepsPerSecond; ++s) {
      dwell -= kStep;
      if (dwell <= 0.0) {
        regime = draw_index(rng, spec.transitions[regime]);
        enter(regime);
      }
      const double delta = target - speed;
      const double limit = accel * kStep;
      speed += std::clamp(delta, -limit, limit);
      heading += turn * kStep;
      x += speed * std::cos(heading) * kStep;
      y += speed * std::sin(heading) * kStep;
      reflect(x, heading, spec.pitch_length_m, true);
      reflect(y, heading, spec.pitch_width_m, false);
    }
  }
  return trace;
}

std::vector<CovariateRecord> synthetic_covariates(int rows, std::int64_t total, std::uint64_t seed) {
  if (rows < 0) fail(ErrorKind::kInvalidArgument, "synthetic_covariates: negative row count");
  std::vector<CovariateRecord> out;
  out.reserve(static_cast<std::size_t>(rows));
  for (int i = 0; i < rows; ++i) {
    RandomStream rng(seed, kSeasonStream, static_cast<std::uint64_t>(i / 2));
    CovariateRecord r;
    r.match_id = "m" + std::to_string(i / 2);
    r.athlete_id = "a" + std::to_string((i / 2) % 9);
    r.half = i % 2 == 0 ? Half::kFirst : Half::kSecond;
    r.position = static_cast<Position>((i / 2) % 3);
    r.location = static_cast<Location>(rng() % 3);
    r.goals_for_ht = static_cast<int>(rng() % 3);
    r.goals_against_ht = static_cast<int>(rng() % 3);
    r.goals_for_ft = r.goals_for_ht + static_cast<int>(rng() % 3);
    r.goals_against_ft = r.goals_against_ht + static_cast<int>(rng() % 3);
    r.diff_ht = r.goals_for_ht - r.goals_against_ht;
    r.diff_ft = r.goals_for_ft - r.goals_against_ft;
    r.result = r.diff_ft > 0 ? MatchResult::kWin : r.diff_ft < 0 ? MatchResult::kLoss : MatchResult::kTie;
    r.playing_time = total;
    out.push_back(std::move(r));
  }
  return out;
}

CubeDataset gen_cube_dataset(const Eigen::MatrixXd& beta_truth, const DesignMatrix& design,
                             std::span<const CovariateRecord> records, const BinLayout& layout,
                             std::uint64_t seed) {
  if (beta_truth.rows() != layout.size() || beta_truth.cols() != design.p()) {
    fail(ErrorKind::kInvalidArgument, "gen_cube_dataset: coefficient matrix has the wrong shape");
  }
  const auto d = static_cast<std::size_t>(layout.size());
  std::vector<QuantileCube> cubes;
  cubes.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Eigen::VectorXd eta = link_eta(beta_truth, design.encode(records[i]));
    RandomStream rng(seed, kCubeStream, i);

    std::vector<double> gammas(d);
    double sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      std::gamma_distribution<double> gamma(eta[static_cast<Eigen::Index>(j)], 1.0);
      gammas[j] = gamma(rng);
      sum += gammas[j];
    }
    if (!(sum > 0.0)) {
      Eigen::Index arg = 0;
      eta.maxCoeff(&arg);
      std::fill(gammas.begin(), gammas.end(), 0.0);
      gammas[static_cast<std::size_t>(arg)] = sum = 1.0;
    }

    QuantileCube cube;
    cube.key = records[i].key();
    cube.counts.assign(d, 0);
    std::int64_t remaining = records[i].playing_time;
    double mass = sum;
    for (std::size_t j = 0; j + 1 < d && remaining > 0; ++j) {
      const double p = mass > 0.0 ? std::clamp(gammas[j] / mass, 0.0, 1.0) : 0.0;
      std::binomial_distribution<std::int64_t> binomial(remaining, p);
      cube.counts[j] = binomial(rng);
      remaining -= cube.counts[j];
      mass -= gammas[j];
    }
    cube.counts[d - 1] += remaining;
    cube.total = records[i].playing_time;
    cubes.push_back(std::move(cube));
  }
  return assemble_dataset(std::move(cubes), records, layout);
}

SimulatedSeason simulate_season(const SeasonSpec& spec) {
  if (spec.athletes < 1 || spec.matches < 1) {
    fail(ErrorKind::kInvalidArgument, "simulate_season: need at least one athlete and one match");
  }
  if (!(spec.rate_hz > 0.0) || !(spec.half_minutes >= 10.0)) {
    fail(ErrorKind::kInvalidArgument, "simulate_season: bad rate or half length");
  }
  SimulatedSeason season;
  const int roster = spec.athletes + (spec.include_reserve ? 1 : 0);
  const double regulation = spec.half_minutes * 60.0;

  for (int m = 0; m < spec.matches; ++m) {
    RandomStream match_rng(spec.seed, kSeasonStream, static_cast<std::uint64_t>(m));
    const std::string match_id = padded("m", m + 1);
    const auto location = static_cast<Location>(match_rng() % 3);
    const int for_ht = static_cast<int>(match_rng() % 3);
    const int against_ht = static_cast<int>(match_rng() % 3);
    const int for_ft = for_ht + static_cast<int>(match_rng() % 3);
    const int against_ft = against_ht + static_cast<int>(match_rng() % 3);
    const MatchResult result = for_ft > against_ft   ? MatchResult::kWin
                               : for_ft < against_ft ? MatchResult::kLoss
                                                     : MatchResult::kTie;
    const bool overtime_match = m == spec.matches - 1;

    for (int a = 0; a < roster; ++a) {
      const bool reserve = a == spec.athletes;
      if (reserve && m >= 3) continue;
      const std::string athlete_id = padded("a", a + 1);
      const auto position = static_cast<Position>(a % 3);
      const bool short_match = !reserve && (a + m) % 5 == 4;

      for (const Half half : {Half::kFirst, Half::kSecond}) {
        RandomStream rng(spec.seed, stable_hash(athlete_id + "/" + match_id),
                         static_cast<std::uint64_t>(half_number(half)));
        double duration = regulation + std::floor(draw(rng, 0.0, 180.0));
        if (short_match && half == Half::kSecond) duration = std::floor(draw(rng, 600.0, 1400.0));

        TraceMetadata meta{athlete_id, match_id, half, std::nullopt};
        if (overtime_match && half == Half::kSecond) {
          meta.regulation_end_s = duration;
          duration += 300.0;
        }
        GpsTrace trace = gen_trace(RegimeSpec::match_play(position, half), duration, rng(), meta,
                                   spec.origin);
        // Occasional receiver dropouts, never at either end.
        for (std::size_t k = trace.samples.size() - 2; k > 1; --k) {
          if (rng.uniform() < 0.002) trace.samples.erase(trace.samples.begin() + static_cast<std::ptrdiff_t>(k));
        }

        double last = trace.samples.back().t_s;
        if (meta.regulation_end_s) {
          for (auto it = trace.samples.rbegin(); it != trace.samples.rend(); ++it) {
            if (it->t_s <= *meta.regulation_end_s) {
              last = it->t_s;
              break;
            }
          }
        }
        CovariateRecord rec;
        rec.match_id = match_id;
        rec.location = location;
        rec.half = half;
        rec.result = result;
        rec.goals_for_ht = for_ht;
        rec.goals_for_ft = for_ft;
        rec.goals_against_ht = against_ht;
        rec.goals_against_ft = against_ft;
        rec.diff_ht = for_ht - against_ht;
        rec.diff_ft = for_ft - against_ft;
        rec.athlete_id = athlete_id;
        rec.position = position;
        rec.playing_time = grid_point_count(trace.samples.front().t_s, last, spec.rate_hz);
        season.covariates.push_back(std::move(rec));
        season.traces.push_back(std::move(trace));
      }
    }
  }
  return season;
}

std::vector<std::filesystem::path> write_season(const std::filesystem::path& dir,
                                                const SimulatedSeason& season) {
  std::vector<std::filesystem::path> written;
  for (const GpsTrace& t : season.traces) {
    const std::string stem = t.meta.athlete_id + "__" + t.meta.match_id + "__h" +
                             std::to_string(half_number(t.meta.half));
    const auto csv = dir / (stem + ".csv");
    const auto meta = dir / (stem + ".meta");
    text::write_file(csv, serialize_trace(t));
    text::write_file(meta, serialize_metadata(t.meta));
    written.push_back(csv);
    written.push_back(meta);
  }
  const auto cov = dir / "covariates.csv";
  text::write_file(cov, serialize_covariates(season.covariates));
  written.push_back(cov);
  return written;
}

}  // namespace qcube
