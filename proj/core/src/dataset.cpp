#include "qcube/dataset.hpp"

#include <algorithm>
#include <map>

#include "qcube/error.hpp"
#include "qcube/text.hpp"

namespace qcube {
namespace {

constexpr std::string_view kCovariateHeader =
    "match_id,location,half,result,goals_for_ht,goals_for_ft,goals_against_ht,"
    "goals_against_ft,diff_ht,diff_ft,athlete_id,position,playing_time";

int to_int_field(std::string_view token, std::size_t line, const char* name) {
  const auto v = text::to_int(token);
  if (!v) {
    fail(ErrorKind::kParse,
         "covariates line " + std::to_string(line) + ": '" + name + "' is not an integer");
  }
  return static_cast<int>(*v);
}

}  // namespace

std::string_view to_string(Location v) noexcept {
  switch (v) {
    case Location::kHome: return "home";
    case Location::kAway: return "away";
    case Location::kNeutral: return "neutral";
  }
  return "home";
}

std::string_view to_string(MatchResult v) noexcept {
  switch (v) {
    case MatchResult::kWin: return "win";
    case MatchResult::kLoss: return "loss";
    case MatchResult::kTie: return "tie";
  }
  return "win";
}

std::string_view to_string(Position v) noexcept {
  switch (v) {
    case Position::kDefender: return "defender";
    case Position::kMidfielder: return "midfielder";
    case Position::kForward: return "forward";
  }
  return "defender";
}

Location parse_location(std::string_view token) {
  if (token == "home") return Location::kHome;
  if (token == "away") return Location::kAway;
  if (token == "neutral") return Location::kNeutral;
  fail(ErrorKind::kParse, "unknown location '" + std::string(token) + "'");
}

MatchResult parse_result(std::string_view token) {
  if (token == "win") return MatchResult::kWin;
  if (token == "loss") return MatchResult::kLoss;
  if (token == "tie") return MatchResult::kTie;
  fail(ErrorKind::kParse, "unknown result '" + std::string(token) + "'");
}

Position parse_position(std::string_view token) {
  if (token == "defender") return Position::kDefender;
  if (token == "midfielder") return Position::kMidfielder;
  if (token == "forward") return Position::kForward;
  fail(ErrorKind::kParse, "unknown position '" + std::string(token) + "'");
}

void CovariateRecord::validate() const {
  if (diff_ht != goals_for_ht - goals_against_ht || diff_ft != goals_for_ft - goals_against_ft) {
    fail(ErrorKind::kConsistency,
         "covariates " + to_string(key()) + ": goal differential disagrees with goals");
  }
  if (playing_time < 0) {
    fail(ErrorKind::kConsistency, "covariates " + to_string(key()) + ": negative playing time");
  }
}

std::string serialize_covariates(std::span<const CovariateRecord> records) {
  std::string out(kCovariateHeader);
  out += '\n';
  for (const CovariateRecord& r : records) {
    out += r.match_id + "," + std::string(to_string(r.location)) + "," +
           std::to_string(half_number(r.half)) + "," + std::string(to_string(r.result)) + "," +
           std::to_string(r.goals_for_ht) + "," + std::to_string(r.goals_for_ft) + "," +
           std::to_string(r.goals_against_ht) + "," + std::to_string(r.goals_against_ft) + "," +
           std::to_string(r.diff_ht) + "," + std::to_string(r.diff_ft) + "," + r.athlete_id +
           "," + std::string(to_string(r.position)) + "," + std::to_string(r.playing_time) + "\n";
  }
  return out;
}

std::vector<CovariateRecord> parse_covariates(std::string_view csv) {
  const auto all = text::lines(csv);
  if (all.empty() || text::split_csv(all.front()) != text::split_csv(kCovariateHeader)) {
    fail(ErrorKind::kParse, "covariates: expected header '" + std::string(kCovariateHeader) + "'");
  }
  std::vector<CovariateRecord> out;
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].empty()) continue;
    const std::size_t line = i + 1;
    const auto f = text::split_csv(all[i]);
    if (f.size() != 13) {
      fail(ErrorKind::kParse, "covariates line " + std::to_string(line) + ": expected 13 fields");
    }
    CovariateRecord r;
    r.match_id = std::string(f[0]);
    r.location = parse_location(f[1]);
    r.half = parse_half(f[2]);
    r.result = parse_result(f[3]);
    r.goals_for_ht = to_int_field(f[4], line, "goals_for_ht");
    r.goals_for_ft = to_int_field(f[5], line, "goals_for_ft");
    r.goals_against_ht = to_int_field(f[6], line, "goals_against_ht");
    r.goals_against_ft = to_int_field(f[7], line, "goals_against_ft");
    r.diff_ht = to_int_field(f[8], line, "diff_ht");
    r.diff_ft = to_int_field(f[9], line, "diff_ft");
    r.athlete_id = std::string(f[10]);
    r.position = parse_position(f[11]);
    const auto t = text::to_int(f[12]);
    if (!t) fail(ErrorKind::kParse, "covariates line " + std::to_string(line) + ": playing_time");
    r.playing_time = *t;
    r.validate();
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<HalfKey> CubeDataset::row_keys() const {
  std::vector<HalfKey> keys;
  keys.reserve(cubes.size());
  for (const auto& c : cubes) keys.push_back(c.key);
  return keys;
}

Eigen::MatrixXd CubeDataset::counts_matrix() const {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n()), d());
  for (std::size_t i = 0; i < n(); ++i) {
    for (int j = 0; j < d(); ++j) {
      y(static_cast<Eigen::Index>(i), j) = static_cast<double>(cubes[i].counts[static_cast<std::size_t>(j)]);
    }
  }
  return y;
}

Eigen::MatrixXd CubeDataset::proportions_matrix() const {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n()), d());
  for (std::size_t i = 0; i < n(); ++i) {
    const auto p = cubes[i].proportions();
    for (int j = 0; j < d(); ++j) y(static_cast<Eigen::Index>(i), j) = p[static_cast<std::size_t>(j)];
  }
  return y;
}

std::vector<std::int64_t> CubeDataset::pooled_counts() const {
  std::vector<std::int64_t> pooled(static_cast<std::size_t>(d()), 0);
  for (const auto& c : cubes) {
    for (std::size_t j = 0; j < pooled.size(); ++j) pooled[j] += c.counts[j];
  }
  return pooled;
}

CubeDataset assemble_dataset(std::vector<QuantileCube> cubes,
                             std::span<const CovariateRecord> covariates,
                             const BinLayout& layout) {
  std::map<HalfKey, const CovariateRecord*> by_key;
  for (const CovariateRecord& r : covariates) {
    if (!by_key.emplace(r.key(), &r).second) {
      fail(ErrorKind::kJoin, "duplicate covariate record for " + to_string(r.key()));
    }
  }

  std::sort(cubes.begin(), cubes.end(),
            [](const QuantileCube& l, const QuantileCube& r) { return dataset_order(l.key, r.key); });

  CubeDataset ds;
  ds.layout = layout;
  std::size_t matched = 0;
  for (QuantileCube& cube : cubes) {
    if (static_cast<int>(cube.counts.size()) != layout.size()) {
      fail(ErrorKind::kConsistency, "cube " + to_string(cube.key) + " has " +
                                        std::to_string(cube.counts.size()) +
                                        " bins, layout expects " + std::to_string(layout.size()));
    }
    const auto it = by_key.find(cube.key);
    if (it == by_key.end()) {
      fail(ErrorKind::kJoin, "no covariate record for " + to_string(cube.key));
    }
    const CovariateRecord& rec = *it->second;
    rec.validate();
    if (rec.playing_time != cube.total) {
      fail(ErrorKind::kConsistency, "playing_time " + std::to_string(rec.playing_time) +
                                        " != cube total " + std::to_string(cube.total) + " for " +
                                        to_string(cube.key));
    }
    ds.covariates.push_back(rec);
    ds.cubes.push_back(std::move(cube));
    ++matched;
  }
  ds.unused_covariates = covariates.size() - matched;
  return ds;
}

}  // namespace qcube
