#pragma once

// Covariate records and the n x d cube dataset joined with them.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qcube/cube.hpp"
#include "qcube/ingest.hpp"

namespace qcube {

enum class Location { kHome, kAway, kNeutral };
enum class MatchResult { kWin, kLoss, kTie };
enum class Position { kDefender, kMidfielder, kForward };

std::string_view to_string(Location v) noexcept;
std::string_view to_string(MatchResult v) noexcept;
std::string_view to_string(Position v) noexcept;
Location parse_location(std::string_view token);
MatchResult parse_result(std::string_view token);
Position parse_position(std::string_view token);

/// Ten match-level and three athlete-level covariates for one row.
struct CovariateRecord {
  std::string match_id;
  Location location = Location::kHome;
  Half half = Half::kFirst;
  MatchResult result = MatchResult::kWin;
  int goals_for_ht = 0;
  int goals_for_ft = 0;
  int goals_against_ht = 0;
  int goals_against_ft = 0;
  int diff_ht = 0;
  int diff_ft = 0;
  std::string athlete_id;
  Position position = Position::kDefender;
  std::int64_t playing_time = 0;  // deciseconds

  HalfKey key() const { return {athlete_id, match_id, half}; }
  /// Throws kConsistency when a goal differential disagrees with the goals.
  void validate() const;
};

std::string serialize_covariates(std::span<const CovariateRecord> records);
std::vector<CovariateRecord> parse_covariates(std::string_view csv);

struct CubeDataset {
  BinLayout layout;
  std::vector<QuantileCube> cubes;          // rows of Y
  std::vector<CovariateRecord> covariates;  // rows of X, same order
  std::size_t unused_covariates = 0;        // records with no matching cube

  std::size_t n() const { return cubes.size(); }
  int d() const { return layout.size(); }
  std::vector<HalfKey> row_keys() const;

  Eigen::MatrixXd counts_matrix() const;
  Eigen::MatrixXd proportions_matrix() const;
  /// Column sums of Y: the pooled decisecond counts over all rows.
  std::vector<std::int64_t> pooled_counts() const;
};

/// Joins cubes with covariates and orders rows by (match, athlete, half).
/// Every cube needs exactly one record; records without a cube are ignored.
CubeDataset assemble_dataset(std::vector<QuantileCube> cubes,
                             std::span<const CovariateRecord> covariates,
                             const BinLayout& layout = {});

}  // namespace qcube
