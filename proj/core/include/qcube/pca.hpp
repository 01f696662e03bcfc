#pragma once

// Covariance PCA of the cube matrix with a cumulative-variance cutoff.

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcube/cube.hpp"
#include "qcube/ingest.hpp"

namespace qcube {

enum class PcaInput { kProportions, kCounts };

std::string_view to_string(PcaInput v) noexcept;
PcaInput parse_pca_input(std::string_view token);

/// All min(n, d) components are kept; `retained` is the count K selected by the
/// cutoff. Each loading column is sign-fixed so its largest |entry| is positive.
struct PcaResult {
  Eigen::VectorXd column_means;  // d
  Eigen::MatrixXd loadings;      // d x m, orthonormal columns
  Eigen::MatrixXd scores;        // n x m, centered data times loadings
  Eigen::VectorXd variances;     // m, sigma^2 / (n - 1)
  Eigen::VectorXd explained;     // m, fractions of total variance
  int retained = 0;
  double cutoff = 0.9;

  int components() const { return static_cast<int>(explained.size()); }
  Eigen::MatrixXd retained_loadings() const { return loadings.leftCols(retained); }
  Eigen::MatrixXd retained_scores() const { return scores.leftCols(retained); }
};

/// Rows are observations. Throws kInsufficientData for n < 2 and kDomain when
/// the data carry no variance at all.
PcaResult fit_pca(const Eigen::MatrixXd& rows, double cutoff = 0.9);

/// Smallest k (1-based) whose cumulative explained fraction reaches cutoff.
int components_for_cutoff(const Eigen::VectorXd& explained, double cutoff);

struct LoadingEntry {
  int bin = 0;
  std::string label;
  double loading = 0.0;
};

/// Largest |loading| first. component is 0-based and must be < retained.
std::vector<LoadingEntry> top_loadings(const PcaResult& result, int component, int count,
                                       const BinLayout& layout);

struct ScoreSummary {
  std::vector<double> scores;
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> quantiles;  // 0, 25, 50, 75, 100 %
  std::vector<std::int64_t> histogram;
};

struct ScoreContrast {
  int component = 0;
  ScoreSummary subset;
  ScoreSummary complement;
  std::vector<double> histogram_edges;  // shared by both groups
  double standardized_difference = 0.0;  // (mean_s - mean_c) / pooled sd
};

/// mask[i] selects row i into the subset. Throws kInvalidArgument when the
/// subset is empty or contains every row.
ScoreContrast score_contrast(const PcaResult& result, const std::vector<bool>& mask, int component,
                             int histogram_bins = 20);

std::string serialize_pca_explained(const PcaResult& result);
std::string serialize_pca_loadings(const PcaResult& result, const BinLayout& layout);
std::string serialize_pca_scores(const PcaResult& result, std::span<const HalfKey> keys);

}  // namespace qcube
