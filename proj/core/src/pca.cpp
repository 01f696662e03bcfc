#include "qcube/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qcube/error.hpp"
#include "qcube/stats.hpp"
#include "qcube/text.hpp"

namespace qcube {
namespace {

ScoreSummary summarize(std::vector<double> scores) {
  ScoreSummary s;
  s.mean = stats::mean(scores);
  s.sd = std::sqrt(stats::variance(scores));
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  for (const double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    s.quantiles.push_back(stats::quantile_type7_sorted(sorted, p));
  }
  s.scores = std::move(scores);
  return s;
}

std::vector<std::int64_t> histogram(std::span<const double> values, std::span<const double> edges) {
  std::vector<std::int64_t> counts(edges.size() - 1, 0);
  for (const double v : values) {
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    auto bin = static_cast<std::ptrdiff_t>(it - edges.begin()) - 1;
    bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(counts.size()) - 1);
    ++counts[static_cast<std::size_t>(bin)];
  }
  return counts;
}

std::string component_header(int k) {
  std::string out;
  for (int c = 0; c < k; ++c) out += ",PC" + std::to_string(c + 1);
  return out;
}

}  // namespace

std::string_view to_string(PcaInput v) noexcept {
  return v == PcaInput::kCounts ? "counts" : "proportions";
}

PcaInput parse_pca_input(std::string_view token) {
  if (token == "proportions") return PcaInput::kProportions;
  if (token == "counts") return PcaInput::kCounts;
  fail(ErrorKind::kInvalidArgument, "unknown PCA input '" + std::string(token) +
                                        "' (expected proportions or counts)");
}

int components_for_cutoff(const Eigen::VectorXd& explained, double cutoff) {
  double cumulative = 0.0;
  for (Eigen::Index k = 0; k < explained.size(); ++k) {
    cumulative += explained[k];
    if (cumulative >= cutoff - 1e-12) return static_cast<int>(k + 1);
  }
  return static_cast<int>(explained.size());
}

PcaResult fit_pca(const Eigen::MatrixXd& rows, double cutoff) {
  if (rows.rows() < 2) fail(ErrorKind::kInsufficientData, "pca: need at least two rows");
  if (!(cutoff > 0.0 && cutoff <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "pca: cutoff must lie in (0, 1]");
  }
  if (!rows.allFinite()) fail(ErrorKind::kDomain, "pca: input has non-finite entries");

  PcaResult r;
  r.cutoff = cutoff;
  r.column_means = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - r.column_means.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd sigma = svd.singularValues();
  const Eigen::VectorXd sq = sigma.array().square();
  const double total = sq.sum();
  if (!(total > 0.0)) fail(ErrorKind::kDomain, "pca: all rows are identical");

  r.loadings = svd.matrixV();
  for (Eigen::Index c = 0; c < r.loadings.cols(); ++c) {
    Eigen::Index arg = 0;
    r.loadings.col(c).cwiseAbs().maxCoeff(&arg);
    if (r.loadings(arg, c) < 0.0) r.loadings.col(c) *= -1.0;
  }
  r.scores = centered * r.loadings;
  r.variances = sq / static_cast<double>(rows.rows() - 1);
  r.explained = sq / total;
  r.retained = components_for_cutoff(r.explained, cutoff);
  return r;
}

std::vector<LoadingEntry> top_loadings(const PcaResult& result, int component, int count,
                                       const BinLayout& layout) {
  if (component < 0 || component >= result.retained) {
    fail(ErrorKind::kInvalidArgument, "top_loadings: component " + std::to_string(component + 1) +
                                          " is outside the " + std::to_string(result.retained) +
                                          " retained components");
  }
  if (result.loadings.rows() != layout.size()) {
    fail(ErrorKind::kInvalidArgument, "top_loadings: layout does not match loading dimension");
  }
  std::vector<LoadingEntry> entries;
  for (int j = 0; j < layout.size(); ++j) {
    entries.push_back({j, bin_label(j, layout), result.loadings(j, component)});
  }
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return std::abs(a.loading) > std::abs(b.loading);
  });
  entries.resize(std::min<std::size_t>(entries.size(), static_cast<std::size_t>(std::max(count, 0))));
  return entries;
}

ScoreContrast score_contrast(const PcaResult& result, const std::vector<bool>& mask, int component,
                             int histogram_bins) {
  if (static_cast<Eigen::Index>(mask.size()) != result.scores.rows()) {
    fail(ErrorKind::kInvalidArgument, "score_contrast: mask length does not match row count");
  }
  if (component < 0 || component >= result.components()) {
    fail(ErrorKind::kInvalidArgument, "score_contrast: component out of range");
  }
  if (histogram_bins < 1) fail(ErrorKind::kInvalidArgument, "score_contrast: need >= 1 bin");
  const auto selected = std::count(mask.begin(), mask.end(), true);
  if (selected == 0 || selected == static_cast<std::ptrdiff_t>(mask.size())) {
    fail(ErrorKind::kInvalidArgument, "score_contrast: subset must be nonempty and proper");
  }

  std::vector<double> in, out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    (mask[i] ? in : out).push_back(result.scores(static_cast<Eigen::Index>(i), component));
  }
  ScoreContrast c;
  c.component = component;
  c.subset = summarize(std::move(in));
  c.complement = summarize(std::move(out));

  const double lo = std::min(c.subset.quantiles.front(), c.complement.quantiles.front());
  const double hi = std::max(c.subset.quantiles.back(), c.complement.quantiles.back());
  const double width = hi > lo ? (hi - lo) / histogram_bins : 1.0;
  for (int b = 0; b <= histogram_bins; ++b) c.histogram_edges.push_back(lo + b * width);
  c.subset.histogram = histogram(c.subset.scores, c.histogram_edges);
  c.complement.histogram = histogram(c.complement.scores, c.histogram_edges);

  const double ns = static_cast<double>(c.subset.scores.size());
  const double nc = static_cast<double>(c.complement.scores.size());
  const double dof = ns + nc - 2.0;
  const double pooled =
      dof > 0.0 ? std::sqrt(((ns - 1.0) * c.subset.sd * c.subset.sd +
                             (nc - 1.0) * c.complement.sd * c.complement.sd) / dof)
                : 0.0;
  const double diff = c.subset.mean - c.complement.mean;
  c.standardized_difference = pooled > 0.0 ? diff / pooled
                              : diff == 0.0 ? 0.0
                                            : std::copysign(INFINITY, diff);
  return c;
}

std::string serialize_pca_explained(const PcaResult& result) {
  std::string out = "component,fraction,cumulative\n";
  double cumulative = 0.0;
  for (Eigen::Index k = 0; k < result.explained.size(); ++k) {
    cumulative += result.explained[k];
    out += std::to_string(k + 1) + "," + text::format_double(result.explained[k]) + "," +
           text::format_double(cumulative) + "\n";
  }
  return out;
}

std::string serialize_pca_loadings(const PcaResult& result, const BinLayout& layout) {
  if (result.loadings.rows() != layout.size()) {
    fail(ErrorKind::kInvalidArgument, "pca: layout does not match loading dimension");
  }
  std::string out = "bin" + component_header(result.retained) + "\n";
  for (int j = 0; j < layout.size(); ++j) {
    out += bin_label(j, layout);
    for (int c = 0; c < result.retained; ++c) out += "," + text::format_double(result.loadings(j, c));
    out += "\n";
  }
  return out;
}

std::string serialize_pca_scores(const PcaResult& result, std::span<const HalfKey> keys) {
  if (static_cast<Eigen::Index>(keys.size()) != result.scores.rows()) {
    fail(ErrorKind::kInvalidArgument, "pca: key count does not match score rows");
  }
  std::string out = "athlete_id,match_id,half" + component_header(result.retained) + "\n";
  for (std::size_t i = 0; i < keys.size(); ++i) {
    out += keys[i].athlete_id + "," + keys[i].match_id + "," +
           std::to_string(half_number(keys[i].half));
    for (int c = 0; c < result.retained; ++c) {
      out += "," + text::format_double(result.scores(static_cast<Eigen::Index>(i), c));
    }
    out += "\n";
  }
  return out;
}

}  // namespace qcube
