#pragma once

// Dirichlet-multinomial regression with a log-linear link.
//
// Parameters are stored as a d x p matrix beta (row j = bin, column k =
// design column). When flattened, parameter (j, k) sits at index j * p + k.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qcube/cube.hpp"
#include "qcube/dataset.hpp"

namespace qcube {

/// Parsed form of a design string such as "half+position+logtime". The
/// intercept is implicit; "1" or an empty string means intercept only.
///
/// Terms: half, position, logtime, location, result, match, athlete, and the
/// numeric goal columns goals_for_ht, goals_for_ft, goals_against_ht,
/// goals_against_ft, diff_ht, diff_ft.
struct DesignSpec {
  std::vector<std::string> terms;

  static DesignSpec parse(std::string_view text);
  std::string text() const;
};

class DesignMatrix {
 public:
  DesignSpec spec;
  std::vector<std::string> column_names;  // "intercept" first
  Eigen::MatrixXd x;                      // n x p
  double log_time_center = 0.0;

  int p() const { return static_cast<int>(column_names.size()); }
  int column_index(std::string_view name) const;  // -1 when absent

  /// Encodes a record with the levels and centering fixed at build time.
  Eigen::VectorXd encode(const CovariateRecord& record) const;

 private:
  friend DesignMatrix build_design(const DesignSpec&, std::span<const CovariateRecord>);
  std::vector<std::function<double(const CovariateRecord&)>> encoders_;
};

/// Factor terms get one indicator per observed non-reference level. Reference
/// levels: first half, defender, home, win, and the lexicographically first
/// match or athlete. Throws kRank when the columns are linearly dependent.
DesignMatrix build_design(const DesignSpec& spec, std::span<const CovariateRecord> records);

/// Log Dirichlet-multinomial mass, Mosimann form.
double dm_log_pmf(std::span<const std::int64_t> y, std::span<const double> eta);

inline constexpr double kLinearPredictorLimit = 500.0;

/// eta_j = exp(beta_j . x), with each linear predictor clamped to +-500.
/// `clamped` (when given) is incremented once per clamped entry.
Eigen::VectorXd link_eta(const Eigen::MatrixXd& beta, const Eigen::VectorXd& x,
                         std::int64_t* clamped = nullptr);

/// Log-likelihood of a fixed count matrix as a function of beta, with the
/// analytic gradient and Hessian.
class DmrObjective {
 public:
  DmrObjective(Eigen::MatrixXd counts, Eigen::MatrixXd design);

  int rows() const { return static_cast<int>(y_.rows()); }
  int bins() const { return static_cast<int>(y_.cols()); }
  int columns() const { return static_cast<int>(x_.cols()); }
  int parameters() const { return bins() * columns(); }

  double loglik(const Eigen::MatrixXd& beta) const;
  /// Returns the log-likelihood and writes d loglik / d beta (d x p).
  double loglik_and_gradient(const Eigen::MatrixXd& beta, Eigen::MatrixXd& gradient) const;
  /// Second derivatives of the log-likelihood in flattened parameter order.
  Eigen::MatrixXd hessian(const Eigen::MatrixXd& beta) const;

  std::int64_t clamped_predictors() const { return clamped_; }

 private:
  Eigen::MatrixXd concentrations(const Eigen::MatrixXd& beta) const;

  Eigen::MatrixXd y_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd totals_;
  std::vector<std::vector<int>> occupied_;  // bins with y > 0, per row
  double constant_ = 0.0;
  mutable std::int64_t clamped_ = 0;
};

Eigen::VectorXd flatten_parameters(const Eigen::MatrixXd& beta);
Eigen::MatrixXd unflatten_parameters(const Eigen::VectorXd& theta, int bins, int columns);

struct DmrOptions {
  int max_iterations = 5000;
  int newton_steps = 25;
  double gradient_tolerance = 1e-6;
  double relative_tolerance = 1e-10;
  double z_cut = 3.0;
  double max_step = 5.0;  // cap on any single coordinate move per iteration
};

struct DmrFit {
  DesignMatrix design;
  Eigen::MatrixXd beta;  // d x p
  Eigen::MatrixXd se;    // NaN where unavailable
  Eigen::MatrixXd z;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> significant;
  double z_cut = 3.0;
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  std::int64_t rows = 0;
  bool se_available = false;
  std::vector<int> zero_count_bins;  // fitted, but their SEs are unreliable
  std::vector<double> loglik_trace;  // one entry per accepted step
  int quasi_newton_iterations = 0;
  int newton_iterations = 0;
  double gradient_max_norm = 0.0;
  std::int64_t clamped_predictors = 0;

  int parameter_count() const { return static_cast<int>(beta.size()); }
  Eigen::VectorXd fitted_eta(const Eigen::VectorXd& x) const;
  Eigen::VectorXd fitted_eta(const CovariateRecord& record) const;
  Eigen::VectorXd fitted_pi(const Eigen::VectorXd& x) const;
};

/// Maximum likelihood by BFGS with backtracking line search, finished with
/// Newton steps on the analytic Hessian. Throws kConvergence with the tail of
/// the likelihood trace when neither stopping rule is met.
DmrFit fit_dmr(const Eigen::MatrixXd& counts, const DesignMatrix& design,
               const DmrOptions& options = {});
DmrFit fit_dmr(const CubeDataset& dataset, const DesignSpec& spec, const DmrOptions& options = {});

struct ModelComparisonRow {
  std::string design;
  int parameters = 0;
  double loglik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  int rank = 0;  // 1 = lowest BIC; 0 when the fit failed
  std::string note;
};

/// Ranked by BIC, then parameter count. Failed fits stay in the table with
/// rank 0 and the error in `note`.
std::vector<ModelComparisonRow> compare_models(const CubeDataset& dataset,
                                               std::span<const DesignSpec> specs,
                                               const DmrOptions& options = {});

struct CoefficientCell {
  int bin = 0;
  std::string label;
  double beta = 0.0;
  double se = 0.0;
  double z = 0.0;
  bool significant = false;
};

/// One cell per bin, in cube index order, for the named design column.
std::vector<CoefficientCell> coefficient_cube_export(const DmrFit& fit, std::string_view column,
                                                     const BinLayout& layout);

/// CSV `bin,covariate,beta,se,z,significant`, bin-major.
std::string serialize_coefficients(const DmrFit& fit, const BinLayout& layout);
std::string serialize_comparison(std::span<const ModelComparisonRow> rows);

}  // namespace qcube
