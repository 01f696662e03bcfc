#include "qcube/dmr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

#include <boost/math/policies/policy.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "qcube/error.hpp"
#include "qcube/text.hpp"

namespace qcube {
namespace {

using FastPolicy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;

double digamma(double x) { return boost::math::digamma(x, FastPolicy()); }
double trigamma(double x) { return boost::math::trigamma(x, FastPolicy()); }

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim_lower(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

const std::map<std::string, int CovariateRecord::*, std::less<>>& numeric_terms() {
  static const std::map<std::string, int CovariateRecord::*, std::less<>> terms = {
      {"goals_for_ht", &CovariateRecord::goals_for_ht},
      {"goals_for_ft", &CovariateRecord::goals_for_ft},
      {"goals_against_ht", &CovariateRecord::goals_against_ht},
      {"goals_against_ft", &CovariateRecord::goals_against_ft},
      {"diff_ht", &CovariateRecord::diff_ht},
      {"diff_ft", &CovariateRecord::diff_ft},
  };
  return terms;
}

bool is_known_term(std::string_view term) {
  static const std::set<std::string, std::less<>> factors = {
      "half", "position", "logtime", "location", "result", "match", "athlete"};
  return factors.contains(term) || numeric_terms().contains(term);
}

std::string trace_tail(const std::vector<double>& trace) {
  std::string out;
  const std::size_t start = trace.size() > 5 ? trace.size() - 5 : 0;
  for (std::size_t i = start; i < trace.size(); ++i) {
    if (!out.empty()) out += ", ";
    out += text::format_double(trace[i]);
  }
  return out;
}

// Starting values: intercepts from pooled proportions scaled by a
// method-of-moments estimate of the total concentration, slopes at zero.
Eigen::MatrixXd initial_beta(const Eigen::MatrixXd& y, int columns) {
  const Eigen::Index n = y.rows();
  const Eigen::Index d = y.cols();
  const Eigen::VectorXd col_totals = y.colwise().sum().transpose();
  const Eigen::VectorXd row_totals = y.rowwise().sum();
  const double grand = col_totals.sum();
  const Eigen::VectorXd share = col_totals / grand;

  double chi = 0.0;
  Eigen::Index occupied = 0;
  for (Eigen::Index j = 0; j < d; ++j) {
    if (share[j] <= 0.0) continue;
    ++occupied;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double expected = row_totals[i] * share[j];
      chi += (y(i, j) - expected) * (y(i, j) - expected) / expected;
    }
  }
  double precision = 1e4;
  if (n > 1 && occupied > 1) {
    const double c = chi / (static_cast<double>(n - 1) * static_cast<double>(occupied - 1));
    const double mean_total = row_totals.mean();
    if (c > 1.0 + 1e-9) precision = (mean_total - c) / (c - 1.0);
    precision = std::clamp(precision, 1e-2, 1e7);
  }

  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(d, columns);
  const double floor_share = 0.5 / grand;
  for (Eigen::Index j = 0; j < d; ++j) {
    beta(j, 0) = std::log(std::max(share[j], floor_share) * precision);
  }
  return beta;
}

Eigen::VectorXd cap_step(Eigen::VectorXd step, double max_step) {
  const double norm = step.cwiseAbs().maxCoeff();
  if (norm > max_step) step *= max_step / norm;
  return step;
}

}  // namespace

// ---------------------------------------------------------------------------
// Design

DesignSpec DesignSpec::parse(std::string_view text) {
  DesignSpec spec;
  const std::string all = trim_lower(text);
  if (all.empty() || all == "1" || all == "intercept") return spec;
  std::size_t start = 0;
  while (start <= all.size()) {
    const std::size_t plus = all.find('+', start);
    const std::string term =
        trim_lower(std::string_view(all).substr(start, plus == std::string::npos ? std::string::npos
                                                                                 : plus - start));
    if (term.empty()) fail(ErrorKind::kInvalidArgument, "design '" + all + "' has an empty term");
    if (term != "1" && term != "intercept") {
      if (!is_known_term(term)) {
        fail(ErrorKind::kInvalidArgument, "design '" + all + "': unknown term '" + term + "'");
      }
      spec.terms.push_back(term);
    }
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  return spec;
}

std::string DesignSpec::text() const {
  if (terms.empty()) return "1";
  std::string out;
  for (const auto& t : terms) out += (out.empty() ? "" : "+") + t;
  return out;
}

int DesignMatrix::column_index(std::string_view name) const {
  const auto it = std::find(column_names.begin(), column_names.end(), name);
  return it == column_names.end() ? -1 : static_cast<int>(it - column_names.begin());
}

Eigen::VectorXd DesignMatrix::encode(const CovariateRecord& record) const {
  Eigen::VectorXd row(p());
  for (int k = 0; k < p(); ++k) row[k] = encoders_[static_cast<std::size_t>(k)](record);
  return row;
}

namespace {

void require_full_rank(const DesignMatrix& dm) {
  const std::string label = dm.spec.text();
  if (dm.x.rows() < dm.p()) {
    fail(ErrorKind::kRank, "design '" + label + "' has " + std::to_string(dm.p()) +
                               " columns but only " + std::to_string(dm.x.rows()) + " rows");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dm.x);
  if (qr.rank() < dm.p()) {
    std::string names;
    for (const auto& n : dm.column_names) names += (names.empty() ? "" : ", ") + n;
    fail(ErrorKind::kRank, "design '" + label + "' has rank " + std::to_string(qr.rank()) +
                               " < " + std::to_string(dm.p()) + " columns (" + names + ")");
  }
}

}  // namespace

DesignMatrix build_design(const DesignSpec& spec, std::span<const CovariateRecord> records) {
  DesignMatrix dm;
  dm.spec = spec;
  auto add = [&](std::string name, std::function<double(const CovariateRecord&)> fn) {
    dm.column_names.push_back(std::move(name));
    dm.encoders_.push_back(std::move(fn));
  };
  add("intercept", [](const CovariateRecord&) { return 1.0; });

  for (const std::string& term : spec.terms) {
    if (term == "half") {
      if (std::any_of(records.begin(), records.end(),
                      [](const auto& r) { return r.half == Half::kSecond; })) {
        add("half2", [](const CovariateRecord& r) { return r.half == Half::kSecond ? 1.0 : 0.0; });
      }
    } else if (term == "position") {
      for (const Position level : {Position::kMidfielder, Position::kForward}) {
        if (std::none_of(records.begin(), records.end(),
                         [&](const auto& r) { return r.position == level; })) {
          continue;
        }
        add(std::string(to_string(level)),
            [level](const CovariateRecord& r) { return r.position == level ? 1.0 : 0.0; });
      }
    } else if (term == "location") {
      for (const Location level : {Location::kAway, Location::kNeutral}) {
        if (std::none_of(records.begin(), records.end(),
                         [&](const auto& r) { return r.location == level; })) {
          continue;
        }
        add(std::string(to_string(level)),
            [level](const CovariateRecord& r) { return r.location == level ? 1.0 : 0.0; });
      }
    } else if (term == "result") {
      for (const MatchResult level : {MatchResult::kLoss, MatchResult::kTie}) {
        if (std::none_of(records.begin(), records.end(),
                         [&](const auto& r) { return r.result == level; })) {
          continue;
        }
        add(std::string(to_string(level)),
            [level](const CovariateRecord& r) { return r.result == level ? 1.0 : 0.0; });
      }
    } else if (term == "logtime") {
      double sum = 0.0;
      for (const auto& r : records) {
        if (r.playing_time <= 0) {
          fail(ErrorKind::kDomain, "design: non-positive playing_time for " + to_string(r.key()));
        }
        sum += std::log(static_cast<double>(r.playing_time));
      }
      dm.log_time_center = records.empty() ? 0.0 : sum / static_cast<double>(records.size());
      const double center = dm.log_time_center;
      add("logtime", [center](const CovariateRecord& r) {
        return std::log(static_cast<double>(r.playing_time)) - center;
      });
    } else if (term == "match" || term == "athlete") {
      const bool by_match = term == "match";
      std::set<std::string> levels;
      for (const auto& r : records) levels.insert(by_match ? r.match_id : r.athlete_id);
      if (!levels.empty()) levels.erase(levels.begin());
      for (const std::string& level : levels) {
        add(term + ":" + level, [level, by_match](const CovariateRecord& r) {
          return (by_match ? r.match_id : r.athlete_id) == level ? 1.0 : 0.0;
        });
      }
    } else {
      const auto member = numeric_terms().find(term)->second;
      add(term, [member](const CovariateRecord& r) { return static_cast<double>(r.*member); });
    }
  }

  dm.x.resize(static_cast<Eigen::Index>(records.size()), dm.p());
  for (std::size_t i = 0; i < records.size(); ++i) {
    dm.x.row(static_cast<Eigen::Index>(i)) = dm.encode(records[i]).transpose();
  }
  if (!dm.x.allFinite()) fail(ErrorKind::kDomain, "design: non-finite column entries");

  require_full_rank(dm);
  return dm;
}

// ---------------------------------------------------------------------------
// Density and link

namespace {

// Small draws: the mass as one ratio of rising-factorial products, so that a
// single rounding of log() is the only error on exactly representable cases.
constexpr double kDirectProductLimit = 256.0;

double direct_log_pmf(std::span<const std::int64_t> y, std::span<const double> eta, double sum_eta) {
  double num = 1.0, den = 1.0;
  int num_exp = 0, den_exp = 0;
  auto scale = [](double& m, int& e, double factor) {
    int k = 0;
    m = std::frexp(m * factor, &k);
    e += k;
  };
  std::int64_t n = 0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    for (std::int64_t i = 0; i < y[j]; ++i) {
      scale(num, num_exp, eta[j] + static_cast<double>(i));
      scale(den, den_exp, static_cast<double>(i + 1));
    }
    n += y[j];
  }
  for (std::int64_t i = 0; i < n; ++i) {
    scale(num, num_exp, static_cast<double>(i + 1));
    scale(den, den_exp, sum_eta + static_cast<double>(i));
  }
  const double ratio = num / den;
  const int e = num_exp - den_exp;
  if (e > -1000 && e < 1000) return std::log(std::ldexp(ratio, e));
  return std::log(ratio) + e * std::numbers::ln2;
}

}  // namespace

double dm_log_pmf(std::span<const std::int64_t> y, std::span<const double> eta) {
  if (y.size() != eta.size()) fail(ErrorKind::kDomain, "dm_log_pmf: dimension mismatch");
  double sum_eta = 0.0;
  double total = 0.0;
  double out = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (!(eta[j] > 0.0) || !std::isfinite(eta[j])) {
      fail(ErrorKind::kDomain, "dm_log_pmf: concentration must be positive and finite");
    }
    if (y[j] < 0) fail(ErrorKind::kDomain, "dm_log_pmf: negative count");
    sum_eta += eta[j];
    const double yj = static_cast<double>(y[j]);
    total += yj;
    if (y[j] > 0) out += std::lgamma(yj + eta[j]) - std::lgamma(eta[j]) - std::lgamma(yj + 1.0);
  }
  if (total == 0.0) return 0.0;
  if (total <= kDirectProductLimit) return direct_log_pmf(y, eta, sum_eta);
  return out + std::lgamma(total + 1.0) + std::lgamma(sum_eta) - std::lgamma(total + sum_eta);
}

Eigen::VectorXd link_eta(const Eigen::MatrixXd& beta, const Eigen::VectorXd& x,
                         std::int64_t* clamped) {
  if (beta.cols() != x.size()) fail(ErrorKind::kDomain, "link_eta: dimension mismatch");
  Eigen::VectorXd eta = beta * x;
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    if (std::abs(eta[j]) > kLinearPredictorLimit) {
      eta[j] = std::copysign(kLinearPredictorLimit, eta[j]);
      if (clamped != nullptr) ++*clamped;
    }
    eta[j] = std::exp(eta[j]);
  }
  return eta;
}

// ---------------------------------------------------------------------------
// Objective

DmrObjective::DmrObjective(Eigen::MatrixXd counts, Eigen::MatrixXd design)
    : y_(std::move(counts)), x_(std::move(design)) {
  if (y_.rows() != x_.rows()) {
    fail(ErrorKind::kDomain, "dmr: count and design row counts differ");
  }
  totals_ = y_.rowwise().sum();
  occupied_.resize(static_cast<std::size_t>(y_.rows()));
  for (Eigen::Index i = 0; i < y_.rows(); ++i) {
    constant_ += std::lgamma(totals_[i] + 1.0);
    for (Eigen::Index j = 0; j < y_.cols(); ++j) {
      const double v = y_(i, j);
      if (!(v >= 0.0) || v != std::floor(v)) {
        fail(ErrorKind::kDomain, "dmr: counts must be non-negative integers");
      }
      if (v > 0.0) {
        occupied_[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
        constant_ -= std::lgamma(v + 1.0);
      }
    }
  }
}

Eigen::MatrixXd DmrObjective::concentrations(const Eigen::MatrixXd& beta) const {
  if (beta.rows() != y_.cols() || beta.cols() != x_.cols()) {
    fail(ErrorKind::kDomain, "dmr: coefficient matrix has the wrong shape");
  }
  Eigen::MatrixXd u = x_ * beta.transpose();
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    double& v = u.data()[k];
    if (std::abs(v) > kLinearPredictorLimit) {
      v = std::copysign(kLinearPredictorLimit, v);
      ++clamped_;
    }
  }
  return u.array().exp().matrix();
}

double DmrObjective::loglik(const Eigen::MatrixXd& beta) const {
  const Eigen::MatrixXd eta = concentrations(beta);
  double total = constant_;
  for (Eigen::Index i = 0; i < y_.rows(); ++i) {
    const double s = eta.row(i).sum();
    double row = std::lgamma(s) - std::lgamma(totals_[i] + s);
    for (const int j : occupied_[static_cast<std::size_t>(i)]) {
      row += std::lgamma(y_(i, j) + eta(i, j)) - std::lgamma(eta(i, j));
    }
    total += row;
  }
  return total;
}

double DmrObjective::loglik_and_gradient(const Eigen::MatrixXd& beta,
                                         Eigen::MatrixXd& gradient) const {
  const Eigen::MatrixXd eta = concentrations(beta);
  Eigen::MatrixXd weights(eta.rows(), eta.cols());
  double total = constant_;
  for (Eigen::Index i = 0; i < y_.rows(); ++i) {
    const double s = eta.row(i).sum();
    const double n = totals_[i];
    double row = std::lgamma(s) - std::lgamma(n + s);
    const double common = digamma(s) - digamma(n + s);
    weights.row(i) = common * eta.row(i);
    for (const int j : occupied_[static_cast<std::size_t>(i)]) {
      const double e = eta(i, j);
      const double yj = y_(i, j);
      row += std::lgamma(yj + e) - std::lgamma(e);
      weights(i, j) += e * (digamma(yj + e) - digamma(e));
    }
    total += row;
  }
  gradient = weights.transpose() * x_;
  return total;
}

Eigen::MatrixXd DmrObjective::hessian(const Eigen::MatrixXd& beta) const {
  const Eigen::MatrixXd eta = concentrations(beta);
  const Eigen::Index n = y_.rows();
  const Eigen::Index d = y_.cols();
  const Eigen::Index p = x_.cols();

  // Per row: cross term c_i eta_j eta_l for every bin pair plus a diagonal
  // term in bin space, each multiplied by x x^T in covariate space.
  Eigen::MatrixXd z(n, d * p);
  Eigen::MatrixXd diag(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = eta.row(i).sum();
    const double tot = totals_[i];
    const double c = trigamma(s) - trigamma(tot + s);
    const double common = digamma(s) - digamma(tot + s);
    const double root = std::sqrt(std::max(c, 0.0));
    for (Eigen::Index j = 0; j < d; ++j) {
      diag(i, j) = eta(i, j) * common;
      for (Eigen::Index k = 0; k < p; ++k) z(i, j * p + k) = root * eta(i, j) * x_(i, k);
    }
    for (const int j : occupied_[static_cast<std::size_t>(i)]) {
      const double e = eta(i, j);
      const double yj = y_(i, j);
      diag(i, j) += e * (digamma(yj + e) - digamma(e)) + e * e * (trigamma(yj + e) - trigamma(e));
    }
  }
  Eigen::MatrixXd h = z.transpose() * z;
  for (Eigen::Index j = 0; j < d; ++j) {
    h.block(j * p, j * p, p, p).noalias() += x_.transpose() * diag.col(j).asDiagonal() * x_;
  }
  return h;
}

Eigen::VectorXd flatten_parameters(const Eigen::MatrixXd& beta) {
  Eigen::VectorXd theta(beta.size());
  for (Eigen::Index j = 0; j < beta.rows(); ++j) {
    for (Eigen::Index k = 0; k < beta.cols(); ++k) theta[j * beta.cols() + k] = beta(j, k);
  }
  return theta;
}

Eigen::MatrixXd unflatten_parameters(const Eigen::VectorXd& theta, int bins, int columns) {
  if (theta.size() != static_cast<Eigen::Index>(bins) * columns) {
    fail(ErrorKind::kDomain, "dmr: parameter vector has the wrong length");
  }
  Eigen::MatrixXd beta(bins, columns);
  for (int j = 0; j < bins; ++j) {
    for (int k = 0; k < columns; ++k) beta(j, k) = theta[j * columns + k];
  }
  return beta;
}

// ---------------------------------------------------------------------------
// Fit

Eigen::VectorXd DmrFit::fitted_eta(const Eigen::VectorXd& x) const { return link_eta(beta, x); }

Eigen::VectorXd DmrFit::fitted_eta(const CovariateRecord& record) const {
  return link_eta(beta, design.encode(record));
}

Eigen::VectorXd DmrFit::fitted_pi(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd eta = fitted_eta(x);
  return eta / eta.sum();
}

DmrFit fit_dmr(const Eigen::MatrixXd& counts, const DesignMatrix& design,
               const DmrOptions& options) {
  if (counts.rows() == 0) fail(ErrorKind::kInsufficientData, "dmr: no rows to fit");
  if (counts.rows() != design.x.rows()) {
    fail(ErrorKind::kDomain, "dmr: count and design row counts differ");
  }
  if (design.p() != design.x.cols()) {
    fail(ErrorKind::kInvalidArgument, "dmr: design column names and matrix disagree");
  }
  require_full_rank(design);
  for (Eigen::Index i = 0; i < counts.rows(); ++i) {
    if (!(counts.row(i).sum() > 0.0)) {
      fail(ErrorKind::kDomain, "dmr: row " + std::to_string(i) + " has zero total count");
    }
  }
  const DmrObjective objective(counts, design.x);
  const int d = objective.bins();
  const int p = objective.columns();

  // Minimise f = -loglik over the flattened parameters.
  auto value = [&](const Eigen::VectorXd& theta) {
    return -objective.loglik(unflatten_parameters(theta, d, p));
  };
  auto value_and_gradient = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& g) {
    Eigen::MatrixXd grad;
    const double ll = objective.loglik_and_gradient(unflatten_parameters(theta, d, p), grad);
    g = -flatten_parameters(grad);
    return -ll;
  };
  // Backtracking Armijo search along a descent direction; returns false when
  // no acceptable step exists.
  auto line_search = [&](const Eigen::VectorXd& theta, double f, const Eigen::VectorXd& g,
                         const Eigen::VectorXd& dir, Eigen::VectorXd& next, double& f_next) {
    const double slope = g.dot(dir);
    double step = 1.0;
    for (int tries = 0; tries < 60; ++tries) {
      next = theta + step * dir;
      f_next = value(next);
      if (std::isfinite(f_next) && f_next <= f + 1e-4 * step * slope) return true;
      step *= 0.5;
    }
    return false;
  };

  DmrFit fit;
  fit.design = design;
  fit.z_cut = options.z_cut;
  fit.rows = counts.rows();

  Eigen::VectorXd theta = flatten_parameters(initial_beta(counts, p));
  Eigen::VectorXd g;
  double f = value_and_gradient(theta, g);
  fit.loglik_trace.push_back(-f);
  const Eigen::Index dim = theta.size();
  Eigen::MatrixXd inverse_hessian = Eigen::MatrixXd::Identity(dim, dim);
  bool scaled = false;
  bool small_change = false;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (g.cwiseAbs().maxCoeff() < options.gradient_tolerance) break;
    Eigen::VectorXd dir = -inverse_hessian * g;
    if (!(g.dot(dir) < 0.0)) {
      inverse_hessian.setIdentity();
      scaled = false;
      dir = -g;
    }
    dir = cap_step(dir, options.max_step);
    Eigen::VectorXd next;
    double f_next = 0.0;
    if (!line_search(theta, f, g, dir, next, f_next)) {
      if (!scaled) break;
      inverse_hessian.setIdentity();
      scaled = false;
      continue;
    }
    Eigen::VectorXd g_next;
    f_next = value_and_gradient(next, g_next);
    const Eigen::VectorXd s = next - theta;
    const Eigen::VectorXd yv = g_next - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (!scaled) {
        inverse_hessian *= sy / yv.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = inverse_hessian * yv;
      const double yhy = yv.dot(hy);
      inverse_hessian.noalias() -= rho * (hy * s.transpose() + s * hy.transpose());
      inverse_hessian.noalias() += (rho * rho * yhy + rho) * (s * s.transpose());
    }
    const double change = std::abs(f - f_next) / std::max(1.0, std::abs(f));
    theta = std::move(next);
    f = f_next;
    g = std::move(g_next);
    fit.loglik_trace.push_back(-f);
    ++fit.quasi_newton_iterations;
    small_change = change < options.relative_tolerance;
    if (small_change) break;
  }

  for (int step = 0; step < options.newton_steps; ++step) {
    if (g.cwiseAbs().maxCoeff() < options.gradient_tolerance) break;
    Eigen::MatrixXd curvature = -objective.hessian(unflatten_parameters(theta, d, p));
    const double scale = std::max(1.0, curvature.diagonal().cwiseAbs().maxCoeff());
    double shift = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt(curvature);
    for (int tries = 0; llt.info() != Eigen::Success && tries < 30; ++tries) {
      shift = shift == 0.0 ? 1e-10 * scale : shift * 10.0;
      llt.compute(curvature + shift * Eigen::MatrixXd::Identity(dim, dim));
    }
    if (llt.info() != Eigen::Success) break;
    const Eigen::VectorXd dir = cap_step(-llt.solve(g), options.max_step);
    Eigen::VectorXd next;
    double f_next = 0.0;
    if (!(g.dot(dir) < 0.0) || !line_search(theta, f, g, dir, next, f_next)) break;
    Eigen::VectorXd g_next;
    f_next = value_and_gradient(next, g_next);
    const double change = std::abs(f - f_next) / std::max(1.0, std::abs(f));
    theta = std::move(next);
    f = f_next;
    g = std::move(g_next);
    fit.loglik_trace.push_back(-f);
    ++fit.newton_iterations;
    small_change = change < options.relative_tolerance;
  }

  fit.gradient_max_norm = g.cwiseAbs().maxCoeff();
  if (!(fit.gradient_max_norm < options.gradient_tolerance) && !small_change) {
    fail(ErrorKind::kConvergence,
         "dmr: no convergence after " + std::to_string(fit.quasi_newton_iterations) +
             " quasi-Newton and " + std::to_string(fit.newton_iterations) +
             " Newton iterations (gradient max-norm " + text::format_double(fit.gradient_max_norm) +
             "); loglik trace tail: " + trace_tail(fit.loglik_trace));
  }

  fit.beta = unflatten_parameters(theta, d, p);
  fit.loglik = -f;
  const double params = static_cast<double>(fit.parameter_count());
  fit.aic = -2.0 * fit.loglik + 2.0 * params;
  fit.bic = -2.0 * fit.loglik + params * std::log(static_cast<double>(fit.rows));
  fit.clamped_predictors = objective.clamped_predictors();

  const Eigen::VectorXd col_totals = counts.colwise().sum().transpose();
  for (int j = 0; j < d; ++j) {
    if (col_totals[j] == 0.0) fit.zero_count_bins.push_back(j);
  }

  // Standard errors from the inverse observed information, leaving out the
  // parameters of bins that were never observed.
  fit.se = Eigen::MatrixXd::Constant(d, p, kNaN);
  std::vector<Eigen::Index> keep;
  for (int j = 0; j < d; ++j) {
    if (col_totals[j] == 0.0) continue;
    for (int k = 0; k < p; ++k) keep.push_back(static_cast<Eigen::Index>(j) * p + k);
  }
  if (!keep.empty()) {
    const Eigen::MatrixXd information = -objective.hessian(fit.beta);
    const auto m = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd sub(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = information(keep[a], keep[b]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sub);
    if (llt.info() == Eigen::Success) {
      const Eigen::MatrixXd covariance = llt.solve(Eigen::MatrixXd::Identity(m, m));
      fit.se_available = covariance.diagonal().allFinite() && (covariance.diagonal().array() > 0.0).all();
      if (fit.se_available) {
        for (Eigen::Index a = 0; a < m; ++a) {
          fit.se(keep[a] / p, keep[a] % p) = std::sqrt(covariance(a, a));
        }
      }
    }
  }
  fit.z = fit.beta.cwiseQuotient(fit.se);
  fit.significant.resize(d, p);
  for (int j = 0; j < d; ++j) {
    for (int k = 0; k < p; ++k) {
      fit.significant(j, k) = std::isfinite(fit.z(j, k)) && std::abs(fit.z(j, k)) > options.z_cut;
    }
  }
  return fit;
}

DmrFit fit_dmr(const CubeDataset& dataset, const DesignSpec& spec, const DmrOptions& options) {
  const DesignMatrix design = build_design(spec, dataset.covariates);
  return fit_dmr(dataset.counts_matrix(), design, options);
}

std::vector<ModelComparisonRow> compare_models(const CubeDataset& dataset,
                                               std::span<const DesignSpec> specs,
                                               const DmrOptions& options) {
  if (specs.size() < 2) fail(ErrorKind::kInvalidArgument, "compare_models: need at least two designs");
  std::vector<ModelComparisonRow> rows;
  std::vector<std::size_t> fitted;
  for (const DesignSpec& spec : specs) {
    ModelComparisonRow row;
    row.design = spec.text();
    try {
      const DmrFit fit = fit_dmr(dataset, spec, options);
      row.parameters = fit.parameter_count();
      row.loglik = fit.loglik;
      row.aic = fit.aic;
      row.bic = fit.bic;
      fitted.push_back(rows.size());
    } catch (const Error& e) {
      row.loglik = row.aic = row.bic = kNaN;
      row.note = std::string(to_string(e.kind())) + ": " + e.what();
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(fitted.begin(), fitted.end(), [&](std::size_t a, std::size_t b) {
    if (rows[a].bic != rows[b].bic) return rows[a].bic < rows[b].bic;
    return rows[a].parameters < rows[b].parameters;
  });
  for (std::size_t r = 0; r < fitted.size(); ++r) rows[fitted[r]].rank = static_cast<int>(r + 1);
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if ((a.rank == 0) != (b.rank == 0)) return b.rank == 0;
    return a.rank < b.rank;
  });
  return rows;
}

std::vector<CoefficientCell> coefficient_cube_export(const DmrFit& fit, std::string_view column,
                                                     const BinLayout& layout) {
  const int k = fit.design.column_index(column);
  if (k < 0) fail(ErrorKind::kInvalidArgument, "unknown covariate '" + std::string(column) + "'");
  if (fit.beta.rows() != layout.size()) {
    fail(ErrorKind::kInvalidArgument, "coefficient export: layout does not match the fit");
  }
  std::vector<CoefficientCell> cells;
  cells.reserve(static_cast<std::size_t>(layout.size()));
  for (int j = 0; j < layout.size(); ++j) {
    cells.push_back({j, bin_label(j, layout), fit.beta(j, k), fit.se(j, k), fit.z(j, k),
                     static_cast<bool>(fit.significant(j, k))});
  }
  return cells;
}

std::string serialize_coefficients(const DmrFit& fit, const BinLayout& layout) {
  std::string out = "bin,covariate,beta,se,z,significant\n";
  for (int j = 0; j < layout.size(); ++j) {
    const std::string label = bin_label(j, layout);
    for (int k = 0; k < fit.design.p(); ++k) {
      out += label + "," + fit.design.column_names[static_cast<std::size_t>(k)] + "," +
             text::format_double(fit.beta(j, k)) + "," + text::format_double(fit.se(j, k)) + "," +
             text::format_double(fit.z(j, k)) + "," + (fit.significant(j, k) ? "true" : "false") +
             "\n";
    }
  }
  return out;
}

std::string serialize_comparison(std::span<const ModelComparisonRow> rows) {
  std::string out = "rank,design,parameters,loglik,aic,bic,note\n";
  for (const auto& r : rows) {
    std::string note = r.note;
    std::replace(note.begin(), note.end(), ',', ';');
    std::replace(note.begin(), note.end(), '\n', ' ');
    out += std::to_string(r.rank) + "," + r.design + "," + std::to_string(r.parameters) + "," +
           text::format_double(r.loglik) + "," + text::format_double(r.aic) + "," +
           text::format_double(r.bic) + "," + note + "\n";
  }
  return out;
}

}  // namespace qcube
