#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "qcube/dmr.hpp"
#include "qcube/error.hpp"
#include "qcube/simulate.hpp"

using namespace qcube;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kInvalidArgument;
}

// Truth with intercepts log(eta0) and a half-2 column that moves mass out of
// the last `shifted` bins.
Eigen::MatrixXd planted_truth(const DesignMatrix& design, const Eigen::VectorXd& eta0, int shifted,
                              double effect) {
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(eta0.size(), design.p());
  beta.col(0) = eta0.array().log().matrix();
  const int h = design.column_index("half2");
  if (h >= 0) beta.col(h).tail(shifted).setConstant(effect);
  return beta;
}

Eigen::MatrixXd random_counts(std::mt19937_64& gen, int n, int d, int total) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < total; ++k) y(i, int(gen() % d)) += 1.0;
  return y;
}

}  // namespace

TEST_SUITE("dmr") {
  TEST_CASE("two-bin mass equals the beta-binomial closed form") {
    const double grid[] = {0.5, 1.0, 2.0, 5.0, 10.0};
    for (double a : grid) {
      for (double b : grid) {
        for (int n = 0; n <= 20; ++n) {
          for (int k = 0; k <= n; ++k) {
            const std::vector<std::int64_t> y{k, n - k};
            const std::vector<double> eta{a, b};
            const double got = std::exp(dm_log_pmf(y, eta));
            CHECK(std::abs(got - oracle::beta_binomial_pmf(k, n, a, b)) < 1e-10);
          }
        }
      }
    }
    const std::vector<std::int64_t> y11{1, 1}, y10{1, 0}, y01{0, 1};
    CHECK(std::exp(dm_log_pmf(y11, std::vector<double>{2, 3})) == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(std::exp(dm_log_pmf(y10, std::vector<double>{1, 1})) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(std::exp(dm_log_pmf(y01, std::vector<double>{1, 1})) == doctest::Approx(0.5).epsilon(1e-14));
  }

  TEST_CASE("empty draw and multinomial limit") {
    const std::vector<std::int64_t> zero{0, 0, 0};
    CHECK(dm_log_pmf(zero, std::vector<double>{1, 2, 3}) == 0.0);
    const std::vector<double> p{0.2, 0.5, 0.3};
    const std::vector<int> yi{3, 4, 2};
    const std::vector<std::int64_t> y{3, 4, 2};
    std::vector<double> eta;
    for (double v : p) eta.push_back(1e9 * v);
    CHECK(std::exp(dm_log_pmf(y, eta)) == doctest::Approx(oracle::multinomial_pmf(yi, p)).epsilon(1e-6));
    CHECK(kind_of([&] { dm_log_pmf(y, std::vector<double>{1.0, 0.0, 1.0}); }) == ErrorKind::kDomain);
  }

  TEST_CASE("link examples") {
    Eigen::MatrixXd beta(3, 2);
    beta << 0.1, 0.7, -0.4, std::log(2.0), 1.2, 0.0;
    Eigen::VectorXd reference(2);
    reference << 1.0, 0.0;
    const Eigen::VectorXd e0 = link_eta(beta, reference);
    for (int j = 0; j < 3; ++j) CHECK(e0(j) == doctest::Approx(std::exp(beta(j, 0))));
    CHECK((link_eta(Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Ones(2)).array() == 1.0).all());
    Eigen::VectorXd x(2);
    x << 1.0, 1.0;
    const double one = link_eta(beta, x)(1);
    x(1) = 2.0;
    CHECK(link_eta(beta, x)(1) == doctest::Approx(2.0 * one).epsilon(1e-14));
    std::int64_t clamped = 0;
    x(1) = 1e6;
    const Eigen::VectorXd big = link_eta(beta, x, &clamped);
    CHECK(clamped >= 1);
    CHECK(std::isfinite(big(0)));
  }

  TEST_CASE("gradient matches central differences at random points") {
    std::mt19937_64 gen(61);
    std::normal_distribution<double> n(0.0, 0.5);
    const int rows = 30, d = 5, p = 3;
    Eigen::MatrixXd x(rows, p);
    for (int i = 0; i < rows; ++i) x.row(i) << 1.0, double(i % 2), n(gen);
    const DmrObjective obj(random_counts(gen, rows, d, 40), x);
    for (int point = 0; point < 20; ++point) {
      Eigen::MatrixXd beta(d, p);
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < p; ++k) beta(j, k) = n(gen);
      Eigen::MatrixXd grad;
      const double f = obj.loglik_and_gradient(beta, grad);
      CHECK(f == doctest::Approx(obj.loglik(beta)).epsilon(1e-13));
      Eigen::MatrixXd fd(d, p);
      for (int j = 0; j < d; ++j) {
        for (int k = 0; k < p; ++k) {
          auto along = [&](double t) {
            Eigen::MatrixXd b = beta;
            b(j, k) = t;
            return obj.loglik(b);
          };
          fd(j, k) = oracle::central_difference(along, beta(j, k), 1e-5);
        }
      }
      CHECK((grad - fd).norm() / std::max(1.0, fd.norm()) < 1e-5);
    }
  }

  TEST_CASE("Hessian matches differences of the gradient") {
    std::mt19937_64 gen(62);
    std::normal_distribution<double> n(0.0, 0.4);
    const int rows = 20, d = 4, p = 2;
    Eigen::MatrixXd x(rows, p);
    for (int i = 0; i < rows; ++i) x.row(i) << 1.0, n(gen);
    const DmrObjective obj(random_counts(gen, rows, d, 30), x);
    Eigen::MatrixXd beta(d, p);
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < p; ++k) beta(j, k) = n(gen);
    const Eigen::MatrixXd h = obj.hessian(beta);
    REQUIRE(h.rows() == d * p);
    const double step = 1e-5;
    Eigen::MatrixXd fd(d * p, d * p);
    for (int j = 0; j < d; ++j) {
      for (int k = 0; k < p; ++k) {
        Eigen::MatrixXd up = beta, down = beta, gu, gd;
        up(j, k) += step;
        down(j, k) -= step;
        obj.loglik_and_gradient(up, gu);
        obj.loglik_and_gradient(down, gd);
        fd.col(j * p + k) = flatten_parameters((gu - gd) / (2 * step));
      }
    }
    CHECK((h - fd).norm() / fd.norm() < 1e-5);
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-9);
    const Eigen::MatrixXd round = unflatten_parameters(flatten_parameters(beta), d, p);
    CHECK(round == beta);
  }

  TEST_CASE("design encoding") {
    auto recs = synthetic_covariates(12, 100, 3);
    for (std::size_t i = 0; i < recs.size(); ++i) recs[i].playing_time = 100 + 37 * std::int64_t(i);
    const auto spec = DesignSpec::parse("half+position+logtime");
    const auto dm = build_design(spec, recs);
    CHECK(dm.column_names.front() == "intercept");
    CHECK(dm.column_index("half2") == 1);
    CHECK(dm.column_index("nope") == -1);
    CHECK(dm.x.rows() == 12);
    CHECK((dm.encode(recs[5]) - dm.x.row(5).transpose()).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(DesignSpec::parse("1").terms.empty());
    CHECK(DesignSpec::parse(spec.text()).terms == spec.terms);
    CHECK(kind_of([] { DesignSpec::parse("half+bogus"); }) == ErrorKind::kInvalidArgument);
  }

  TEST_CASE("duplicated design column is a rank error") {
    std::mt19937_64 gen(63);
    Eigen::MatrixXd x(20, 3);
    for (int i = 0; i < 20; ++i) x.row(i) << 1.0, double(i % 3), double(i % 3);
    DesignMatrix dm = build_design(DesignSpec::parse("1"), synthetic_covariates(20, 50, 1));
    dm.x = x;
    dm.column_names = {"intercept", "u", "u_copy"};
    CHECK(kind_of([&] { fit_dmr(random_counts(gen, 20, 4, 50), dm); }) == ErrorKind::kRank);

    // With no second halves observed, no half2 column is created.
    auto recs = synthetic_covariates(10, 50, 1);
    for (auto& r : recs) r.half = Half::kFirst;
    const auto ds_spec = DesignSpec::parse("half+position");
    const auto design = build_design(ds_spec, recs);
    CHECK(design.column_index("half2") == -1);
  }

  TEST_CASE("intercept-only fit recovers the generating concentrations") {
    const BinLayout layout{2, 1, 5};
    const auto recs = synthetic_covariates(500, 6000, 5);
    const auto design = build_design(DesignSpec::parse("1"), recs);
    Eigen::VectorXd eta(10);
    eta << 4.0, 2.0, 1.0, 3.0, 0.5, 2.5, 1.5, 6.0, 0.8, 1.2;
    const auto ds = gen_cube_dataset(planted_truth(design, eta, 0, 0.0), design, recs, layout, 9);
    const auto fit = fit_dmr(ds, DesignSpec::parse("1"));
    for (int j = 0; j < 10; ++j) {
      INFO("bin " << j << " fitted " << std::exp(fit.beta(j, 0)) << " truth " << eta(j));
      CHECK(std::abs(std::exp(fit.beta(j, 0)) / eta(j) - 1.0) < 0.1);
    }
    CHECK(fit.se_available);
    CHECK(fit.aic == doctest::Approx(-2 * fit.loglik + 2 * 10));
    CHECK(fit.bic == doctest::Approx(-2 * fit.loglik + 10 * std::log(500.0)));
    for (std::size_t k = 1; k < fit.loglik_trace.size(); ++k) {
      CHECK(fit.loglik_trace[k] >= fit.loglik_trace[k - 1] - 1e-9);
    }
    const Eigen::VectorXd pi = fit.fitted_pi(Eigen::VectorXd::Ones(1));
    CHECK(pi.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(fit.fitted_eta(recs[0])(3) == doctest::Approx(std::exp(fit.beta(3, 0))));
  }

  TEST_CASE("fitted proportions ignore a common scale of eta") {
    Eigen::MatrixXd beta(3, 2);
    beta << 0.1, 0.3, -0.2, 0.5, 0.4, -0.1;
    Eigen::MatrixXd shifted = beta;
    shifted.col(0).array() += std::log(7.0);
    DmrFit a, b;
    a.beta = beta;
    b.beta = shifted;
    Eigen::VectorXd x(2);
    x << 1.0, 0.6;
    CHECK((a.fitted_pi(x) - b.fitted_pi(x)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(b.fitted_eta(x).sum() == doctest::Approx(7.0 * a.fitted_eta(x).sum()));
  }

  TEST_CASE("planted half-2 effect, permutation invariance, nesting and export") {
    const BinLayout layout{5, 5, 4};
    const auto recs = synthetic_covariates(200, 3000, 11);
    const auto spec = DesignSpec::parse("half");
    const auto design = build_design(spec, recs);
    const Eigen::VectorXd eta0 = Eigen::VectorXd::Constant(100, 0.4);
    const auto ds = gen_cube_dataset(planted_truth(design, eta0, 20, -0.8), design, recs, layout, 12);
    const auto fit = fit_dmr(ds, spec);
    const int h = fit.design.column_index("half2");
    int negative_significant = 0;
    for (int j = 80; j < 100; ++j) {
      negative_significant += (fit.beta(j, h) < 0 && fit.significant(j, h)) ? 1 : 0;
    }
    CHECK(negative_significant >= 18);
    int spurious = 0;
    for (int j = 0; j < 80; ++j) spurious += fit.significant(j, h) ? 1 : 0;
    CHECK(spurious <= 4);

    const auto cells = coefficient_cube_export(fit, "half2", layout);
    REQUIRE(cells.size() == 100);
    for (const auto& c : cells) {
      CHECK(c.significant == (std::abs(c.z) > 3.0));
      CHECK(c.z == doctest::Approx(c.beta / c.se));
    }
    CHECK(cells[99].label == "Q5_vel_Q5_acc_Q4_angle");
    CHECK(kind_of([&] { coefficient_cube_export(fit, "position", layout); }) == ErrorKind::kInvalidArgument);
    const auto csv = serialize_coefficients(fit, layout);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 201);

    // Reordering rows changes nothing.
    std::mt19937_64 gen(13);
    std::vector<int> order(200);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), gen);
    const Eigen::MatrixXd y = ds.counts_matrix();
    Eigen::MatrixXd y_perm(200, 100);
    DesignMatrix d_perm = fit.design;
    for (int i = 0; i < 200; ++i) {
      y_perm.row(i) = y.row(order[std::size_t(i)]);
      d_perm.x.row(i) = fit.design.x.row(order[std::size_t(i)]);
    }
    const auto refit = fit_dmr(y_perm, d_perm);
    CHECK((refit.beta - fit.beta).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(refit.loglik == doctest::Approx(fit.loglik).epsilon(1e-10));

    // A larger nested model fits at least as well.
    const auto bigger = fit_dmr(ds, DesignSpec::parse("half+position"));
    CHECK(bigger.loglik >= fit.loglik - 1e-6);
  }

  TEST_CASE("all-insignificant fit has an empty mask") {
    const BinLayout layout{1, 1, 4};
    const auto recs = synthetic_covariates(60, 200, 21);
    const auto spec = DesignSpec::parse("half");
    const auto design = build_design(spec, recs);
    const auto ds = gen_cube_dataset(planted_truth(design, Eigen::VectorXd::Constant(4, 2.0), 0, 0.0),
                                     design, recs, layout, 22);
    DmrOptions opt;
    opt.z_cut = 50.0;
    const auto fit = fit_dmr(ds, spec, opt);
    CHECK_FALSE(fit.significant.col(1).any());
  }

  TEST_CASE("zero-count bins are flagged") {
    const BinLayout layout{1, 1, 5};
    const auto recs = synthetic_covariates(80, 300, 2);
    const auto design = build_design(DesignSpec::parse("1"), recs);
    Eigen::VectorXd eta(5);
    eta << 2.0, 1.0, 1.5, 3.0, 0.7;
    const auto ds = gen_cube_dataset(planted_truth(design, eta, 0, 0.0), design, recs, layout, 5);
    Eigen::MatrixXd y = ds.counts_matrix();
    y.col(0) += y.col(2);
    y.col(2).setZero();
    const auto fit = fit_dmr(y, design);
    REQUIRE(fit.zero_count_bins.size() == 1);
    CHECK(fit.zero_count_bins[0] == 2);
    CHECK(std::isnan(fit.se(2, 0)));
    CHECK(fit.se_available);
    CHECK(std::isfinite(fit.se(0, 0)));
    CHECK_FALSE(fit.significant(2, 0));
  }

  TEST_CASE("model comparison") {
    const BinLayout layout{1, 1, 4};
    const auto recs = synthetic_covariates(80, 400, 31);
    const auto small = DesignSpec::parse("1");
    const auto design = build_design(small, recs);
    Eigen::VectorXd eta(4);
    eta << 2.0, 1.0, 3.0, 1.5;
    const auto ds = gen_cube_dataset(planted_truth(design, eta, 0, 0.0), design, recs, layout, 32);
    const std::vector<DesignSpec> twice{DesignSpec::parse("half"), DesignSpec::parse("half")};
    const auto rows = compare_models(ds, twice);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].bic == rows[1].bic);
    CHECK(rows[0].loglik == rows[1].loglik);
    CHECK(kind_of([&] { compare_models(ds, std::span<const DesignSpec>(twice.data(), 1)); }) ==
          ErrorKind::kInvalidArgument);
    const auto text = serialize_comparison(rows);
    CHECK(text.rfind("rank,design,parameters,loglik,aic,bic,note\n", 0) == 0);
  }

  TEST_CASE("BIC prefers the generating model in nested comparisons") {
    const BinLayout layout{1, 1, 4};
    const std::vector<DesignSpec> specs{DesignSpec::parse("1"), DesignSpec::parse("half")};
    Eigen::VectorXd eta(4);
    eta << 3.0, 1.0, 2.0, 4.0;
    int prefers_small = 0;
    for (int sim = 0; sim < 100; ++sim) {
      const auto recs = synthetic_covariates(100, 500, 1000 + sim);
      const auto design = build_design(specs[0], recs);
      const auto ds = gen_cube_dataset(planted_truth(design, eta, 0, 0.0), design, recs, layout, 2000 + sim);
      const auto rows = compare_models(ds, specs);
      prefers_small += rows.front().design == specs[0].text() ? 1 : 0;
    }
    INFO("smaller model chosen in " << prefers_small << " of 100");
    CHECK(prefers_small >= 90);
  }
}
