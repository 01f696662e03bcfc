// Prints one PASS/FAIL line per acceptance criterion and exits nonzero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qcube/cube.hpp"
#include "qcube/dmr.hpp"
#include "qcube/hellinger.hpp"
#include "qcube/pca.hpp"
#include "qcube/pipeline.hpp"
#include "qcube/rng.hpp"
#include "qcube/simulate.hpp"
#include "qcube/text.hpp"

using namespace qcube;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), pattern, args...);
  return buf;
}

// A pooled count vector shaped like a season of halves: 100 bins with
// unequal mass and about eleven million deciseconds in total.
std::vector<std::int64_t> season_pool(std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::gamma_distribution<double> g(2.0, 1.0);
  std::vector<double> w(100);
  double sum = 0.0;
  for (double& x : w) sum += (x = g(gen) + 0.05);
  std::vector<std::int64_t> pool(100);
  for (std::size_t j = 0; j < 100; ++j) pool[j] = std::llround(11'000'000.0 * w[j] / sum);
  return pool;
}

void draw_pair(const std::vector<std::int64_t>& pool, std::int64_t t1, std::int64_t t2, RandomStream& rng,
               HalfPair& pair) {
  pair.first.assign(pool.size(), 0);
  pair.second.assign(pool.size(), 0);
  sample_multivariate_hypergeometric(pool, t1, rng, pair.first);
  std::vector<std::int64_t> rest(pool);
  for (std::size_t j = 0; j < pool.size(); ++j) rest[j] -= pair.first[j];
  sample_multivariate_hypergeometric(rest, t2, rng, pair.second);
}

Verdict toy_cube() {
  QuantileBoundaries b;
  b.v_cuts = {0.0, 3.0};
  b.a_cuts = {0.0, 1.0};
  b.angle_cuts = {-45.0, 45.0, 135.0, -135.0};
  b.edge_rule = EdgeRule::kRightClosed;
  const double rows[5][3] = {{2.0, 0.5, 0}, {4.0, 1.2, 50}, {3.0, 0.8, 180}, {3.5, 1.5, -160}, {2.5, 0.7, -30}};
  std::vector<KinematicPoint> points;
  for (const auto& r : rows) {
    KinematicPoint p;
    p.v = r[0];
    p.a = r[1];
    p.angle = r[2];
    points.push_back(p);
  }
  const auto cube = build_cube(HalfKey{"toy", "toy", Half::kFirst}, points, b);
  const std::vector<std::int64_t> counts{2, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0};
  const std::vector<double> props{0.4, 0, 0.2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0.2, 0.2, 0};
  const bool ok = cube.counts == counts && cube.proportions() == props;
  return {ok, ok ? "count and proportion vectors identical" : "vectors differ"};
}

Verdict hellinger_metric() {
  const auto start = Clock::now();
  std::mt19937_64 gen(2024);
  bool symmetric = true, identity = true, triangle = true;
  double worst = -1.0;
  for (int i = 0; i < 10'000; ++i) {
    const auto p = oracle::random_simplex(100, gen), q = oracle::random_simplex(100, gen),
               r = oracle::random_simplex(100, gen);
    const double pq = hellinger_distance(p, q);
    symmetric = symmetric && pq == hellinger_distance(q, p);
    identity = identity && hellinger_distance(p, p) == 0.0;
    const double slack = pq - hellinger_distance(p, r) - hellinger_distance(r, q);
    worst = std::max(worst, slack);
    triangle = triangle && slack <= 1e-12;
  }
  std::vector<double> e1(100, 0.0), e2(100, 0.0);
  e1[0] = 1.0;
  e2[1] = 1.0;
  const bool disjoint = hellinger_distance(e1, e2) == 1.0;
  const double t = seconds_since(start);
  return {symmetric && identity && triangle && disjoint && t < 1.0,
          fmt("symmetric=%d identity=%d disjoint=%d triangle worst slack %.2e, %.3f s", symmetric, identity,
              disjoint, worst, t)};
}

Verdict calibration() {
  const auto start = Clock::now();
  const auto pool = season_pool(7);
  HellingerOptions opt;
  opt.reps = 2000;
  opt.seed = 11;
  const int trials = 2000, g_a = 23;
  const double alpha = opt.alpha_base / g_a;
  RandomStream rng(99);
  HalfPair pair;
  pair.match_id = "calibration";
  int rejected = 0;
  for (int trial = 0; trial < trials; ++trial) {
    pair.athlete_id = "trial" + std::to_string(trial);
    draw_pair(pool, 27'000, 27'000, rng, pair);
    rejected += test_half_pair(pair, pool, g_a, opt).reject ? 1 : 0;
  }
  const double rate = double(rejected) / trials;
  const double t = seconds_since(start);
  return {rate >= 0.5 * alpha && rate <= 2.0 * alpha && t < 120.0,
          fmt("%d/%d rejected, rate %.5f vs alpha %.5f (band [%.5f, %.5f]), %.1f s", rejected, trials, rate, alpha,
              0.5 * alpha, 2.0 * alpha, t)};
}

Verdict planted_power() {
  const auto start = Clock::now();
  const auto pool = season_pool(8);
  const BinLayout layout;
  HellingerOptions opt;
  opt.reps = 2000;
  opt.seed = 12;
  RandomStream rng(100);
  HalfPair pair;
  pair.match_id = "planted";
  int rejected = 0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    pair.athlete_id = "trial" + std::to_string(trial);
    draw_pair(pool, 27'000, 27'000, rng, pair);
    // Move 10% of the second half's mass from top-velocity to bottom-velocity bins.
    std::int64_t to_move = 2700, top_mass = 0;
    for (int j = 0; j < layout.size(); ++j) {
      if (devectorize(j, layout).v == layout.velocity) top_mass += pair.second[std::size_t(j)];
    }
    if (top_mass < to_move) return {false, "top-velocity mass too small to move"};
    const std::int64_t per_bin = layout.acceleration * layout.angle;
    for (int j = 0; j < layout.size() && to_move > 0; ++j) {
      const BinIndex b = devectorize(j, layout);
      if (b.v != layout.velocity) continue;
      const std::int64_t take = std::min(pair.second[std::size_t(j)], (2700 + per_bin - 1) / per_bin);
      const std::int64_t moved = std::min(take, to_move);
      pair.second[std::size_t(j)] -= moved;
      pair.second[std::size_t(vectorize({1, b.a, b.angle}, layout))] += moved;
      to_move -= moved;
    }
    for (int j = 0; j < layout.size() && to_move > 0; ++j) {
      const BinIndex b = devectorize(j, layout);
      if (b.v != layout.velocity) continue;
      const std::int64_t moved = std::min(pair.second[std::size_t(j)], to_move);
      pair.second[std::size_t(j)] -= moved;
      pair.second[std::size_t(vectorize({1, b.a, b.angle}, layout))] += moved;
      to_move -= moved;
    }
    rejected += test_half_pair(pair, pool, 23, opt).reject ? 1 : 0;
  }
  const double t = seconds_since(start);
  return {rejected >= 198, fmt("%d/%d planted pairs rejected at alpha 0.05/23, %.1f s", rejected, trials, t)};
}

Eigen::MatrixXd gaussian(std::mt19937_64& gen, int rows, int cols) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(gen);
  return m;
}

Verdict pca_oracle() {
  std::mt19937_64 gen(55);
  const Eigen::MatrixXd x = gaussian(gen, 50, 100);
  const auto r = fit_pca(x);
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const double recon = (r.scores * r.loadings.transpose() - centered).norm() / centered.norm();

  const Eigen::VectorXd u = gaussian(gen, 100, 1).col(0).normalized();
  Eigen::MatrixXd rank1(60, 100);
  std::normal_distribution<double> n;
  for (int i = 0; i < 60; ++i) rank1.row(i) = 2.0 + n(gen) * u.transpose().array();
  const double cosine = std::abs(fit_pca(rank1).loadings.col(0).dot(u));

  // Eight orthogonal sign patterns give a covariance with eigenvalues exactly 50, 25, 20, 5.
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(8, 10);
  const double spectrum[4] = {50, 25, 20, 5};
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 8; ++i)
      z(i, k) = ((__builtin_popcount(i & (k + 1)) % 2) ? -1.0 : 1.0) * std::sqrt(spectrum[k] * 7.0 / 8.0);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(gen, 10, 10));
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(10, 10);
  const int k = fit_pca(z * q.transpose()).retained;

  return {recon < 1e-8 && cosine > 0.9999 && k == 3,
          fmt("reconstruction %.2e, rank-1 |cos| %.12f, K=%d for spectrum 50/25/20/5", recon, cosine, k)};
}

Verdict dm_density() {
  const double grid[] = {0.5, 1.0, 2.0, 5.0, 10.0};
  double worst = 0.0;
  for (double a : grid)
    for (double b : grid)
      for (int n = 0; n <= 20; ++n)
        for (int k = 0; k <= n; ++k) {
          const std::vector<std::int64_t> y{k, n - k};
          const std::vector<double> eta{a, b};
          worst = std::max(worst, std::abs(std::exp(dm_log_pmf(y, eta)) - oracle::beta_binomial_pmf(k, n, a, b)));
        }
  const std::vector<std::int64_t> y{1, 1};
  const double toy = std::exp(dm_log_pmf(y, std::vector<double>{2.0, 3.0}));
  return {worst < 1e-10 && toy == 0.4, fmt("max abs difference %.2e, (2,3)/(1,1) mass %.17g", worst, toy)};
}

Verdict dmr_gradient() {
  std::mt19937_64 gen(77);
  std::normal_distribution<double> n(0.0, 0.5);
  const int rows = 40, d = 10, p = 3;
  Eigen::MatrixXd x(rows, p), y = Eigen::MatrixXd::Zero(rows, d);
  for (int i = 0; i < rows; ++i) {
    x.row(i) << 1.0, double(i % 2), n(gen);
    for (int c = 0; c < 200; ++c) y(i, int(gen() % d)) += 1.0;
  }
  const DmrObjective obj(y, x);
  double worst = 0.0;
  for (int point = 0; point < 20; ++point) {
    Eigen::MatrixXd beta(d, p);
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < p; ++k) beta(j, k) = n(gen);
    Eigen::MatrixXd grad, fd(d, p);
    obj.loglik_and_gradient(beta, grad);
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < p; ++k) {
        auto along = [&](double t) {
          Eigen::MatrixXd b = beta;
          b(j, k) = t;
          return obj.loglik(b);
        };
        fd(j, k) = oracle::central_difference(along, beta(j, k), 1e-5);
      }
    worst = std::max(worst, (grad - fd).norm() / fd.norm());
  }
  return {worst < 1e-5, fmt("worst relative error %.2e over 20 points", worst)};
}

Verdict dmr_recovery() {
  const auto start = Clock::now();
  const BinLayout layout{2, 1, 5};
  Eigen::VectorXd eta(10);
  eta << 4.0, 2.0, 1.0, 3.0, 0.5, 2.5, 1.5, 6.0, 0.8, 1.2;

  // Same covariate and data seeds as the intercept-only unit test.
  const auto recs = synthetic_covariates(500, 6000, 5);
  const auto one = DesignSpec::parse("1");
  const auto d1 = build_design(one, recs);
  Eigen::MatrixXd truth = eta.array().log().matrix();
  const auto fit = fit_dmr(gen_cube_dataset(truth, d1, recs, layout, 9), one);
  double worst = 0.0;
  for (int j = 0; j < 10; ++j) worst = std::max(worst, std::abs(std::exp(fit.beta(j, 0)) / eta(j) - 1.0));

  // Half-2 rows lose mass in the five top-velocity bins.
  const auto half = DesignSpec::parse("half");
  const double effect = -0.4;
  int recovered = 0;
  for (int sim = 0; sim < 50; ++sim) {
    const auto r = synthetic_covariates(500, 6000, 100 + sim);
    const auto dh = build_design(half, r);
    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(10, 2);
    beta.col(0) = eta.array().log().matrix();
    beta.col(1).tail(5).setConstant(effect);
    const auto f = fit_dmr(gen_cube_dataset(beta, dh, r, layout, 500 + sim), half);
    bool ok = true;
    for (int j = 5; j < 10; ++j) ok = ok && f.beta(j, 1) < 0.0 && std::abs(f.z(j, 1)) > 3.0;
    recovered += ok ? 1 : 0;
  }
  const double t = seconds_since(start);
  return {worst < 0.1 && recovered >= 45 && t < 600.0,
          fmt("intercept worst relative error %.4f; planted bins recovered in %d/50 simulations; %.1f s", worst,
              recovered, t)};
}

Verdict determinism() {
  const auto input = oracle::scratch_dir("acceptance_season");
  write_season(input, simulate_season(SeasonSpec{}));
  std::string manifests[2];
  const unsigned threads[2] = {1, 4};
  for (int k = 0; k < 2; ++k) {
    RunConfig c;
    c.input_dir = input;
    c.output_dir = oracle::scratch_dir("acceptance_run" + std::to_string(k));
    c.threads = threads[k];
    run_pipeline(c);
    manifests[k] = text::read_file(c.output_dir / "manifest.json");
  }
  const bool same = manifests[0] == manifests[1] && !manifests[0].empty();
  return {same, same ? "manifests byte-identical at --threads 1 and 4" : "manifests differ"};
}

Verdict structural() {
  std::mt19937_64 gen(303);
  std::uniform_real_distribution<double> u(0.0, 1.0), ang(-180.0, 180.0);
  KinematicSeries s;
  for (int k = 0; k < 200'000; ++k) {
    KinematicPoint p;
    p.v = u(gen);
    p.a = u(gen);
    p.angle = ang(gen);
    s.points.push_back(p);
  }
  const std::vector<KinematicSeries> pool{s};
  const auto b = compute_boundaries(pool);
  double worst = 0.0;
  for (int k = 0; k < 5; ++k) {
    worst = std::max(worst, std::abs(b.v_cuts[std::size_t(k)] - 0.2 * k));
    worst = std::max(worst, std::abs(b.a_cuts[std::size_t(k)] - 0.2 * k));
  }
  return {worst < 0.01 && b.angle_cuts.front() == -30.0,
          fmt("worst cut error %.4f, first angle cut %.4f", worst, b.angle_cuts.front())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"toy quantile cube", toy_cube},
      {"Hellinger metric suite", hellinger_metric},
      {"permutation test calibration", calibration},
      {"planted shift power", planted_power},
      {"PCA oracle", pca_oracle},
      {"DM density oracle", dm_density},
      {"DMR gradient check", dmr_gradient},
      {"DMR recovery", dmr_recovery},
      {"end-to-end determinism", determinism},
      {"structural fidelity", structural},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
