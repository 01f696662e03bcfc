#include "qcube/hellinger.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qcube/error.hpp"
#include "qcube/parallel.hpp"
#include "qcube/rng.hpp"
#include "qcube/stats.hpp"
#include "qcube/text.hpp"

namespace qcube {
namespace {

constexpr double kSimplexTolerance = 1e-9;
constexpr std::size_t kReplicateBlock = 256;

void check_simplex(std::span<const double> p, const char* name) {
  double sum = 0.0;
  for (const double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      fail(ErrorKind::kDomain, std::string("hellinger: ") + name + " has a negative or non-finite entry");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    fail(ErrorKind::kDomain, std::string("hellinger: ") + name + " sums to " +
                                 text::format_double(sum) + ", not 1");
  }
}

std::int64_t total_of(std::span<const std::int64_t> v) {
  return std::accumulate(v.begin(), v.end(), std::int64_t{0});
}

std::uint64_t pair_stream(const std::string& athlete, const std::string& match) {
  return stable_hash(athlete) ^ mix64(stable_hash(match));
}

}  // namespace

std::int64_t HalfPair::t1() const { return total_of(first); }
std::int64_t HalfPair::t2() const { return total_of(second); }

double hellinger_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) fail(ErrorKind::kDomain, "hellinger: dimension mismatch");
  check_simplex(p, "P");
  check_simplex(q, "Q");
  double ss = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double diff = std::sqrt(p[j]) - std::sqrt(q[j]);
    ss += diff * diff;
  }
  return std::min(1.0, std::sqrt(0.5 * ss));
}

double hellinger_distance_counts(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
  if (a.size() != b.size()) fail(ErrorKind::kDomain, "hellinger: dimension mismatch");
  const std::int64_t ta = total_of(a);
  const std::int64_t tb = total_of(b);
  if (ta <= 0 || tb <= 0) fail(ErrorKind::kDomain, "hellinger: empty count vector");
  const double inv_a = 1.0 / static_cast<double>(ta);
  const double inv_b = 1.0 / static_cast<double>(tb);
  double ss = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = std::sqrt(static_cast<double>(a[j]) * inv_a) -
                        std::sqrt(static_cast<double>(b[j]) * inv_b);
    ss += diff * diff;
  }
  return std::min(1.0, std::sqrt(0.5 * ss));
}

std::vector<double> simulate_null(std::span<const std::int64_t> pooled_counts, std::int64_t t1,
                                  std::int64_t t2, int reps, std::uint64_t seed, unsigned threads,
                                  std::uint64_t stream) {
  if (reps < 1) fail(ErrorKind::kInvalidArgument, "simulate_null: reps must be >= 1");
  if (t1 <= 0 || t2 <= 0) fail(ErrorKind::kDomain, "simulate_null: half totals must be positive");
  for (const std::int64_t c : pooled_counts) {
    if (c < 0) fail(ErrorKind::kDomain, "simulate_null: negative pooled count");
  }
  const std::int64_t population = total_of(pooled_counts);
  if (t1 + t2 > population) {
    fail(ErrorKind::kDomain, "simulate_null: t1 + t2 = " + std::to_string(t1 + t2) +
                                 " exceeds pooled population " + std::to_string(population));
  }

  std::vector<double> out(static_cast<std::size_t>(reps));
  const std::size_t d = pooled_counts.size();
  const std::size_t blocks = (out.size() + kReplicateBlock - 1) / kReplicateBlock;
  parallel_for(blocks, threads, [&](std::size_t block) {
    std::vector<std::int64_t> first(d), rest(d), second(d);
    const std::size_t end = std::min(out.size(), (block + 1) * kReplicateBlock);
    for (std::size_t r = block * kReplicateBlock; r < end; ++r) {
      RandomStream rng(seed, stream, r);
      sample_multivariate_hypergeometric(pooled_counts, t1, rng, first);
      for (std::size_t j = 0; j < d; ++j) rest[j] = pooled_counts[j] - first[j];
      sample_multivariate_hypergeometric(rest, t2, rng, second);
      out[r] = hellinger_distance_counts(first, second);
    }
  });
  return out;
}

HellingerTestResult test_half_pair(const HalfPair& pair,
                                   std::span<const std::int64_t> pooled_counts, int g_a,
                                   const HellingerOptions& options) {
  if (g_a < 1) fail(ErrorKind::kInvalidArgument, "test_half_pair: g_a must be >= 1");
  if (pair.first.size() != pooled_counts.size() || pair.second.size() != pooled_counts.size()) {
    fail(ErrorKind::kDomain, "test_half_pair: dimension mismatch");
  }
  HellingerTestResult r;
  r.athlete_id = pair.athlete_id;
  r.match_id = pair.match_id;
  r.g_a = g_a;
  r.lambda = hellinger_distance_counts(pair.first, pair.second);
  r.null_samples = simulate_null(pooled_counts, pair.t1(), pair.t2(), options.reps, options.seed,
                                 options.threads, pair_stream(pair.athlete_id, pair.match_id));
  r.alpha = options.alpha_base / static_cast<double>(g_a);
  std::vector<double> sorted = r.null_samples;
  std::sort(sorted.begin(), sorted.end());
  r.critical = stats::quantile_type7_sorted(sorted, 1.0 - r.alpha);
  r.reject = r.lambda > r.critical;
  r.excess = r.lambda - r.critical;
  return r;
}

std::vector<HalfPair> make_half_pairs(std::span<const QuantileCube> cubes) {
  std::map<std::pair<std::string, std::string>, std::pair<const QuantileCube*, const QuantileCube*>>
      halves;
  for (const QuantileCube& c : cubes) {
    auto& slot = halves[{c.key.match_id, c.key.athlete_id}];
    (c.key.half == Half::kFirst ? slot.first : slot.second) = &c;
  }
  std::vector<HalfPair> pairs;
  for (const auto& [key, slot] : halves) {
    if (slot.first == nullptr || slot.second == nullptr) continue;
    pairs.push_back({key.second, key.first, slot.first->counts, slot.second->counts});
  }
  return pairs;
}

std::map<std::string, int> matches_per_athlete(std::span<const HalfPair> pairs) {
  std::map<std::string, int> g;
  for (const HalfPair& p : pairs) ++g[p.athlete_id];
  return g;
}

std::vector<HellingerTestResult> test_all_halves(std::span<const QuantileCube> cubes,
                                                 const HellingerOptions& options) {
  if (cubes.empty()) return {};
  std::vector<std::int64_t> pooled(cubes.front().counts.size(), 0);
  for (const QuantileCube& c : cubes) {
    for (std::size_t j = 0; j < pooled.size(); ++j) pooled[j] += c.counts[j];
  }
  const auto pairs = make_half_pairs(cubes);
  const auto g = matches_per_athlete(pairs);
  std::vector<HellingerTestResult> results;
  results.reserve(pairs.size());
  for (const HalfPair& p : pairs) {
    results.push_back(test_half_pair(p, pooled, g.at(p.athlete_id), options));
  }
  return results;
}

std::string serialize_hellinger(std::span<const HellingerTestResult> results) {
  std::string out = "athlete_id,match_id,lambda,critical,alpha,reject,excess\n";
  for (const auto& r : results) {
    out += r.athlete_id + "," + r.match_id + "," + text::format_double(r.lambda) + "," +
           text::format_double(r.critical) + "," + text::format_double(r.alpha) + "," +
           (r.reject ? "true" : "false") + "," + text::format_double(r.excess) + "\n";
  }
  return out;
}

}  // namespace qcube
