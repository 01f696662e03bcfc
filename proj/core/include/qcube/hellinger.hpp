#pragma once

// Hellinger distance between match halves and its resampling null.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qcube/dataset.hpp"

namespace qcube {

/// Both halves of one athlete-match, as decisecond counts.
struct HalfPair {
  std::string athlete_id;
  std::string match_id;
  std::vector<std::int64_t> first;
  std::vector<std::int64_t> second;

  std::int64_t t1() const;
  std::int64_t t2() const;
};

struct HellingerOptions {
  int reps = 10'000;
  std::uint64_t seed = 1;
  double alpha_base = 0.05;
  unsigned threads = 0;  // 0: all cores
};

struct HellingerTestResult {
  std::string athlete_id;
  std::string match_id;
  double lambda = 0.0;
  std::vector<double> null_samples;
  int g_a = 1;
  double alpha = 0.05;
  double critical = 0.0;
  bool reject = false;
  double excess = 0.0;  // lambda - critical
};

/// H(P, Q) = sqrt(1/2 * sum_j (sqrt p_j - sqrt q_j)^2). Both arguments must be
/// non-negative and sum to 1 within 1e-9.
double hellinger_distance(std::span<const double> p, std::span<const double> q);

/// Hellinger distance between the proportion vectors of two count vectors.
double hellinger_distance_counts(std::span<const std::int64_t> a, std::span<const std::int64_t> b);

/// Null distances: each replicate draws t1 then t2 labels without replacement
/// from the finite pooled population. Replicate r uses its own counter-based
/// stream keyed by (seed, stream, r), so output is independent of threads.
std::vector<double> simulate_null(std::span<const std::int64_t> pooled_counts, std::int64_t t1,
                                  std::int64_t t2, int reps, std::uint64_t seed,
                                  unsigned threads = 0, std::uint64_t stream = 0);

/// Bonferroni level alpha_base / g_a, critical value = type-7 (1 - alpha) quantile
/// of the null, reject when lambda > critical.
HellingerTestResult test_half_pair(const HalfPair& pair,
                                   std::span<const std::int64_t> pooled_counts, int g_a,
                                   const HellingerOptions& options = {});

/// Pairs every athlete-match that has both halves, in dataset order.
std::vector<HalfPair> make_half_pairs(std::span<const QuantileCube> cubes);

/// g_a for every athlete: number of complete pairs.
std::map<std::string, int> matches_per_athlete(std::span<const HalfPair> pairs);

/// Tests every pair against the pool of all cubes.
std::vector<HellingerTestResult> test_all_halves(std::span<const QuantileCube> cubes,
                                                 const HellingerOptions& options = {});

/// CSV `athlete_id,match_id,lambda,critical,alpha,reject,excess`.
std::string serialize_hellinger(std::span<const HellingerTestResult> results);

}  // namespace qcube
