#include "qcube/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "qcube/error.hpp"

namespace qcube {
namespace {

constexpr std::int64_t kLogFactorialTableSize = 126;

const std::array<double, kLogFactorialTableSize>& log_factorial_table() {
  static const auto table = [] {
    std::array<double, kLogFactorialTableSize> t{};
    for (std::int64_t k = 0; k < kLogFactorialTableSize; ++k) {
      t[static_cast<std::size_t>(k)] = std::lgamma(static_cast<double>(k) + 1.0);
    }
    return t;
  }();
  return table;
}

// Draws one item at a time; used when the smaller side of the draw is tiny.
std::int64_t hypergeometric_sequential(std::int64_t good, std::int64_t bad,
                                       std::int64_t sample, RandomStream& rng) {
  const std::int64_t popsize = good + bad;
  const bool complement = sample > popsize / 2;
  const std::int64_t draws = complement ? popsize - sample : sample;
  std::int64_t good_left = good;
  std::int64_t left = popsize;
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < draws; ++i) {
    if (rng.uniform() * static_cast<double>(left) < static_cast<double>(good_left)) {
      ++hits;
      --good_left;
    }
    --left;
  }
  return complement ? good - hits : hits;
}

// Ratio-of-uniforms with a table-mountain hat (Stadlober's HRUA). Expected
// cost is O(1) in the population and sample sizes.
std::int64_t hypergeometric_ratio_of_uniforms(std::int64_t good, std::int64_t bad,
                                              std::int64_t sample, RandomStream& rng) {
  constexpr double kD1 = 1.7155277699214135;  // 2 * sqrt(2 / e)
  constexpr double kD2 = 0.8989161620588988;  // 3 - 2 * sqrt(3 / e)

  const std::int64_t popsize = good + bad;
  const std::int64_t n = std::min(sample, popsize - sample);
  const std::int64_t lo = std::min(good, bad);
  const std::int64_t hi = std::max(good, bad);

  const double p = static_cast<double>(lo) / static_cast<double>(popsize);
  const double q = static_cast<double>(hi) / static_cast<double>(popsize);
  const double a = static_cast<double>(n) * p + 0.5;
  const double var = static_cast<double>(popsize - n) * static_cast<double>(n) * p * q /
                     static_cast<double>(popsize - 1);
  const double c = std::sqrt(var + 0.5);
  const double h = kD1 * c + kD2;
  const auto mode = static_cast<std::int64_t>(
      std::floor(static_cast<double>(n + 1) * static_cast<double>(lo + 1) /
                 static_cast<double>(popsize + 2)));
  const double g = log_factorial(mode) + log_factorial(lo - mode) + log_factorial(n - mode) +
                   log_factorial(hi - n + mode);
  const double bound =
      std::min(static_cast<double>(std::min(n, lo) + 1), std::floor(a + 16.0 * c));

  std::int64_t k = 0;
  while (true) {
    const double u = rng.uniform_open();
    const double v = rng.uniform_open();
    const double x = a + h * (v - 0.5) / u;
    if (x < 0.0 || x >= bound) continue;
    k = static_cast<std::int64_t>(std::floor(x));
    const double t = g - (log_factorial(k) + log_factorial(lo - k) + log_factorial(n - k) +
                          log_factorial(hi - n + k));
    if (u * (4.0 - u) - 3.0 <= t) break;
    if (u * (u - t) >= 1.0) continue;
    if (2.0 * std::log(u) <= t) break;
  }
  if (good > bad) k = n - k;
  if (n < sample) k = good - k;
  return k;
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t stable_hash(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t substream) noexcept
    : key_(mix64(mix64(mix64(seed ^ 0x5851F42D4C957F2DULL) + stream) + substream)) {}

double log_factorial(std::int64_t k) noexcept {
  if (k < kLogFactorialTableSize) return log_factorial_table()[static_cast<std::size_t>(k)];
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  const double x = static_cast<double>(k);
  return (x + 0.5) * std::log(x) - x + kHalfLog2Pi +
         (1.0 / x) * (1.0 / 12.0 - 1.0 / (360.0 * x * x));
}

std::int64_t sample_hypergeometric(std::int64_t good, std::int64_t bad, std::int64_t sample,
                                   RandomStream& rng) {
  if (good < 0 || bad < 0 || sample < 0 || sample > good + bad) {
    fail(ErrorKind::kDomain, "hypergeometric: invalid (good, bad, sample)");
  }
  if (sample == 0 || good == 0) return 0;
  if (bad == 0) return sample;
  if (sample == good + bad) return good;
  const std::int64_t smaller = std::min(sample, good + bad - sample);
  if (smaller <= 10) return hypergeometric_sequential(good, bad, sample, rng);
  return hypergeometric_ratio_of_uniforms(good, bad, sample, rng);
}

void sample_multivariate_hypergeometric(std::span<const std::int64_t> population,
                                        std::int64_t sample, RandomStream& rng,
                                        std::span<std::int64_t> out) {
  if (out.size() != population.size()) {
    fail(ErrorKind::kInvalidArgument, "multivariate hypergeometric: size mismatch");
  }
  std::int64_t remaining = std::accumulate(population.begin(), population.end(), std::int64_t{0});
  if (sample < 0 || sample > remaining) {
    fail(ErrorKind::kDomain, "multivariate hypergeometric: sample exceeds population");
  }
  for (std::size_t j = 0; j < population.size(); ++j) {
    const std::int64_t good = population[j];
    remaining -= good;
    if (sample == 0) {
      out[j] = 0;
      continue;
    }
    const std::int64_t drawn = sample_hypergeometric(good, remaining, sample, rng);
    out[j] = drawn;
    sample -= drawn;
  }
}

}  // namespace qcube
