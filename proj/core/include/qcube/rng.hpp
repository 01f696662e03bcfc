#pragma once

// Counter-based random streams and the discrete samplers built on them.
//
// A stream is identified by (seed, stream, substream). Output k of a stream is
// a pure function of that triple and k, so any replicate can be regenerated
// independently of how work was scheduled across threads.

#include <cstdint>
#include <span>
#include <string_view>

namespace qcube {

std::uint64_t mix64(std::uint64_t x) noexcept;

/// FNV-1a, used to derive stream ids from string keys (athlete, match).
std::uint64_t stable_hash(std::string_view s) noexcept;

class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0,
                        std::uint64_t substream = 0) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    counter_ += 0x9E3779B97F4A7C15ULL;
    return mix64(key_ + counter_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// log(k!) from a table for small k and a Stirling series beyond it.
double log_factorial(std::int64_t k) noexcept;

/// Number of "good" items in a draw of `sample` items without replacement from
/// an urn with `good` good and `bad` bad items.
std::int64_t sample_hypergeometric(std::int64_t good, std::int64_t bad, std::int64_t sample,
                                   RandomStream& rng);

/// Splits a draw of `sample` items without replacement from the finite
/// population given by per-category counts. Writes per-category counts to out.
void sample_multivariate_hypergeometric(std::span<const std::int64_t> population,
                                        std::int64_t sample, RandomStream& rng,
                                        std::span<std::int64_t> out);

}  // namespace qcube
