#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace gawm {

/// One round of SplitMix64 (Steele, Lea, Flood 2014).
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives a child seed from a parent seed and a sequence of tags.
/// Used to give every probe instance, training step and rollout its own stream.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

/**
 * xoshiro256** generator (Blackman & Vigna), seeded through SplitMix64.
 *
 * All distributions below are implemented here rather than via <random>
 * distributions, whose output is implementation-defined; this keeps
 * seeded streams identical across standard libraries.
 */
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer on [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal (Marsaglia polar method).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// log of a Gamma(shape, 1) variate (Marsaglia-Tsang, with the
  /// U^(1/shape) boost for shape < 1 applied in log space).
  double log_gamma_variate(double shape);

  double gamma(double shape);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gawm
