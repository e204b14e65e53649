#ifndef OULAB_RNG_HPP
#define OULAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace oulab {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based random stream. Output n of stream (root, id) is a pure
/// function of (root, id, n), so every path can be regenerated on its own
/// from the root seed and its stream id, independently of thread layout.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t root_seed, std::uint64_t stream_id) noexcept
      : root_(root_seed), id_(stream_id), key_(splitmix64(root_seed ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return splitmix64(key_ + (++counter_) * 0xd1b54a32d192ed03ULL); }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

  double exponential() noexcept { return -std::log(uniform()); }

  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 30.0) {
      // inversion by sequential search; exact and cheap for the small means of a time step
      double p = std::exp(-mean);
      double cdf = p;
      const double u = uniform();
      std::uint64_t k = 0;
      while (u > cdf && p > 0.0) {
        ++k;
        p *= mean / static_cast<double>(k);
        cdf += p;
      }
      return k;
    }
    std::poisson_distribution<std::uint64_t> dist(mean);
    return dist(*this);
  }

  std::uint64_t root_seed() const noexcept { return root_; }
  std::uint64_t stream_id() const noexcept { return id_; }
  std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t root_;
  std::uint64_t id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Stream ids are partitioned by purpose so that, e.g., passage paths and
/// simulate paths drawn from one root seed never share a stream.
enum class StreamPurpose : std::uint64_t {
  simulate = 1,
  local_time = 2,
  ergodic = 3,
  passage = 4,
  passage_bridge = 5,
  test = 15,
};

inline constexpr std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t index) noexcept {
  return (static_cast<std::uint64_t>(purpose) << 56) | (index & ((1ULL << 56) - 1));
}

}  // namespace oulab

#endif
