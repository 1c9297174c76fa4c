#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace m3lak {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// A seeded random stream. Two streams with the same (seed, stream id) produce
/// identical sequences; different ids are decorrelated through splitmix64.
class RngStream {
 public:
  using engine_type = std::mt19937_64;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), engine_(splitmix64(seed ^ splitmix64(stream ^ 0x5851f42d4c957f2dULL))) {}

  /// Child stream keyed by a path of tags, e.g. {sweep, block, index}.
  static RngStream keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t id = 0x2545f4914f6cdd1dULL;
    for (auto tag : path) id = splitmix64(id ^ splitmix64(tag));
    return RngStream(seed, id);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  engine_type& engine() { return engine_; }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    for (;;) {
      double u = std::generate_canonical<double, 53>(engine_);
      if (u > 0.0) return u;
    }
  }

  double normal() { return normal_(engine_); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  engine_type engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Tags naming the sampler blocks, used as the second element of keyed stream paths.
enum class StreamTag : std::uint64_t {
  init = 1,
  beta,
  lambda,
  omega,
  latent_h,
  slice,
  stick,
  assign,
  component,
  weights,
  latent_u,
  w_columns,
  v_columns,
  ard,
  noise,
  synthetic,
  folds,
};

inline std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

}  // namespace m3lak
