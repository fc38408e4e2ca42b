#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace dust {

/// Independent randomness consumers. Each gets its own stream family so
/// toggling one feature never shifts another's draws.
enum class Role : std::uint64_t {
  LatentInit = 1,
  DynamicsInit = 2,
  PolicyInit = 3,
  DynamicsSampling = 4,
  PolicySampling = 5,
  PolicyShift = 6,
  Environment = 7,
  Mppi = 8,
  Test = 99,
};

/// Counter-based generator: output k is a pure function of (key, k), so a
/// stream can be recreated anywhere from its key without shared state.
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Standard normal draw (Box-Muller on two fresh 53-bit uniforms).
  double normal();
  /// Uniform on [0, 1).
  double uniform();

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Hierarchical stream key: (base seed, episode, step, role, sub-indices...).
class StreamKey {
 public:
  StreamKey(std::uint64_t seed, std::uint64_t episode) noexcept;

  StreamKey at_step(std::uint64_t step) const noexcept;
  StreamKey with(Role role) const noexcept;
  StreamKey sub(std::initializer_list<std::uint64_t> indices) const noexcept;

  CounterRng stream() const noexcept { return CounterRng(hash_); }
  std::uint64_t hash() const noexcept { return hash_; }

 private:
  struct FromHash {};
  StreamKey(FromHash, std::uint64_t hash) noexcept : hash_(hash) {}
  std::uint64_t hash_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace dust
