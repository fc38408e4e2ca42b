#include "dust/rng.hpp"

#include <cmath>
#include <numbers>

namespace dust {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t combine(std::uint64_t h, std::uint64_t v) noexcept {
  return splitmix64(h ^ splitmix64(v + 0x632BE59BD9B4E019ULL));
}

}  // namespace

CounterRng::result_type CounterRng::operator()() noexcept {
  // Two rounds of mixing decorrelate neighbouring keys and counters.
  return splitmix64(splitmix64(key_ ^ (counter_++ * 0xD1B54A32D192ED03ULL)));
}

double CounterRng::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double CounterRng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

StreamKey::StreamKey(std::uint64_t seed, std::uint64_t episode) noexcept
    : hash_(combine(combine(0x5EED5EED5EED5EEDULL, seed), episode)) {}

StreamKey StreamKey::at_step(std::uint64_t step) const noexcept {
  return StreamKey(FromHash{}, combine(hash_ ^ 0x57E9ULL, step));
}

StreamKey StreamKey::with(Role role) const noexcept {
  return StreamKey(FromHash{}, combine(hash_ ^ 0x201EULL, static_cast<std::uint64_t>(role)));
}

StreamKey StreamKey::sub(std::initializer_list<std::uint64_t> indices) const noexcept {
  std::uint64_t h = hash_;
  for (auto v : indices) h = combine(h, v);
  return StreamKey(FromHash{}, h);
}

}  // namespace dust
