#include "earthgan/rng.hpp"

#include <cmath>
#include <numbers>

namespace earthgan {
namespace {

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t counter) {
  std::uint64_t h = mix64(seed + 0x9e3779b97f4a7c15ULL);
  h = mix64(h ^ (stream + 0x632be59bd9b4e019ULL));
  return mix64(h + counter * 0x9e3779b97f4a7c15ULL);
}

double counter_uniform(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t counter) {
  return static_cast<double>(counter_hash(seed, stream, counter) >> 11) *
         0x1.0p-53;
}

double counter_normal(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t counter) {
  // Both uniforms come from disjoint halves of the counter space.
  const double u1 = 1.0 - counter_uniform(seed, stream, 2 * counter);
  const double u2 = counter_uniform(seed, stream, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
Tensor<T> normal_tensor(const Shape& shape, std::uint64_t seed,
                        std::uint64_t stream) {
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<T>(counter_normal(seed, stream, i));
  }
  return out;
}

std::uint64_t CounterRng::below(std::uint64_t n) {
  if (n <= 1) {
    ++counter_;
    return 0;
  }
  return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
}

template Tensor<float> normal_tensor<float>(const Shape&, std::uint64_t,
                                            std::uint64_t);
template Tensor<double> normal_tensor<double>(const Shape&, std::uint64_t,
                                              std::uint64_t);

}  // namespace earthgan
