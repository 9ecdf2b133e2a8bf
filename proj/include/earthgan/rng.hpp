#pragma once

#include <cstdint>

#include "earthgan/tensor.hpp"

namespace earthgan {

// Stateless counter-based generator: every draw is a pure function of
// (seed, stream, counter), so any noise tensor can be regenerated from its key
// without replaying earlier draws.
std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t counter);

// Uniform in [0, 1).
double counter_uniform(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t counter);

// Standard normal (Box-Muller over two hashed uniforms).
double counter_normal(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t counter);

// Fills a tensor with standard-normal values; element i uses counter i.
template <typename T>
Tensor<T> normal_tensor(const Shape& shape, std::uint64_t seed,
                        std::uint64_t stream);

// Sequential view over the counter generator. The whole state is the counter,
// which makes checkpointing trivial.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0)
      : seed_(seed), stream_(stream), counter_(counter) {}

  double uniform() { return counter_uniform(seed_, stream_, counter_++); }
  double normal() { return counter_normal(seed_, stream_, counter_++); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_;
};

}  // namespace earthgan
