#ifndef EDITLAB_RNG_H_
#define EDITLAB_RNG_H_

#include <cstdint>
#include <span>
#include <string_view>

namespace editlab {

// Counter-based random stream.
//
// Output i of a stream with key k is SplitMix64Mix(k + (i + 1) * kGolden),
// i.e. the SplitMix64 finalizer applied to a Weyl sequence. The key of a
// stream is derived from a 64-bit seed and a purpose label:
//
//   key = SplitMix64Mix(seed ^ Fnv1a64(purpose))
//
// so every (seed, purpose) pair owns an independent stream and the order in
// which streams are consumed never changes their contents. All sampling
// helpers below are implemented here rather than via <random> distributions
// because the latter are not bit-identical across standard libraries.
class RngStream {
 public:
  RngStream(uint64_t seed, std::string_view purpose);

  // Stream derived from this one's key and a further label; used for
  // per-trial or per-method sub-streams.
  RngStream Fork(std::string_view purpose) const;

  uint64_t NextU64();
  // Uniform on [0, 1) with 53 bits of precision.
  double NextDouble();
  // Inverse-CDF draw from a (possibly unnormalized) nonnegative weight
  // vector. Never returns an index with zero weight.
  size_t Categorical(std::span<const double> weights);
  // Uniform integer in [0, n).
  size_t Index(size_t n);
  // +1 or -1 with equal probability.
  int Sign();
  // Standard exponential via inversion.
  double Exponential();

  uint64_t key() const { return key_; }
  uint64_t counter() const { return counter_; }

 private:
  explicit RngStream(uint64_t key) : key_(key) {}

  uint64_t key_;
  uint64_t counter_ = 0;
};

uint64_t SplitMix64Mix(uint64_t z);
uint64_t Fnv1a64(std::string_view s);

}  // namespace editlab

#endif  // EDITLAB_RNG_H_
