#include "editlab/rng.h"

#include <cmath>
#include <string>

#include "editlab/error.h"

namespace editlab {
namespace {
constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}  // namespace

uint64_t SplitMix64Mix(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

uint64_t Fnv1a64(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

RngStream::RngStream(uint64_t seed, std::string_view purpose)
    : key_(SplitMix64Mix(seed ^ Fnv1a64(purpose))) {}

RngStream RngStream::Fork(std::string_view purpose) const {
  return RngStream(SplitMix64Mix(key_ ^ Fnv1a64(purpose)) + kGolden);
}

uint64_t RngStream::NextU64() {
  ++counter_;
  return SplitMix64Mix(key_ + counter_ * kGolden);
}

double RngStream::NextDouble() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

size_t RngStream::Categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (weights.empty() || !(total > 0.0)) {
    throw ParameterError("Categorical: weights must have positive mass");
  }
  const double u = NextDouble() * total;
  double acc = 0.0;
  size_t last_positive = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (u < acc) return i;
  }
  // Rounding left u past the final partial sum.
  return last_positive;
}

size_t RngStream::Index(size_t n) {
  if (n == 0) throw ParameterError("Index: empty range");
  return static_cast<size_t>(NextDouble() * static_cast<double>(n)) % n;
}

int RngStream::Sign() { return (NextU64() >> 63) ? 1 : -1; }

double RngStream::Exponential() {
  // 1 - u lies in (0, 1], so the log is finite.
  return -std::log1p(-NextDouble());
}

}  // namespace editlab
