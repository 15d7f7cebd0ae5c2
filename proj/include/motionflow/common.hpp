#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace motionflow {

#ifdef MOTIONFLOW_REAL32
using real_t = float;
#else
using real_t = double;
#endif

// Thrown when the data itself makes an operation impossible (e.g. a
// corruption removed every point). Caller mistakes throw
// std::invalid_argument instead.
class DegenerateInput : public std::runtime_error {
 public:
  explicit DegenerateInput(const std::string& what)
      : std::runtime_error(what) {}
};

// splitmix64 round. Derives independent, reproducible seed streams from one
// master seed; stream ids just need to be distinct.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

}  // namespace motionflow
