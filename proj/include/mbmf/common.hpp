#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace mbmf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Thrown when a numerical routine cannot recover (factorization failure,
// all fit restarts non-finite, optimizer saw no finite value).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Stream seed i derived from a base seed; streams are independent of how
// many siblings exist, so parallel and sequential execution agree.
inline std::uint64_t substream_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(base ^ splitmix64(index + 1));
}

// FNV-1a over the raw byte pattern of the vector. Basis of the
// seed-from-theta contract: bitwise-equal inputs give equal hashes.
inline std::uint64_t hash_vector(const Vec& v) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double d = v[i];
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &d, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

// Round-trip-exact decimal form of a double (used by all CSV writers).
std::string format_double(double v);

}  // namespace mbmf
