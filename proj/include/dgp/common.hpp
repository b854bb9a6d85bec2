#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dgp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct FactorizationFailed : std::runtime_error {
  explicit FactorizationFailed(const std::string& what) : std::runtime_error(what) {}
};

struct GridTooLarge : std::runtime_error {
  explicit GridTooLarge(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : std::invalid_argument {
  explicit DimensionMismatch(const std::string& what) : std::invalid_argument(what) {}
};

struct UnsupportedDerivativeOrder : std::invalid_argument {
  explicit UnsupportedDerivativeOrder(const std::string& what) : std::invalid_argument(what) {}
};

struct AllProposalsRejected : std::runtime_error {
  explicit AllProposalsRejected(const std::string& what) : std::runtime_error(what) {}
};

// splitmix64; used to derive independent RNG streams from (seed, stream ids).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t s = master;
  std::uint64_t h = splitmix64(s);
  s ^= a * 0x9e3779b97f4a7c15ull;
  h ^= splitmix64(s);
  s ^= b * 0xd1b54a32d192ed03ull;
  h ^= splitmix64(s);
  return h;
}

}  // namespace dgp
