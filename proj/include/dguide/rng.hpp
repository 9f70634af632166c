#pragma once

#include "dguide/linalg.hpp"

#include <cstdint>
#include <random>

namespace dguide {

using Engine = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based seed derivation: the child seed depends only on
/// (seed, stream, index), never on how many draws other streams consumed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t index = 0);

inline Engine make_engine(std::uint64_t seed) { return Engine(splitmix64(seed)); }

Vector standard_normal(Engine& engine, int dim);
Matrix standard_normal(Engine& engine, int rows, int cols);

// Named seed streams.
namespace stream {
inline constexpr std::uint64_t kPrior = 1;
inline constexpr std::uint64_t kObservation = 2;
inline constexpr std::uint64_t kDataset = 3;
inline constexpr std::uint64_t kTraining = 4;
inline constexpr std::uint64_t kSampler = 5;
inline constexpr std::uint64_t kReference = 6;
inline constexpr std::uint64_t kTarget = 7;
inline constexpr std::uint64_t kMixture = 8;
inline constexpr std::uint64_t kRegressor = 9;
inline constexpr std::uint64_t kCertify = 10;
inline constexpr std::uint64_t kImpute = 11;
inline constexpr std::uint64_t kRepeat = 12;
}  // namespace stream

}  // namespace dguide
