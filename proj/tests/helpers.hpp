#pragma once

// Small fixtures shared by the unit tests and the acceptance binary.

#include <random>
#include <vector>

#include "oracles.hpp"
#include "spinshuffle/encoding.hpp"

namespace fixture {

using namespace spinshuffle;

inline SamplingMask random_mask(Index nx, Index ny, double p, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(p);
  SamplingMask m(nx, ny);
  for (Index k = 0; k < m.size(); k++) {
    m.set(k, b(rng));
  }
  return m;
}

inline SamplingMasks random_masks(Index nx, Index ny, Index T, double p, std::uint64_t seed)
{
  std::vector<SamplingMask> v;
  for (Index i = 0; i < T; i++) {
    v.push_back(random_mask(nx, ny, p, seed + static_cast<std::uint64_t>(i)));
  }
  return SamplingMasks(v);
}

inline std::vector<std::vector<int>> as_bits(SamplingMasks const &m)
{
  std::vector<std::vector<int>> out;
  for (auto const &e : m.echoes) {
    out.emplace_back(e.bits.begin(), e.bits.end());
  }
  return out;
}

inline SensitivityMaps random_coils(Index N, Index C, std::uint64_t seed)
{
  SensitivityMaps s;
  for (Index c = 0; c < C; c++) {
    s.maps.push_back(oracle::random_cvec(N, seed + static_cast<std::uint64_t>(c)));
  }
  return s;
}

// Orthonormal T x K basis from a random complex matrix.
inline SubspaceBasis random_basis(Index T, Index K, std::uint64_t seed)
{
  CMat const q = oracle::random_cmat(T, K, seed).householderQr().householderQ() * CMat::Identity(T, K);
  SubspaceBasis b;
  b.phi = q;
  b.singular_values = RVec::Ones(K);
  return b;
}

inline double rel(CMat const &a, CMat const &b) { return (a - b).norm() / b.norm(); }

} // namespace fixture
