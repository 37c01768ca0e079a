#pragma once

#include <cstdint>
#include <vector>

#include "spinshuffle/encoding.hpp"
#include "spinshuffle/transform.hpp"

namespace spinshuffle {

// Variable-density profile. Radii are fractions of the largest k-space radius
// on the grid (the corner).
struct DensityProfile {
  enum class Shape { polynomial, gaussian };

  Shape shape = Shape::polynomial;
  double fully_sampled_radius = 0.04;
  double decay_power = 3.0; // polynomial: (1 - r)^p
  double sigma = 0.3;       // gaussian: exp(-r^2 / 2 sigma^2)
  double accel = 4.0;
};

// Per-location acquisition probability, calibrated so the expected count is
// N / accel (or the forced center alone, if that is larger).
RVec sampling_density(DensityProfile const &profile, Index nx, Index ny);

// Independent Bernoulli draws from the calibrated density.
SamplingMask draw_mask(DensityProfile const &profile, Index nx, Index ny, std::uint64_t seed);

// T independent draws; echo i uses seed + i.
SamplingMasks draw_echo_masks(DensityProfile const &profile, Index nx, Index ny, Index T,
                              std::uint64_t seed);

struct SparsityModel {
  SparsifyingTransform::Kind transform = SparsifyingTransform::Kind::identity;
  std::vector<Index> support;
};

// Largest off-diagonal transform point spread over probe_count random
// coefficients, each column normalized by its own diagonal entry.
double tpsf_peak(SamplingMask const &mask, SparsityModel const &model, Index probe_count,
                 std::uint64_t seed);

struct MonteCarloMask {
  SamplingMask mask;
  double peak = 0.0;
  Index trial = 0;
  std::vector<double> trial_peaks;
};

// Trial t draws with seed + t; every trial is probed with the same coefficient
// set (seeded by seed). Ties go to the lowest trial index.
MonteCarloMask monte_carlo_mask(DensityProfile const &profile, Index nx, Index ny,
                                SparsityModel const &model, Index n_trials, std::uint64_t seed,
                                Index probe_count = 64);

enum class EchoOrdering { center_out, randomized };

// Partitions the acquired locations of one mask into T disjoint echo masks of
// near-equal size.
SamplingMasks assign_echoes(SamplingMask const &mask, Index T, EchoOrdering ordering,
                            std::uint64_t seed);

// trace(G^-1) with G = U^H Psi F^H M F Psi^H U restricted to the support.
double sparsity_crb(SamplingMask const &mask, SparsityModel const &model);

} // namespace spinshuffle
