#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP version used by the
// library and a plain serial version kept as the reference for tests and
// benchmarks. Both produce bit-identical results: every output element is
// computed independently, with no cross-item reductions.

#include <cstdint>
#include <vector>

#include "spinshuffle/encoding.hpp"
#include "spinshuffle/qmap.hpp"
#include "spinshuffle/sampling.hpp"

namespace spinshuffle::kernels {

namespace serial {

// One unit-PD signal evolution per tissue (T x L).
CMat ensemble(std::vector<TissueParams> const &tissues, SequenceParams const &seq);

// Row-wise Psi(loc) * ksp.row(loc) for an N x K k-space coefficient stack.
CMat apply_normal_kernel(NormalKernel const &kernel, CMat const &ksp);

std::vector<FitResult> fit_voxels(VoxelFitter const &fitter, CMat const &stack);

std::vector<FitResult> match_voxels(Dictionary const &dict, CMat const &stack, MatchSpace space);

std::vector<double> tpsf_trials(DensityProfile const &profile, Index nx, Index ny,
                                SparsityModel const &model, Index n_trials, std::uint64_t seed,
                                Index probe_count);

} // namespace serial

namespace omp {

CMat ensemble(std::vector<TissueParams> const &tissues, SequenceParams const &seq);
CMat apply_normal_kernel(NormalKernel const &kernel, CMat const &ksp);
std::vector<FitResult> fit_voxels(VoxelFitter const &fitter, CMat const &stack);
std::vector<FitResult> match_voxels(Dictionary const &dict, CMat const &stack, MatchSpace space);
std::vector<double> tpsf_trials(DensityProfile const &profile, Index nx, Index ny,
                                SparsityModel const &model, Index n_trials, std::uint64_t seed,
                                Index probe_count);

} // namespace omp

} // namespace spinshuffle::kernels
