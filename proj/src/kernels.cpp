#include "spinshuffle/kernels.hpp"

#include "first_error.hpp"

namespace spinshuffle::kernels {

namespace {

TissueParams unit_pd(TissueParams t)
{
  t.rho = 1.0;
  return t;
}

void check_kernel(NormalKernel const &kernel, CMat const &ksp)
{
  if (ksp.rows() != kernel.n_locations || ksp.cols() != kernel.K) {
    throw std::invalid_argument("k-space stack does not match the normal kernel");
  }
}

void kernel_row(NormalKernel const &kernel, CMat const &ksp, CMat &out, Index loc)
{
  out.row(loc) = (kernel.block(loc) * ksp.row(loc).transpose()).transpose();
}

} // namespace

namespace serial {

CMat ensemble(std::vector<TissueParams> const &tissues, SequenceParams const &seq)
{
  CMat X(seq.n_echoes(), static_cast<Index>(tissues.size()));
  for (size_t l = 0; l < tissues.size(); l++) {
    X.col(static_cast<Index>(l)) = simulate_fse(unit_pd(tissues[l]), seq);
  }
  return X;
}

CMat apply_normal_kernel(NormalKernel const &kernel, CMat const &ksp)
{
  check_kernel(kernel, ksp);
  CMat out(ksp.rows(), ksp.cols());
  for (Index loc = 0; loc < kernel.n_locations; loc++) {
    kernel_row(kernel, ksp, out, loc);
  }
  return out;
}

std::vector<FitResult> fit_voxels(VoxelFitter const &fitter, CMat const &stack)
{
  std::vector<FitResult> out(static_cast<size_t>(stack.rows()));
  for (Index v = 0; v < stack.rows(); v++) {
    out[static_cast<size_t>(v)] = fitter.fit(stack.row(v).transpose());
  }
  return out;
}

std::vector<FitResult> match_voxels(Dictionary const &dict, CMat const &stack, MatchSpace space)
{
  std::vector<FitResult> out(static_cast<size_t>(stack.rows()));
  for (Index v = 0; v < stack.rows(); v++) {
    out[static_cast<size_t>(v)] = dictionary_match(stack.row(v).transpose(), dict, space);
  }
  return out;
}

std::vector<double> tpsf_trials(DensityProfile const &profile, Index nx, Index ny,
                                SparsityModel const &model, Index n_trials, std::uint64_t seed,
                                Index probe_count)
{
  std::vector<double> peaks(static_cast<size_t>(n_trials));
  for (Index t = 0; t < n_trials; t++) {
    SamplingMask const m = draw_mask(profile, nx, ny, seed + static_cast<std::uint64_t>(t));
    peaks[static_cast<size_t>(t)] = tpsf_peak(m, model, probe_count, seed);
  }
  return peaks;
}

} // namespace serial

namespace omp {

CMat ensemble(std::vector<TissueParams> const &tissues, SequenceParams const &seq)
{
  CMat X(seq.n_echoes(), static_cast<Index>(tissues.size()));
  FirstError err;
  Index const L = static_cast<Index>(tissues.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (Index l = 0; l < L; l++) {
    try {
      X.col(l) = simulate_fse(unit_pd(tissues[static_cast<size_t>(l)]), seq);
    } catch (...) {
      err.capture();
    }
  }
  err.rethrow();
  return X;
}

CMat apply_normal_kernel(NormalKernel const &kernel, CMat const &ksp)
{
  check_kernel(kernel, ksp);
  CMat out(ksp.rows(), ksp.cols());
#pragma omp parallel for schedule(static)
  for (Index loc = 0; loc < kernel.n_locations; loc++) {
    kernel_row(kernel, ksp, out, loc);
  }
  return out;
}

std::vector<FitResult> fit_voxels(VoxelFitter const &fitter, CMat const &stack)
{
  std::vector<FitResult> out(static_cast<size_t>(stack.rows()));
  FirstError err;
#pragma omp parallel for schedule(dynamic, 16)
  for (Index v = 0; v < stack.rows(); v++) {
    try {
      out[static_cast<size_t>(v)] = fitter.fit(stack.row(v).transpose());
    } catch (...) {
      err.capture();
    }
  }
  err.rethrow();
  return out;
}

std::vector<FitResult> match_voxels(Dictionary const &dict, CMat const &stack, MatchSpace space)
{
  std::vector<FitResult> out(static_cast<size_t>(stack.rows()));
  FirstError err;
#pragma omp parallel for schedule(static)
  for (Index v = 0; v < stack.rows(); v++) {
    try {
      out[static_cast<size_t>(v)] = dictionary_match(stack.row(v).transpose(), dict, space);
    } catch (...) {
      err.capture();
    }
  }
  err.rethrow();
  return out;
}

std::vector<double> tpsf_trials(DensityProfile const &profile, Index nx, Index ny,
                                SparsityModel const &model, Index n_trials, std::uint64_t seed,
                                Index probe_count)
{
  std::vector<double> peaks(static_cast<size_t>(n_trials));
  FirstError err;
#pragma omp parallel for schedule(dynamic, 1)
  for (Index t = 0; t < n_trials; t++) {
    try {
      SamplingMask const m = draw_mask(profile, nx, ny, seed + static_cast<std::uint64_t>(t));
      peaks[static_cast<size_t>(t)] = tpsf_peak(m, model, probe_count, seed);
    } catch (...) {
      err.capture();
    }
  }
  err.rethrow();
  return peaks;
}

} // namespace omp

} // namespace spinshuffle::kernels
