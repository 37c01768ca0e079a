#include <doctest.h>

#include "helpers.hpp"
#include "spinshuffle/kernels.hpp"
#include "spinshuffle/parallel.hpp"

using namespace spinshuffle;

namespace {

bool same(std::vector<FitResult> const &a, std::vector<FitResult> const &b)
{
  if (a.size() != b.size()) {
    return false;
  }
  for (size_t i = 0; i < a.size(); i++) {
    if (a[i].rho != b[i].rho || a[i].t2 != b[i].t2 || a[i].residual != b[i].residual ||
        a[i].converged != b[i].converged || a[i].atom != b[i].atom) {
      return false;
    }
  }
  return true;
}

} // namespace

TEST_CASE("parallel kernels reproduce the serial reference bit for bit")
{
  set_threads(4);
  SequenceParams const seq = SequenceParams::from_flips({160, 120, 100, 140, 130, 150, 170, 110}, 10);
  TissuePrior p;
  p.seed = 3;
  auto const tissues = sample_prior(p, 97);
  CHECK(kernels::omp::ensemble(tissues, seq) == kernels::serial::ensemble(tissues, seq));

  SubspaceBasis const basis = fixture::random_basis(8, 3, 2);
  SamplingMasks const masks = fixture::random_masks(16, 16, 8, 0.3, 8);
  NormalKernel const kern = build_normal_kernel(masks, basis);
  CMat const ksp = oracle::random_cmat(256, 3, 4);
  CHECK(kernels::omp::apply_normal_kernel(kern, ksp) == kernels::serial::apply_normal_kernel(kern, ksp));

  CMat stack(61, 8);
  for (Index v = 0; v < 61; v++) {
    TissueParams t;
    t.t2 = 30 + 4 * static_cast<double>(v);
    stack.row(v) = simulate_fse(t, seq).transpose();
  }
  stack += 0.01 * oracle::random_cmat(61, 8, 9);
  VoxelFitter const fitter(seq, FitOptions{});
  CHECK(same(kernels::omp::fit_voxels(fitter, stack), kernels::serial::fit_voxels(fitter, stack)));

  Dictionary const dict = build_dictionary(tissues, seq, basis);
  CHECK(same(kernels::omp::match_voxels(dict, stack, MatchSpace::time),
             kernels::serial::match_voxels(dict, stack, MatchSpace::time)));
  CMat const coeffs = stack * basis.phi.conjugate();
  CHECK(same(kernels::omp::match_voxels(dict, coeffs, MatchSpace::coefficients),
             kernels::serial::match_voxels(dict, coeffs, MatchSpace::coefficients)));

  DensityProfile const prof;
  SparsityModel const model{SparsifyingTransform::Kind::haar, {}};
  CHECK(kernels::omp::tpsf_trials(prof, 16, 16, model, 9, 5, 16) ==
        kernels::serial::tpsf_trials(prof, 16, 16, model, 9, 5, 16));
  set_threads(0);
}

TEST_CASE("kernels report per-item failures")
{
  NormalKernel const kern = build_normal_kernel(fixture::random_masks(8, 8, 4, 0.5, 1),
                                                fixture::random_basis(4, 2, 1));
  CHECK_THROWS(kernels::omp::apply_normal_kernel(kern, CMat::Zero(64, 3)));
  CHECK_THROWS(kernels::serial::apply_normal_kernel(kern, CMat::Zero(63, 2)));
  TissueParams bad;
  bad.t2 = -5;
  SequenceParams const seq = SequenceParams::constant(4, 180, 10);
  CHECK_THROWS(kernels::omp::ensemble({TissueParams{}, bad}, seq));
}
