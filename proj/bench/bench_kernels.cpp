// Serial reference against the OpenMP kernels on pipeline-sized inputs.
// Thread count follows SPINSHUFFLE_THREADS.

#include <random>

#include <benchmark/benchmark.h>

#include "spinshuffle/kernels.hpp"
#include "spinshuffle/parallel.hpp"
#include "spinshuffle/subspace.hpp"

using namespace spinshuffle;

namespace {

SequenceParams const seq = SequenceParams::constant(32, 180, 10);

std::vector<TissueParams> const &tissues()
{
  static std::vector<TissueParams> const t = [] {
    TissuePrior p;
    p.seed = 1;
    return sample_prior(p, 1000);
  }();
  return t;
}

SubspaceBasis const &basis()
{
  static SubspaceBasis const b = compute_basis(kernels::serial::ensemble(tissues(), seq), 3);
  return b;
}

CMat noisy_stack(Index voxels)
{
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 0.01);
  CMat s(voxels, seq.n_echoes());
  for (Index v = 0; v < voxels; v++) {
    TissueParams t;
    t.t2 = 40 + static_cast<double>(v % 160);
    s.row(v) = simulate_fse(t, seq).transpose();
    for (Index i = 0; i < s.cols(); i++) {
      s(v, i) += cplx(g(rng), g(rng));
    }
  }
  return s;
}

template <bool parallel>
void bm_ensemble(benchmark::State &st)
{
  for (auto _ : st) {
    benchmark::DoNotOptimize(parallel ? kernels::omp::ensemble(tissues(), seq)
                                      : kernels::serial::ensemble(tissues(), seq));
  }
}

template <bool parallel>
void bm_normal_kernel(benchmark::State &st)
{
  SamplingMasks const masks = draw_echo_masks(DensityProfile{}, 128, 128, seq.n_echoes(), 3);
  NormalKernel const kern = build_normal_kernel(masks, basis());
  CMat const ksp = CMat::Random(128 * 128, 3);
  for (auto _ : st) {
    benchmark::DoNotOptimize(parallel ? kernels::omp::apply_normal_kernel(kern, ksp)
                                      : kernels::serial::apply_normal_kernel(kern, ksp));
  }
}

template <bool parallel>
void bm_fit_voxels(benchmark::State &st)
{
  VoxelFitter const fitter(seq, FitOptions{});
  CMat const stack = noisy_stack(512);
  for (auto _ : st) {
    benchmark::DoNotOptimize(parallel ? kernels::omp::fit_voxels(fitter, stack)
                                      : kernels::serial::fit_voxels(fitter, stack));
  }
}

template <bool parallel>
void bm_match_voxels(benchmark::State &st)
{
  Dictionary const dict = build_dictionary(tissues(), seq);
  CMat const stack = noisy_stack(4096);
  for (auto _ : st) {
    benchmark::DoNotOptimize(parallel ? kernels::omp::match_voxels(dict, stack, MatchSpace::time)
                                      : kernels::serial::match_voxels(dict, stack, MatchSpace::time));
  }
}

template <bool parallel>
void bm_tpsf_trials(benchmark::State &st)
{
  SparsityModel const model{SparsifyingTransform::Kind::haar, {}};
  for (auto _ : st) {
    benchmark::DoNotOptimize(parallel ? kernels::omp::tpsf_trials(DensityProfile{}, 64, 64, model, 16, 5, 32)
                                      : kernels::serial::tpsf_trials(DensityProfile{}, 64, 64, model, 16, 5, 32));
  }
}

} // namespace

BENCHMARK(bm_ensemble<false>)->Name("ensemble/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_ensemble<true>)->Name("ensemble/omp")->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(bm_normal_kernel<false>)->Name("normal_kernel/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_normal_kernel<true>)->Name("normal_kernel/omp")->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(bm_fit_voxels<false>)->Name("fit_voxels/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_fit_voxels<true>)->Name("fit_voxels/omp")->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(bm_match_voxels<false>)->Name("match_voxels/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_match_voxels<true>)->Name("match_voxels/omp")->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(bm_tpsf_trials<false>)->Name("tpsf_trials/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_tpsf_trials<true>)->Name("tpsf_trials/omp")->Unit(benchmark::kMillisecond)->UseRealTime();

int main(int argc, char **argv)
{
  configure_threads();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) {
    return 1;
  }
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
