#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "spinshuffle/phantom.hpp"
#include "spinshuffle/qmap.hpp"

using namespace spinshuffle;

namespace {

SequenceParams const cpmg32 = SequenceParams::constant(32, 180, 10);

CVec noisy_cpmg(double t2, cplx rho, double sigma, std::uint64_t seed)
{
  CVec s = rho * oracle::cpmg(1.0, t2, 10, 32);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma / std::sqrt(2.0));
  for (Index i = 0; i < s.size(); i++) {
    double const a = g(rng);
    double const b = g(rng);
    s[i] += cplx(a, b);
  }
  return s;
}

// Brute-force minimizer of the rho-projected cost over T2 = 1, 1.01, ..., 1000.
double grid_t2(CVec const &x)
{
  double best_t2 = 0, best = -1;
  for (long k = 0; k <= 99900; k++) {
    double const t2 = 1.0 + 0.01 * static_cast<double>(k);
    double const r = std::exp(-10.0 / t2);
    cplx ip = 0;
    double ff = 0;
    double p = 1;
    for (Index i = 0; i < x.size(); i++) {
      p *= r;
      ip += p * x[i];
      ff += p * p;
    }
    double const score = std::norm(ip) / ff;
    if (score > best) {
      best = score;
      best_t2 = t2;
    }
  }
  return best_t2;
}

Index naive_argmax(CMat const &atoms, CVec const &x)
{
  Index best = 0;
  double mag = -1;
  for (Index d = 0; d < atoms.cols(); d++) {
    cplx s = 0;
    for (Index i = 0; i < x.size(); i++) {
      s += std::conj(atoms(i, d)) * x[i];
    }
    if (std::abs(s) > mag) {
      mag = std::abs(s);
      best = d;
    }
  }
  return best;
}

std::vector<TissueParams> t2_grid(double lo, double hi, double step)
{
  std::vector<TissueParams> v;
  for (double t = lo; t <= hi + 1e-9; t += step) {
    v.push_back({1.0, 1000, t, 1.0});
  }
  return v;
}

} // namespace

TEST_CASE("nlls noiseless and scaling")
{
  FitOptions opts;
  FitResult const r = fit_voxel_nlls(oracle::cpmg(1.0, 100, 10, 32), cpmg32, opts);
  CHECK(std::abs(r.t2 - 100) < 1e-6);
  CHECK(std::abs(r.rho - cplx(1.0)) < 1e-8);
  CHECK(r.converged);
  FitResult const s = fit_voxel_nlls(cplx(0, 3) * oracle::cpmg(1.0, 100, 10, 32), cpmg32, opts);
  CHECK(std::abs(s.t2 - 100) < 1e-6);
  CHECK(std::abs(s.rho - cplx(0, 3)) < 1e-7);
  FitResult const z = fit_voxel_nlls(CVec::Zero(32), cpmg32, opts);
  CHECK(z.rho == cplx(0.0));
  CHECK(!z.t2_defined);
}

TEST_CASE("nlls matches the dense grid and is variable-projection optimal")
{
  FitOptions opts;
  VoxelFitter const fitter(cpmg32, opts);
  for (std::uint64_t t = 0; t < 10; t++) {
    double const truth = 40 + 25 * static_cast<double>(t);
    CVec const x = noisy_cpmg(truth, {0.8, 0.3}, 0.01, 300 + t);
    FitResult const r = fit_voxel_nlls(x, cpmg32, opts);
    CHECK(std::abs(r.t2 - grid_t2(x)) <= 0.01);
    CHECK(r.t2 >= opts.bounds.t2_min);
    CVec const f = fitter.model(r.t2, 1.0);
    CHECK(std::abs(f.dot(x - r.rho * f)) < 1e-8 * x.norm());
  }
}

TEST_CASE("subspace fit")
{
  TissuePrior p;
  p.seed = 2;
  EnsembleMatrix const X = build_ensemble(sample_prior(p, 256), cpmg32);
  SubspaceBasis const b3 = compute_basis(X, 3);
  FitOptions opts;
  for (double t2 : {45.0, 100.0, 220.0}) {
    CVec const alpha = b3.phi.adjoint() * oracle::cpmg(1.0, t2, 10, 32);
    FitResult const r = fit_voxel_subspace(alpha, b3, cpmg32, opts);
    CHECK(std::abs(r.t2 - t2) < 1e-3 * t2);
  }
  SubspaceBasis const full = compute_basis(X, 32);
  for (std::uint64_t t = 0; t < 5; t++) {
    CVec const x = noisy_cpmg(60 + 40 * static_cast<double>(t), 1.0, 0.02, 900 + t);
    FitResult const a = fit_voxel_nlls(x, cpmg32, opts);
    FitResult const b = fit_voxel_subspace(full.phi.adjoint() * x, full, cpmg32, opts);
    CHECK(std::abs(a.t2 - b.t2) < 1e-10 * a.t2);
    CHECK(std::abs(a.rho - b.rho) < 1e-10 * std::abs(a.rho));
  }
  FitResult const z = fit_voxel_subspace(CVec::Zero(3), b3, cpmg32, opts);
  CHECK(z.rho == cplx(0.0));
  CHECK(!z.t2_defined);
}

TEST_CASE("dictionary matching")
{
  Dictionary const dict = build_dictionary(t2_grid(20, 400, 5), cpmg32);
  for (Index d = 0; d < dict.size(); d++) {
    CHECK(std::abs(dict.atoms.col(d).norm() - 1.0) < 1e-12);
  }
  CVec const atom = dict.atoms.col(10);
  FitResult const same = dictionary_match(2.0 * atom, dict);
  CHECK(same.atom == 10);
  CHECK(std::abs(same.rho - cplx(2.0)) < 1e-12);
  FitResult const neg = dictionary_match(-atom, dict);
  CHECK(neg.atom == 10);
  CHECK(neg.rho.real() < 0);
  CHECK(std::abs(neg.rho.imag()) < 1e-12);

  int hits = 0;
  for (std::uint64_t t = 0; t < 100; t++) {
    // tissue range; a 320 ms train cannot resolve 5 ms steps much past 200 ms at this noise
    double const truth = 30 + 1.7 * static_cast<double>(t);
    CVec const x = noisy_cpmg(truth, 1.0, 0.02, 5000 + t);
    FitResult const m = dictionary_match(x, dict);
    CHECK(m.atom == naive_argmax(dict.atoms, x));
    hits += std::abs(m.t2 - truth) <= 5.0;
  }
  CHECK(hits >= 95);

  std::vector<TissueParams> dup = t2_grid(50, 60, 5);
  dup.push_back(dup[1]);
  Dictionary const dd = build_dictionary(dup, cpmg32);
  CHECK(dictionary_match(dd.atoms.col(1), dd).atom == 1);
  CHECK_THROWS(dictionary_match(CVec::Ones(32), dd, MatchSpace::coefficients));
}

TEST_CASE("fit_map on a two-region phantom")
{
  PhantomSpec spec;
  spec.nx = 16;
  spec.ny = 16;
  spec.ellipses = {{0, 0, 0.9, 0.9, 0, 1}, {0.3, 0.3, 0.3, 0.3, 0, 2}};
  spec.regions[1] = {1.0, 1000, 70, 1.0};
  spec.regions[2] = {0.6, 1000, 150, 1.0};
  Phantom const ph = make_phantom(spec);
  CMat const truth = contrast_images(ph, cpmg32);
  FitOptions opts;
  ParameterMaps const maps = fit_map(truth, std::nullopt, cpmg32, FitMethod::nlls, opts);
  for (Index v = 0; v < ph.n_voxels(); v++) {
    int const l = ph.labels[static_cast<size_t>(v)];
    if (l == 0) {
      CHECK(maps.failed[static_cast<size_t>(v)] == 1);
    } else {
      CHECK(std::abs(maps.t2[v] - ph.t2_map()[v]) < 1e-3 * ph.t2_map()[v]);
      CHECK(maps.failed[static_cast<size_t>(v)] == 0);
    }
  }
  // voxel order does not matter
  std::vector<Index> perm(static_cast<size_t>(ph.n_voxels()));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::reverse(perm.begin(), perm.end());
  CMat shuffled(truth.rows(), truth.cols());
  for (Index v = 0; v < ph.n_voxels(); v++) {
    shuffled.row(v) = truth.row(perm[static_cast<size_t>(v)]);
  }
  ParameterMaps const back = fit_map(shuffled, std::nullopt, cpmg32, FitMethod::nlls, opts);
  for (Index v = 0; v < ph.n_voxels(); v++) {
    CHECK(back.t2[v] == maps.t2[perm[static_cast<size_t>(v)]]);
  }
  // uniform region equals a single-voxel fit
  Index v0 = 0;
  while (ph.labels[static_cast<size_t>(v0)] != 1) {
    v0++;
  }
  CHECK(maps.t2[v0] == fit_voxel_nlls(truth.row(v0).transpose(), cpmg32, opts).t2);

  Dictionary const dict = build_dictionary(t2_grid(20, 400, 5), cpmg32);
  ParameterMaps const dm = fit_map(truth, std::nullopt, cpmg32, FitMethod::dictionary, opts, &dict);
  CHECK(dm.t2[v0] == 70.0);
  CHECK_THROWS(fit_map(truth, std::nullopt, cpmg32, FitMethod::dictionary, opts));
}
