#include <doctest.h>

#include <numeric>

#include "helpers.hpp"
#include "spinshuffle/phantom.hpp"
#include "spinshuffle/recon.hpp"

using namespace spinshuffle;
using fixture::rel;

namespace {

bool nonincreasing(std::vector<double> const &v, double slack)
{
  for (size_t i = 1; i < v.size(); i++) {
    if (v[i] > v[i - 1] + slack * std::abs(v[i - 1])) {
      return false;
    }
  }
  return true;
}

double l1(CVec const &v) { return v.cwiseAbs().sum(); }

SolverConfig tight(double lambda = 0.0)
{
  SolverConfig c;
  c.max_iters = 20000;
  c.tolerance = 1e-14;
  c.lambda = lambda;
  return c;
}

Phantom two_tissue_phantom()
{
  PhantomSpec spec;
  spec.nx = 16;
  spec.ny = 16;
  spec.ellipses = {{0.0, 0.0, 0.8, 0.8, 0.0, 1}, {0.2, 0.1, 0.35, 0.3, 0.0, 2}};
  spec.regions[0] = {0.0, 1000, 100, 1.0};
  spec.regions[1] = {1.0, 1000, 80, 1.0};
  spec.regions[2] = {0.8, 1000, 160, 1.0};
  return make_phantom(spec);
}

} // namespace

TEST_CASE("cg_solve trivial cases")
{
  std::vector<SamplingMask> full(3, SamplingMask(8, 8, true));
  Encoder const enc{SamplingMasks(full)};
  CMat const x = oracle::random_cmat(64, 3, 1);
  SolverConfig cfg;
  cfg.tolerance = 1e-12;
  ReconResult const r = cg_solve(enc, apply_forward(enc, x), cfg);
  CHECK(r.iterations <= 2);
  CHECK(rel(r.images, x) < 1e-8);
  ReconResult const z = cg_solve(enc, CVec::Zero(enc.n_measurements()), cfg);
  CHECK(z.images.norm() == 0.0);
}

TEST_CASE("cg_solve matches the dense least-squares solution")
{
  Index const T = 4;
  SamplingMasks const masks = fixture::random_masks(16, 16, T, 0.5, 31);
  SubspaceBasis const basis = fixture::random_basis(T, 2, 4);
  Encoder const enc(masks, {}, basis);
  CMat const E = oracle::dense_encoder(16, 16, fixture::as_bits(masks), {}, basis.phi);
  CVec const y = oracle::random_cvec(E.rows(), 5);

  for (double lambda : {0.0, 0.05}) {
    SolverConfig cfg = tight(lambda);
    cfg.tolerance = 1e-13;
    ReconResult const r = cg_solve(enc, y, cfg);
    CVec expect;
    if (lambda == 0.0) {
      expect = Eigen::CompleteOrthogonalDecomposition<CMat>(E).solve(y);
    } else {
      CMat const G = E.adjoint() * E + lambda * CMat::Identity(E.cols(), E.cols());
      expect = G.ldlt().solve(E.adjoint() * y);
    }
    CHECK(rel(oracle::vec(r.images), expect) < 1e-6);
    double const opt = 0.5 * (y - E * expect).squaredNorm() + 0.5 * lambda * expect.squaredNorm();
    CHECK(std::abs(r.objective_trace.back() - opt) < 1e-6 * opt);
    CHECK(nonincreasing(r.objective_trace, 1e-10));

    SolverConfig composed = cfg;
    composed.use_normal_kernel = false;
    CHECK(rel(cg_solve(enc, y, composed).images, r.images) < 1e-9);
  }
}

TEST_CASE("fista_solve reaches the dense lasso optimum")
{
  Index const T = 2;
  SamplingMasks const masks = fixture::random_masks(8, 8, T, 0.6, 12);
  Encoder const enc(masks);
  CMat const E = oracle::dense_encoder(8, 8, fixture::as_bits(masks), {}, {});
  CMat const x0 = oracle::random_cmat(64, T, 2);
  CVec const y = E * oracle::vec(x0) + 0.05 * oracle::random_cvec(E.rows(), 3);
  CMat const W1 = oracle::dense_haar(8, 8).cast<cplx>();
  CMat Wt = CMat::Zero(64 * T, 64 * T);
  for (Index f = 0; f < T; f++) {
    Wt.block(64 * f, 64 * f, 64, 64) = W1;
  }

  for (auto reg : {Regularizer::l1_identity, Regularizer::l1_wavelet}) {
    double const lambda = 0.1;
    ReconResult const r = fista_solve(enc, y, reg, tight(lambda));
    CHECK(nonincreasing(r.objective_trace, 0.0));
    // lasso over transform coefficients c = W x
    CMat const A = reg == Regularizer::l1_identity ? E : CMat(E * Wt.adjoint());
    CVec const c = oracle::lasso_cd(A, y, lambda, 20000);
    double const opt = 0.5 * (y - A * c).squaredNorm() + lambda * l1(c);
    CVec const xr = oracle::vec(r.images);
    CVec const cr = reg == Regularizer::l1_identity ? xr : CVec(Wt * xr);
    double const got = 0.5 * (y - E * xr).squaredNorm() + lambda * l1(cr);
    CHECK(std::abs(got - r.objective_trace.back()) < 1e-12 * got);
    CHECK(std::abs(got - opt) < 1e-6 * opt);
  }
}

TEST_CASE("fista_solve limits")
{
  SamplingMasks const masks = fixture::random_masks(8, 8, 2, 0.5, 8);
  Encoder const enc(masks);
  CVec const y = oracle::random_cvec(enc.n_measurements(), 9);
  ReconResult const cg = cg_solve(enc, y, tight());
  ReconResult const f0 = fista_solve(enc, y, Regularizer::l1_identity, tight(0.0));
  CHECK(rel(f0.images, cg.images) < 1e-4);

  double const big = 2 * apply_adjoint(enc, y).cwiseAbs().maxCoeff();
  ReconResult const fz = fista_solve(enc, y, Regularizer::l1_identity, tight(big));
  CHECK(fz.images.norm() == 0.0);

  SolverConfig bad;
  bad.lambda = -1;
  CHECK_THROWS(fista_solve(enc, y, Regularizer::l1_identity, bad));
  bad = SolverConfig{};
  bad.tolerance = 0;
  CHECK_THROWS(cg_solve(enc, y, bad));
}

TEST_CASE("fista recovers a sparse 1-D signal")
{
  Index const n = 32;
  SamplingMask mask(n, 1);
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  std::mt19937_64 rng(17);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (Index i = 0; i < n / 2; i++) {
    mask.set(idx[static_cast<size_t>(i)], true);
  }
  Encoder const enc{SamplingMasks({mask})};
  CMat x = CMat::Zero(n, 1);
  x(3, 0) = {1.0, 0.5};
  x(14, 0) = {-0.7, 0.2};
  x(27, 0) = {0.0, 1.3};
  CVec const y = apply_forward(enc, x);
  double const lambda = 1e-5;
  ReconResult const r = fista_solve(enc, y, Regularizer::l1_identity, tight(lambda));
  CMat const E = oracle::dense_encoder(n, 1, {std::vector<int>(mask.bits.begin(), mask.bits.end())}, {}, {});
  CVec const oracle_x = oracle::lasso_cd(E, y, lambda, 100000);
  CHECK(rel(oracle::vec(r.images), oracle_x) < 1e-3);
  for (Index i = 0; i < n; i++) {
    bool const on = i == 3 || i == 14 || i == 27;
    CHECK((std::abs(r.images(i, 0)) > 1e-3) == on);
    CHECK((std::abs(oracle_x[i]) > 1e-3) == on);
  }
  CHECK((r.images - x).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("mocco_solve")
{
  Index const T = 6;
  SamplingMasks const masks = fixture::random_masks(16, 16, T, 0.4, 55);
  SubspaceBasis const basis = fixture::random_basis(T, 2, 66);
  Encoder const plain(masks);
  CVec const y = oracle::random_cvec(plain.n_measurements(), 77);

  SolverConfig cfg = tight();
  cfg.tolerance = 1e-12;
  CHECK(rel(mocco_solve(plain, basis, y, cfg).images, cg_solve(plain, y, cfg).images) < 1e-10);

  cfg.mu = 1e8;
  cfg.max_iters = 5000;
  ReconResult const stiff = mocco_solve(plain, basis, y, cfg);
  CMat const x = stiff.images;
  CMat const inside = back_project(project_coefficients(x, basis), basis);
  CHECK((x - inside).norm() / x.norm() < 1e-3);

  cfg.mu = 5.0;
  cfg.max_iters = 20000;
  ReconResult const soft = mocco_solve(plain, basis, y, cfg);
  Encoder const sub(masks, {}, basis);
  CMat const hard = back_project(cg_solve(sub, y, cfg).images, basis);
  double const hard_obj = 0.5 * (y - apply_forward(plain, hard)).squaredNorm();
  CHECK(soft.objective_trace.back() <= hard_obj * (1 + 1e-10));
  CMat const xs = soft.images;
  double const soft_obj = 0.5 * (y - apply_forward(plain, xs)).squaredNorm() +
                          0.5 * cfg.mu * (xs - back_project(project_coefficients(xs, basis), basis)).squaredNorm();
  CHECK(std::abs(soft_obj - soft.objective_trace.back()) < 1e-8 * soft_obj);
  CHECK_THROWS(mocco_solve(sub, basis, y, cfg));
}

TEST_CASE("back projection consistency")
{
  SubspaceBasis const b = fixture::random_basis(10, 3, 1);
  CMat const a = oracle::random_cmat(20, 3, 2);
  CHECK((project_coefficients(back_project(a, b), b) - a).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS(back_project(oracle::random_cmat(20, 4, 1), b));
}

TEST_CASE("power iteration Lipschitz estimate")
{
  SamplingMasks const masks = fixture::random_masks(8, 8, 3, 0.5, 3);
  Encoder const enc(masks, fixture::random_coils(64, 2, 4));
  CMat const E = oracle::dense_encoder(8, 8, fixture::as_bits(masks), enc.maps().maps, {});
  double const top = Eigen::SelfAdjointEigenSolver<CMat>(E.adjoint() * E).eigenvalues().maxCoeff();
  CHECK(std::abs(estimate_lipschitz(enc, 2000) - top) < 1e-6 * top);
}

TEST_CASE("model_based_solve")
{
  Phantom const ph = two_tissue_phantom();
  SequenceParams const seq = SequenceParams::constant(12, 180, 10);
  CMat const truth = contrast_images(ph, seq);
  std::vector<SamplingMask> full(12, SamplingMask(16, 16, true));
  SamplingMasks const fm(full);
  CVec const y = apply_forward(Encoder(fm), truth);
  ModelBasedConfig cfg;

  // background has rho = 0, so its T2 is free; park it inside the bounds
  RVec t2_start = ph.t2_map();
  for (Index v = 0; v < ph.n_voxels(); v++) {
    if (ph.labels[static_cast<size_t>(v)] == 0) {
      t2_start[v] = 100.0;
    }
  }
  ModelBasedInit init{ph.rho_map(), t2_start};
  ModelBasedResult const at = model_based_solve(fm, {}, seq, y, init, cfg);
  CHECK(at.converged);
  CHECK(at.iterations <= 1);
  CHECK((at.t2 - t2_start).cwiseAbs().maxCoeff() < 1e-9);

  auto t2_error = [&](ModelBasedResult const &r, double *nrmse) {
    double worst = 0, num = 0, den = 0;
    for (Index v = 0; v < ph.n_voxels(); v++) {
      if (ph.labels[static_cast<size_t>(v)] == 0) {
        continue;
      }
      double const t = ph.t2_map()[v];
      worst = std::max(worst, std::abs(r.t2[v] - t) / t);
      num += std::pow(r.t2[v] - t, 2);
      den += t * t;
    }
    *nrmse = std::sqrt(num / den);
    return worst;
  };

  ModelBasedInit off{CVec::Zero(ph.n_voxels()), 1.5 * t2_start};
  for (Index v = 0; v < ph.n_voxels(); v++) {
    off.rho[v] = ph.labels[static_cast<size_t>(v)] ? cplx(0.5) : cplx(0.0);
  }
  ModelBasedResult const rec = model_based_solve(fm, {}, seq, y, off, cfg);
  double nrmse = 0;
  CHECK(t2_error(rec, &nrmse) < 0.005);
  CHECK(nonincreasing(rec.objective_trace, 0.0));

  SamplingMasks const half = fixture::random_masks(16, 16, 12, 0.5, 101);
  CVec const yh = apply_forward(Encoder(half), truth);
  ModelBasedResult const rh = model_based_solve(half, {}, seq, yh, off, cfg);
  t2_error(rh, &nrmse);
  CHECK(nrmse < 0.05);
  CHECK(nonincreasing(rh.objective_trace, 0.0));

  ModelBasedInit wrong{CVec::Zero(3), RVec::Ones(3)};
  CHECK_THROWS(model_based_solve(fm, {}, seq, y, wrong, cfg));
}
