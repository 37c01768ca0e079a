#include "spinshuffle/recon.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>

#include "first_error.hpp"

namespace spinshuffle {

namespace {

double real_dot(CMat const &a, CMat const &b) { return (a.conjugate().cwiseProduct(b)).sum().real(); }

using NormalOp = std::function<CMat(CMat const &)>;

// CG for an SPD operator; x starts at zero.
ReconResult conjugate_gradient(NormalOp const &op, CMat const &b, double half_y_sq,
                               SolverConfig const &cfg)
{
  ReconResult res;
  res.images = CMat::Zero(b.rows(), b.cols());
  res.objective_trace.push_back(half_y_sq);
  double const bnorm = b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  CMat r = b;
  CMat p = r;
  double rr = r.squaredNorm();
  double prev = std::sqrt(rr);
  int growth = 0;
  double const eps = std::numeric_limits<double>::epsilon();
  double top_curvature = 0.0;
  for (Index it = 1; it <= cfg.max_iters; it++) {
    CMat const Ap = op(p);
    double const pAp = real_dot(p, Ap);
    double const pp = p.squaredNorm();
    if (!(pAp > 0.0) && std::isfinite(pAp) && -pAp <= 1e3 * eps * top_curvature * pp) {
      // curvature below the operator's round-off: the iterate is as good as this precision allows
      break;
    }
    top_curvature = std::max(top_curvature, pAp / pp);
    if (!(pAp > 0.0) || !std::isfinite(pAp)) {
      throw SolverFailure("conjugate gradient hit a non-positive curvature " + std::to_string(pAp) +
                          " at iteration " + std::to_string(it));
    }
    double const a = rr / pAp;
    res.images += a * p;
    r -= a * Ap;
    double const rr_new = r.squaredNorm();
    res.iterations = it;
    res.objective_trace.push_back(half_y_sq - 0.5 * real_dot(res.images, b + r));
    double const rn = std::sqrt(rr_new);
    if (!std::isfinite(rn)) {
      throw SolverFailure("conjugate gradient residual became non-finite");
    }
    growth = rn > prev ? growth + 1 : 0;
    if (growth >= 10) {
      throw SolverFailure("conjugate gradient residual grew for 10 consecutive iterations");
    }
    prev = rn;
    if (rn / bnorm < cfg.tolerance) {
      res.converged = true;
      break;
    }
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  return res;
}

CMat soft_threshold(CMat const &c, double thr)
{
  CMat out(c.rows(), c.cols());
  for (Index j = 0; j < c.cols(); j++) {
    for (Index i = 0; i < c.rows(); i++) {
      double const m = std::abs(c(i, j));
      out(i, j) = m > thr ? c(i, j) * ((m - thr) / m) : cplx{0.0};
    }
  }
  return out;
}

double l1(CMat const &c) { return c.cwiseAbs().sum(); }

} // namespace

void SolverConfig::validate() const
{
  if (!(tolerance > 0.0)) {
    throw std::invalid_argument("solver tolerance must be positive");
  }
  if (!(lambda >= 0.0) || !(mu >= 0.0)) {
    throw std::invalid_argument("regularization weights must be nonnegative");
  }
  if (max_iters < 1) {
    throw std::invalid_argument("solver needs at least one iteration");
  }
}

ReconResult cg_solve(Encoder const &enc, CVec const &y, SolverConfig const &cfg)
{
  cfg.validate();
  CMat const b = enc.adjoint(y);
  double const lambda = cfg.lambda;
  NormalOp op;
  if (enc.has_basis() && !cfg.use_normal_kernel) {
    op = [&](CMat const &x) { return CMat(enc.adjoint(enc.forward(x)) + lambda * x); };
  } else {
    op = [&](CMat const &x) { return CMat(enc.normal(x) + lambda * x); };
  }
  return conjugate_gradient(op, b, 0.5 * y.squaredNorm(), cfg);
}

double estimate_lipschitz(Encoder const &enc, Index max_iters)
{
  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> gauss;
  CMat v(enc.n_voxels(), enc.domain_frames());
  for (Index j = 0; j < v.cols(); j++) {
    for (Index i = 0; i < v.rows(); i++) {
      double const re = gauss(rng);
      double const im = gauss(rng);
      v(i, j) = cplx(re, im);
    }
  }
  v /= v.norm();
  double L = 0.0;
  for (Index it = 0; it < max_iters; it++) {
    CMat const w = enc.normal(v);
    double const Ln = w.norm();
    if (!(Ln > 0.0) || !std::isfinite(Ln)) {
      return Ln;
    }
    v = w / Ln;
    if (std::abs(Ln - L) <= 1e-10 * Ln) {
      return Ln;
    }
    L = Ln;
  }
  return L;
}

ReconResult fista_solve(Encoder const &enc, CVec const &y, Regularizer reg, SolverConfig const &cfg)
{
  cfg.validate();
  double L = cfg.step_rule == SolverConfig::StepRule::fixed ? 1.0 / cfg.fixed_step
                                                              : estimate_lipschitz(enc);
  if (!std::isfinite(L) || !(L > 0.0)) {
    throw SolverFailure("FISTA step rule produced a non-finite Lipschitz estimate");
  }
  SparsifyingTransform const W(reg == Regularizer::l1_wavelet ? SparsifyingTransform::Kind::haar
                                                              : SparsifyingTransform::Kind::identity,
                               enc.nx(), enc.ny());
  double const lambda = cfg.lambda;
  CMat const aty = enc.adjoint(y);

  auto objective = [&](CMat const &x) {
    return 0.5 * (y - enc.forward(x)).squaredNorm() + lambda * l1(W.forward(x));
  };
  auto prox_step = [&](CMat const &from) {
    CMat const grad = enc.normal(from) - aty;
    return W.inverse(soft_threshold(W.forward(CMat(from - grad / L)), lambda / L));
  };

  ReconResult res;
  CMat x = CMat::Zero(enc.n_voxels(), enc.domain_frames());
  CMat z = x;
  double t = 1.0;
  double fx = objective(x);
  res.objective_trace.push_back(fx);
  for (Index it = 1; it <= cfg.max_iters; it++) {
    CMat xn = prox_step(z);
    double fn = objective(xn);
    if (fn > fx) {
      // Restart from x with a plain proximal step; grow L if even that fails.
      t = 1.0;
      for (int grow = 0; grow <= 30; grow++) {
        xn = prox_step(x);
        fn = objective(xn);
        if (fn <= fx) {
          break;
        }
        L *= 2.0;
      }
      if (fn > fx) {
        throw SolverFailure("FISTA could not find a descent step");
      }
    }
    double const tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = xn + ((t - 1.0) / tn) * (xn - x);
    x = std::move(xn);
    t = tn;
    double const rel = std::abs(fx - fn) / std::max(fx, 1e-300);
    fx = fn;
    res.objective_trace.push_back(fx);
    res.iterations = it;
    if (rel < cfg.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.images = std::move(x);
  return res;
}

ReconResult mocco_solve(Encoder const &enc_no_basis, SubspaceBasis const &basis, CVec const &y,
                        SolverConfig const &cfg)
{
  cfg.validate();
  if (enc_no_basis.has_basis()) {
    throw std::invalid_argument("subspace-penalty reconstruction expects an encoder without a basis");
  }
  if (basis.T() != enc_no_basis.n_echoes()) {
    throw std::invalid_argument("basis and encoder disagree on echo count");
  }
  CMat const phi_conj = basis.phi.conjugate();
  CMat const phi_t = basis.phi.transpose();
  double const mu = cfg.mu;
  NormalOp op = [&](CMat const &x) {
    return CMat(enc_no_basis.normal(x) + mu * (x - (x * phi_conj) * phi_t));
  };
  return conjugate_gradient(op, enc_no_basis.adjoint(y), 0.5 * y.squaredNorm(), cfg);
}

CMat back_project(CMat const &coeffs, SubspaceBasis const &basis)
{
  if (coeffs.cols() != basis.K()) {
    throw std::invalid_argument("coefficient stack does not match the basis size");
  }
  return coeffs * basis.phi.transpose();
}

CMat project_coefficients(CMat const &images, SubspaceBasis const &basis)
{
  if (images.cols() != basis.T()) {
    throw std::invalid_argument("image stack does not match the basis length");
  }
  return images * basis.phi.conjugate();
}

namespace {

struct VoxelModel {
  CMat f;  // N x T unit-PD evolutions
  CMat df; // N x T dF/dT2
};

VoxelModel evaluate_voxels(SequenceParams const &seq, RVec const &t2, ModelBasedConfig const &cfg,
                           bool with_derivative)
{
  Index const N = t2.size();
  Index const T = seq.n_echoes();
  VoxelModel m;
  m.f.resize(N, T);
  if (with_derivative) {
    m.df.resize(N, T);
  }
  FirstError err;
#pragma omp parallel for schedule(dynamic, 16)
  for (Index v = 0; v < N; v++) {
    try {
      TissueParams tissue;
      tissue.t1 = cfg.t1;
      tissue.t2 = t2[v];
      tissue.eta = cfg.eta;
      if (with_derivative) {
        CMat const J = signal_jacobian(tissue, seq, {SignalParam::rho(), SignalParam::t2()});
        m.f.row(v) = J.col(0).transpose();
        m.df.row(v) = J.col(1).transpose();
      } else {
        m.f.row(v) = simulate_fse(tissue, seq).transpose();
      }
    } catch (...) {
      err.capture();
    }
  }
  err.rethrow();
  return m;
}

} // namespace

ModelBasedResult model_based_solve(SamplingMasks const &masks, SensitivityMaps const &maps,
                                   SequenceParams const &seq, CVec const &y,
                                   ModelBasedInit const &init, ModelBasedConfig const &cfg)
{
  seq.validate();
  Encoder const enc(masks, maps);
  if (enc.n_echoes() != seq.n_echoes()) {
    throw std::invalid_argument("masks and sequence disagree on echo count");
  }
  Index const N = enc.n_voxels();
  if (init.rho.size() != N || init.t2.size() != N) {
    throw std::invalid_argument("model-based initial maps do not match the grid");
  }
  double const t2_lo = cfg.t2_min;
  double const t2_hi = std::min(cfg.t2_max, cfg.t1);
  if (!(t2_lo > 0.0 && t2_lo < t2_hi)) {
    throw std::invalid_argument("model-based T2 bounds are empty");
  }
  for (Index v = 0; v < N; v++) {
    if (!(init.t2[v] >= t2_lo && init.t2[v] <= t2_hi)) {
      throw std::invalid_argument("initial T2 map leaves the bounds at voxel " + std::to_string(v));
    }
  }

  ModelBasedResult res;
  res.rho = init.rho;
  res.t2 = init.t2;

  auto cost_of = [&](CVec const &rho, CMat const &f) {
    CMat const x = rho.asDiagonal() * f;
    CVec const r = y - enc.forward(x);
    return std::make_pair(0.5 * r.squaredNorm(), r);
  };

  VoxelModel model = evaluate_voxels(seq, res.t2, cfg, true);
  auto [cost, resid] = cost_of(res.rho, model.f);
  if (!std::isfinite(cost)) {
    throw SolverFailure("model-based residual is not finite at the initial guess");
  }
  res.objective_trace.push_back(cost);
  double const cost_floor = 1e-28 * std::max(1.0, 0.5 * y.squaredNorm());

  for (Index it = 0; it < cfg.max_iters; it++) {
    if (cost <= cost_floor) {
      res.converged = true;
      break;
    }
    // Per-voxel Jacobian blocks D_v = [f, i f, rho df] (T x 3).
    CMat const g = enc.adjoint(resid); // N x T
    RMat grad(N, 3);
    std::vector<Eigen::Matrix3d> precond(static_cast<size_t>(N));
    double diag_max = 0.0;
    for (Index v = 0; v < N; v++) {
      CVec const f = model.f.row(v).transpose();
      CVec const d = res.rho[v] * model.df.row(v).transpose();
      CVec const gv = g.row(v).transpose();
      grad(v, 0) = f.dot(gv).real();
      grad(v, 1) = f.dot(gv).imag();
      grad(v, 2) = d.dot(gv).real();
      Eigen::Matrix3d P;
      P(0, 0) = f.squaredNorm();
      P(1, 1) = P(0, 0);
      P(2, 2) = d.squaredNorm();
      P(0, 1) = P(1, 0) = 0.0;
      P(0, 2) = P(2, 0) = f.dot(d).real();
      P(1, 2) = P(2, 1) = f.dot(d).imag();
      precond[static_cast<size_t>(v)] = P;
      diag_max = std::max(diag_max, P.diagonal().maxCoeff());
    }
    if (grad.norm() <= 1e-14 * std::sqrt(2.0 * cost) * std::max(1.0, std::sqrt(diag_max))) {
      res.converged = true;
      break;
    }
    double const delta_reg = cfg.damping * std::max(diag_max, 1e-300);
    for (auto &P : precond) {
      P += delta_reg * Eigen::Matrix3d::Identity();
      P = P.inverse().eval();
    }

    auto apply_jtj = [&](RMat const &p) {
      CMat v(N, seq.n_echoes());
      for (Index r = 0; r < N; r++) {
        v.row(r) = (cplx(p(r, 0), p(r, 1)) * model.f.row(r)) + (p(r, 2) * res.rho[r]) * model.df.row(r);
      }
      CMat const w = enc.normal(v);
      RMat out(N, 3);
      for (Index r = 0; r < N; r++) {
        cplx const fw = model.f.row(r).conjugate().dot(w.row(r));
        cplx const dw = (res.rho[r] * model.df.row(r)).conjugate().dot(w.row(r));
        out(r, 0) = fw.real() + delta_reg * p(r, 0);
        out(r, 1) = fw.imag() + delta_reg * p(r, 1);
        out(r, 2) = dw.real() + delta_reg * p(r, 2);
      }
      return out;
    };
    auto apply_precond = [&](RMat const &r) {
      RMat z(N, 3);
      for (Index v = 0; v < N; v++) {
        z.row(v) = (precond[static_cast<size_t>(v)] * r.row(v).transpose()).transpose();
      }
      return z;
    };

    // Block-Jacobi preconditioned CG for the Gauss-Newton step.
    RMat step = RMat::Zero(N, 3);
    RMat r = grad;
    RMat z = apply_precond(r);
    RMat p = z;
    double rz = (r.cwiseProduct(z)).sum();
    double const r0 = r.norm();
    for (Index k = 0; k < cfg.inner_iters; k++) {
      RMat const Ap = apply_jtj(p);
      double const pAp = (p.cwiseProduct(Ap)).sum();
      if (!(pAp > 0.0)) {
        break;
      }
      double const a = rz / pAp;
      step += a * p;
      r -= a * Ap;
      if (r.norm() <= 1e-12 * r0) {
        break;
      }
      z = apply_precond(r);
      double const rz_new = (r.cwiseProduct(z)).sum();
      p = z + (rz_new / rz) * p;
      rz = rz_new;
    }

    double s = 1.0;
    bool accepted = false;
    for (int h = 0; h <= 20; h++, s *= 0.5) {
      CVec rho_n(N);
      RVec t2_n(N);
      for (Index v = 0; v < N; v++) {
        rho_n[v] = res.rho[v] + s * cplx(step(v, 0), step(v, 1));
        t2_n[v] = std::clamp(res.t2[v] + s * step(v, 2), t2_lo, t2_hi);
      }
      VoxelModel const trial = evaluate_voxels(seq, t2_n, cfg, false);
      auto [c_n, r_n] = cost_of(rho_n, trial.f);
      if (!std::isfinite(c_n)) {
        throw SolverFailure("model-based residual became NaN at iteration " + std::to_string(it + 1));
      }
      if (c_n < cost) {
        double const rel = (cost - c_n) / cost;
        res.rho = rho_n;
        res.t2 = t2_n;
        cost = c_n;
        resid = r_n;
        accepted = true;
        res.iterations = it + 1;
        res.objective_trace.push_back(cost);
        if (rel < cfg.tolerance) {
          res.converged = true;
        }
        break;
      }
    }
    if (!accepted) {
      // No descent along the Gauss-Newton direction: stationary to working precision.
      res.converged = true;
      break;
    }
    if (res.converged) {
      break;
    }
    model = evaluate_voxels(seq, res.t2, cfg, true);
  }
  res.final_residual = cost;
  return res;
}

} // namespace spinshuffle
