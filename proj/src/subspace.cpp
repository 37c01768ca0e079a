#include "spinshuffle/subspace.hpp"

#include <cmath>
#include <random>
#include <string>

#include "spinshuffle/kernels.hpp"

namespace spinshuffle {

namespace {

void check_range(std::pair<double, double> const &r, char const *name)
{
  if (!(r.first > 0.0) || !(r.second >= r.first)) {
    throw std::invalid_argument(std::string("invalid prior range for ") + name);
  }
}

} // namespace

std::vector<TissueParams> sample_prior(TissuePrior const &prior, Index L)
{
  if (L < 1) {
    throw std::invalid_argument("sample_prior needs L >= 1");
  }
  if (prior.sampling == TissuePrior::Sampling::explicit_list) {
    if (prior.explicit_tissues.empty()) {
      throw std::invalid_argument("explicit prior has no tissues");
    }
    if (static_cast<Index>(prior.explicit_tissues.size()) != L) {
      throw std::invalid_argument("explicit prior lists " +
                                  std::to_string(prior.explicit_tissues.size()) +
                                  " tissues but L = " + std::to_string(L));
    }
    return prior.explicit_tissues;
  }
  check_range(prior.t1_range, "T1");
  check_range(prior.t2_range, "T2");
  if (prior.t2_range.first > prior.t1_range.second) {
    throw std::invalid_argument("prior has no tissue with T2 <= T1");
  }

  std::mt19937_64 rng(prior.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  bool const log_scale = prior.sampling == TissuePrior::Sampling::log_uniform;
  auto draw = [&](std::pair<double, double> const &r) {
    double const u = unit(rng);
    if (log_scale) {
      return std::exp(std::log(r.first) + u * (std::log(r.second) - std::log(r.first)));
    }
    return r.first + u * (r.second - r.first);
  };

  std::vector<TissueParams> out;
  out.reserve(static_cast<size_t>(L));
  while (static_cast<Index>(out.size()) < L) {
    TissueParams t;
    t.t1 = draw(prior.t1_range);
    t.t2 = draw(prior.t2_range);
    if (t.t2 <= t.t1) {
      out.push_back(t);
    }
  }
  return out;
}

EnsembleMatrix build_ensemble(std::vector<TissueParams> const &tissues, SequenceParams const &seq)
{
  if (tissues.empty()) {
    throw std::invalid_argument("ensemble needs at least one tissue");
  }
  seq.validate();
  return {kernels::omp::ensemble(tissues, seq), tissues};
}

SubspaceBasis compute_basis(CMat const &X, Index K)
{
  Index const rank = std::min(X.rows(), X.cols());
  if (K < 1 || K > rank) {
    throw std::invalid_argument("basis size K=" + std::to_string(K) + " outside [1, " +
                                std::to_string(rank) + "]");
  }
  Eigen::JacobiSVD<CMat> svd(X, Eigen::ComputeThinU);
  SubspaceBasis basis;
  basis.singular_values = svd.singularValues();
  basis.phi = svd.matrixU().leftCols(K);
  for (Index k = 0; k < K; k++) {
    for (Index i = 0; i < basis.phi.rows(); i++) {
      cplx const v = basis.phi(i, k);
      if (std::abs(v) > 1e-12) {
        basis.phi.col(k) *= std::conj(v) / std::abs(v);
        basis.phi(i, k) = std::abs(v);
        break;
      }
    }
  }
  return basis;
}

SubspaceBasis compute_basis(EnsembleMatrix const &X, Index K) { return compute_basis(X.data, K); }

double projection_error(CMat const &X, SubspaceBasis const &basis, ProjectionMetric metric)
{
  if (X.rows() != basis.T()) {
    throw std::invalid_argument("ensemble and basis disagree on echo count");
  }
  double const total = X.norm();
  if (total == 0.0) {
    throw std::invalid_argument("projection error of a zero ensemble is undefined");
  }
  CMat const resid = X - basis.phi * (basis.phi.adjoint() * X);
  if (metric == ProjectionMetric::frobenius_relative) {
    return resid.norm() / total;
  }
  double worst = 0.0;
  for (Index l = 0; l < X.cols(); l++) {
    double const n = X.col(l).norm();
    if (n == 0.0) {
      continue;
    }
    worst = std::max(worst, resid.col(l).norm() / n);
  }
  return worst;
}

double projection_error(EnsembleMatrix const &X, SubspaceBasis const &basis,
                        ProjectionMetric metric)
{
  return projection_error(X.data, basis, metric);
}

} // namespace spinshuffle
