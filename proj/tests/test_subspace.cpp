#include <doctest.h>

#include <algorithm>

#include "oracles.hpp"
#include "spinshuffle/subspace.hpp"

using namespace spinshuffle;

namespace {

double residual(CMat const &X, CMat const &Q)
{
  return (X - Q * (Q.adjoint() * X)).norm() / X.norm();
}

} // namespace

TEST_CASE("sample_prior")
{
  TissuePrior p;
  p.seed = 9;
  auto const a = sample_prior(p, 50);
  auto const b = sample_prior(p, 50);
  REQUIRE(a.size() == 50);
  for (size_t i = 0; i < a.size(); i++) {
    CHECK(a[i].t2 == b[i].t2);
    CHECK(a[i].t1 == b[i].t1);
    CHECK(a[i].t2 <= a[i].t1);
    CHECK(a[i].rho == cplx(1.0));
  }

  TissuePrior ex;
  ex.sampling = TissuePrior::Sampling::explicit_list;
  ex.explicit_tissues = {{1.0, 800, 60, 1.0}, {1.0, 1200, 90, 1.0}, {1.0, 600, 30, 1.0}};
  auto const e = sample_prior(ex, 3);
  for (size_t i = 0; i < 3; i++) {
    CHECK(e[i].t2 == ex.explicit_tissues[i].t2);
  }

  TissuePrior wide;
  wide.t1_range = {1e4, 1e4};
  wide.seed = 3;
  auto const big = sample_prior(wide, 10000);
  std::vector<double> t2;
  for (auto const &t : big) {
    t2.push_back(t.t2);
  }
  std::nth_element(t2.begin(), t2.begin() + 5000, t2.end());
  CHECK(std::abs(t2[5000] - std::sqrt(20.0 * 400.0)) < 0.05 * std::sqrt(8000.0));

  TissuePrior bad;
  bad.t2_range = {50, 10};
  CHECK_THROWS(sample_prior(bad, 3));
}

TEST_CASE("build_ensemble")
{
  SequenceParams const seq = SequenceParams::constant(32, 180, 10);
  TissuePrior p;
  p.seed = 1;
  auto const tissues = sample_prior(p, 256);
  EnsembleMatrix const X = build_ensemble(tissues, seq);
  REQUIRE(X.data.rows() == 32);
  REQUIRE(X.data.cols() == 256);
  double worst = 0;
  for (Index l = 0; l < 256; l++) {
    CVec const expect = oracle::cpmg(1.0, tissues[static_cast<size_t>(l)].t2, 10, 32);
    worst = std::max(worst, (X.data.col(l) - expect).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-12);

  TissueParams t;
  EnsembleMatrix const twin = build_ensemble({t, t}, seq);
  CHECK(twin.data.col(0) == twin.data.col(1));
  SubspaceBasis const one = compute_basis(build_ensemble({t}, seq), 1);
  CHECK(projection_error(build_ensemble({t}, seq), one, ProjectionMetric::frobenius_relative) < 1e-14);
}

TEST_CASE("compute_basis properties")
{
  CMat const X = oracle::random_cmat(12, 40, 5);
  Eigen::JacobiSVD<CMat> svd(X);
  RVec const sv = svd.singularValues();
  double prev = 2.0;
  for (Index K = 1; K <= 12; K++) {
    SubspaceBasis const b = compute_basis(X, K);
    CHECK((b.phi.adjoint() * b.phi - CMat::Identity(K, K)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(b.singular_values.size() == 12);
    CHECK((b.singular_values - sv).cwiseAbs().maxCoeff() < 1e-10);
    for (Index k = 0; k < K; k++) {
      // first significant entry real-positive
      Index j = 0;
      while (std::abs(b.phi(j, k)) <= 1e-12) {
        j++;
      }
      CHECK(b.phi(j, k).real() > 0);
      CHECK(std::abs(b.phi(j, k).imag()) < 1e-14);
    }
    double const fro = projection_error(X, b, ProjectionMetric::frobenius_relative);
    double const tail = std::sqrt(sv.tail(12 - K).squaredNorm() / sv.squaredNorm());
    CHECK(std::abs(fro - tail) < 1e-12);
    CHECK(std::abs(fro - residual(X, b.phi)) < 1e-12);
    double const worst = projection_error(X, b, ProjectionMetric::worst_column_relative);
    CHECK(worst >= fro - 1e-15);
    CHECK(fro <= prev + 1e-15);
    prev = fro;
    // Eckart-Young against random competitors
    for (std::uint64_t s = 0; s < 5; s++) {
      CMat const Q = oracle::random_cmat(12, K, 100 + s).householderQr().householderQ() *
                     CMat::Identity(12, K);
      CHECK(fro <= residual(X, Q) + 1e-14);
    }
  }
  CHECK(projection_error(X, compute_basis(X, 12), ProjectionMetric::frobenius_relative) < 1e-10);
  CHECK(compute_basis(X, 4).phi == compute_basis(X, 4).phi);
  CHECK_THROWS(compute_basis(X, 0));
  CHECK_THROWS(compute_basis(X, 13));
  CHECK_THROWS(projection_error(CMat::Zero(12, 3), compute_basis(X, 2), ProjectionMetric::frobenius_relative));
}

TEST_CASE("FSE ensemble under the default prior is low rank")
{
  TissuePrior p;
  p.seed = 1;
  EnsembleMatrix const X = build_ensemble(sample_prior(p, 256), SequenceParams::constant(32, 180, 10));
  CHECK(projection_error(X, compute_basis(X, 4), ProjectionMetric::frobenius_relative) < 0.01);
  CHECK(projection_error(X, compute_basis(X, 3), ProjectionMetric::frobenius_relative) < 0.02);
}
