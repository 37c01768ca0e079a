#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "spinshuffle/spin_sim.hpp"

namespace spinshuffle {

struct TissuePrior {
  enum class Sampling { log_uniform, uniform, explicit_list };

  std::pair<double, double> t1_range{500.0, 3000.0};
  std::pair<double, double> t2_range{20.0, 400.0};
  Sampling sampling = Sampling::log_uniform;
  std::vector<TissueParams> explicit_tissues;
  std::uint64_t seed = 0;
};

// Draws L tissues (rho = 1). Pairs with T2 > T1 are redrawn.
std::vector<TissueParams> sample_prior(TissuePrior const &prior, Index L);

struct EnsembleMatrix {
  CMat data; // T x L, one signal evolution per column
  std::vector<TissueParams> tissues;
};

// Columns are unit-PD evolutions of each tissue under seq.
EnsembleMatrix build_ensemble(std::vector<TissueParams> const &tissues, SequenceParams const &seq);

struct SubspaceBasis {
  CMat phi;              // T x K, orthonormal columns
  RVec singular_values;  // all min(T, L) values, nonincreasing

  Index T() const { return phi.rows(); }
  Index K() const { return phi.cols(); }
};

// Top-K left singular vectors. Each column is rotated so its first entry with
// magnitude above 1e-12 is real-positive.
SubspaceBasis compute_basis(EnsembleMatrix const &X, Index K);
SubspaceBasis compute_basis(CMat const &X, Index K);

enum class ProjectionMetric { frobenius_relative, worst_column_relative };

double projection_error(CMat const &X, SubspaceBasis const &basis, ProjectionMetric metric);
double projection_error(EnsembleMatrix const &X, SubspaceBasis const &basis,
                        ProjectionMetric metric);

} // namespace spinshuffle
