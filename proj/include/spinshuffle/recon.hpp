#pragma once

#include <vector>

#include "spinshuffle/encoding.hpp"
#include "spinshuffle/transform.hpp"

namespace spinshuffle {

struct SolverConfig {
  enum class StepRule { fixed, power_iteration };

  Index max_iters = 500;
  double tolerance = 1e-8;
  double lambda = 0.0;
  double mu = 0.0;
  StepRule step_rule = StepRule::power_iteration;
  double fixed_step = 1.0;
  // cg_solve with a basis: use the per-location kernel (true) or the composed
  // adjoint(forward(x)) operator (false).
  bool use_normal_kernel = true;

  void validate() const;
};

struct ReconResult {
  CMat images; // coefficient images with a basis, echo images otherwise
  std::vector<double> objective_trace;
  Index iterations = 0;
  bool converged = false;
};

// Conjugate gradient on (A^H A + lambda I) x = A^H y. The trace records
// 0.5||y - Ax||^2 + 0.5 lambda ||x||^2, starting with x = 0.
ReconResult cg_solve(Encoder const &enc, CVec const &y, SolverConfig const &cfg);

enum class Regularizer { l1_identity, l1_wavelet };

// Proximal gradient with momentum for 0.5||y - Ax||^2 + lambda ||W x||_1 with
// W orthonormal (identity or Haar). Momentum restarts whenever the objective
// would increase, so the trace is nonincreasing.
ReconResult fista_solve(Encoder const &enc, CVec const &y, Regularizer reg, SolverConfig const &cfg);

// 0.5||y - Ax||^2 + 0.5 mu ||x - Phi Phi^H x||^2 over the full echo stack.
ReconResult mocco_solve(Encoder const &enc_no_basis, SubspaceBasis const &basis, CVec const &y,
                        SolverConfig const &cfg);

// Largest eigenvalue of A^H A by power iteration from a fixed start vector.
double estimate_lipschitz(Encoder const &enc, Index max_iters = 200);

// x = alpha Phi^T (N x T) and its left inverse alpha = x conj(Phi).
CMat back_project(CMat const &coeffs, SubspaceBasis const &basis);
CMat project_coefficients(CMat const &images, SubspaceBasis const &basis);

struct ModelBasedConfig {
  double t1 = 1000.0; // held fixed
  double eta = 1.0;   // held fixed
  double t2_min = 5.0;
  double t2_max = 2000.0;
  Index max_iters = 30;
  double tolerance = 1e-10; // relative cost decrease
  Index inner_iters = 100;
  double damping = 1e-9;
};

struct ModelBasedInit {
  CVec rho;
  RVec t2;
};

struct ModelBasedResult {
  CVec rho;
  RVec t2;
  std::vector<double> objective_trace;
  Index iterations = 0;
  bool converged = false;
  double final_residual = 0.0;
};

// Gauss-Newton over per-voxel (rho, T2) for y = E[rho f(T2)] with step-halving
// line search and T2 box projection.
ModelBasedResult model_based_solve(SamplingMasks const &masks, SensitivityMaps const &maps,
                                   SequenceParams const &seq, CVec const &y,
                                   ModelBasedInit const &init, ModelBasedConfig const &cfg);

} // namespace spinshuffle
