#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "spinshuffle/subspace.hpp"

namespace spinshuffle {

struct FitBounds {
  double t2_min = 5.0;
  double t2_max = 2000.0;
  double eta_min = 0.5;
  double eta_max = 1.5;
};

struct FitOptions {
  double t1_nominal = 1000.0;
  double eta_nominal = 1.0;
  bool fit_eta = false;
  double t2_init = 100.0;
  FitBounds bounds;
  Index coarse_points = 48;
  Index max_gn_steps = 20;
};

struct FitResult {
  cplx rho{0.0, 0.0};
  double t1 = 0.0;
  double t2 = 0.0;
  double eta = 1.0;
  double residual = 0.0; // 0.5 * ||data - rho * model||^2
  bool converged = false;
  bool t2_defined = true;
  Index atom = -1; // dictionary matches only
};

// Variable-projection fitter for one sequence. rho is eliminated in closed
// form; T2 (and optionally eta) is found by a log-spaced coarse scan,
// golden-section refinement in log T2, then a Gauss-Newton polish with step
// halving. With a basis, data and model live in coefficient space.
class VoxelFitter {
public:
  VoxelFitter(SequenceParams seq, FitOptions opts, std::optional<SubspaceBasis> basis = std::nullopt);

  FitResult fit(CVec const &data) const;
  FitResult fit(CVec const &data, double t2_init) const;

  // Unit-PD model in the fitter's data space.
  CVec model(double t2, double eta) const;
  // Half squared residual with rho at its optimum, and that rho.
  double projected_cost(CVec const &data, double t2, double eta, cplx *rho = nullptr) const;

  Index data_length() const;
  FitOptions const &options() const { return opts_; }
  double t2_upper() const { return t2_hi_; }

private:
  CVec to_data_space(CVec const &evolution) const;
  CVec t2_derivative(double t2, double eta) const;
  CVec eta_derivative(double t2, double eta) const;

  SequenceParams seq_;
  FitOptions opts_;
  std::optional<SubspaceBasis> basis_;
  double t2_hi_;
  std::vector<double> grid_t2_;
  std::vector<CVec> grid_atoms_;
};

FitResult fit_voxel_nlls(CVec const &signal, SequenceParams const &seq, FitOptions const &opts);
FitResult fit_voxel_subspace(CVec const &alpha, SubspaceBasis const &basis,
                             SequenceParams const &seq, FitOptions const &opts);

struct Dictionary {
  CMat atoms; // T x D, unit 2-norm columns
  std::vector<TissueParams> params;
  std::optional<CMat> compressed; // K x D, Phi_K^H atoms

  Index size() const { return atoms.cols(); }
};

Dictionary build_dictionary(std::vector<TissueParams> const &tissues, SequenceParams const &seq,
                            std::optional<SubspaceBasis> const &basis = std::nullopt);

enum class MatchSpace { time, coefficients };

// argmax_d |<atom_d, data>|, lowest index on ties; rho = <atom_d, data>.
FitResult dictionary_match(CVec const &data, Dictionary const &dict,
                           MatchSpace space = MatchSpace::time);

enum class FitMethod { nlls, subspace, dictionary };

struct ParameterMaps {
  CVec rho;
  RVec t2;
  RVec residual;
  std::vector<std::uint8_t> failed;
};

// Independent per-voxel fits of an N x frames stack (images for nlls and
// time-domain dictionaries, coefficients for subspace and compressed ones).
ParameterMaps fit_map(CMat const &stack, std::optional<SubspaceBasis> const &basis,
                      SequenceParams const &seq, FitMethod method, FitOptions const &opts,
                      Dictionary const *dict = nullptr);

ParameterMaps assemble_maps(std::vector<FitResult> const &fits);

} // namespace spinshuffle
