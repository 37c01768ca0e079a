#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinshuffle/config.hpp"

namespace spinshuffle {

// A pipeline stage failed; what() reads "<stage>: <cause>".
class StageFailure : public std::runtime_error {
public:
  StageFailure(std::string stage, std::string const &cause);
  std::string const &stage() const { return stage_; }

private:
  std::string stage_;
};

using Logger = std::function<void(std::string const &)>;

struct RegionStats {
  int region = 0;
  double t1 = 0.0;
  double t2_true = 0.0;
  double t2_mean = 0.0;
  double t2_std = 0.0;
  double bias_percent = 0.0;
  Index voxels = 0;
  Index failed = 0;
};

struct PipelineReport {
  Phantom phantom;
  SubspaceBasis basis;
  double basis_error = 0.0; // relative Frobenius residual of the ensemble
  SamplingMasks masks;
  CMat truth;  // N x T noiseless echo images
  CVec kspace; // measurements
  ReconResult recon;
  CMat images; // back-projected N x T stack
  ParameterMaps maps;
  double image_nrmse = 0.0;
  std::vector<RegionStats> regions;
};

// Individual stages, each deterministic given the config.
Phantom pipeline_phantom(PipelineConfig const &cfg);
EnsembleMatrix pipeline_ensemble(PipelineConfig const &cfg);
SamplingMasks pipeline_masks(PipelineConfig const &cfg);
ReconResult pipeline_reconstruct(PipelineConfig const &cfg, SamplingMasks const &masks,
                                 SubspaceBasis const &basis, CVec const &y);
ParameterMaps pipeline_fit(PipelineConfig const &cfg, CMat const &coeffs, SubspaceBasis const &basis);
std::vector<RegionStats> region_stats(Phantom const &phantom, ParameterMaps const &maps);

// phantom -> basis -> masks -> simulate -> reconstruct -> back-project -> fit.
PipelineReport run_pipeline(PipelineConfig const &cfg, Logger const &log = {});

// Writes arrays, CSV reports and the resolved config into cfg.output_dir.
void write_report(PipelineConfig const &cfg, PipelineReport const &report);

struct CrlbStudy {
  std::vector<double> constant_flips;
  FlipSchedule optimized;
  double bound_constant = 0.0;
  double bound_optimized = 0.0;
  std::vector<CrlbSweepRow> sweep;
};

// Flip optimization at the configured tissue against the equal-power constant
// train, plus a T2 sweep of both bounds.
CrlbStudy run_crlb_study(PipelineConfig const &cfg);
void write_crlb_study(std::string const &dir, CrlbStudy const &study);

// Writes "<dir>/<name>.hdr/.dat" for an image stack of frames columns.
void write_images(std::string const &dir, std::string const &name, Index nx, Index ny, CMat const &stack);
void write_masks(std::string const &dir, std::string const &name, SamplingMasks const &masks);

} // namespace spinshuffle
