#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "spinshuffle/encoding.hpp"

namespace spinshuffle {

// Ellipse in normalized coordinates: the grid spans [-1, 1] along each axis.
struct EllipseSpec {
  double cx = 0.0;
  double cy = 0.0;
  double ax = 0.5;
  double ay = 0.5;
  double angle_deg = 0.0;
  int region = 1;
};

struct PhantomSpec {
  Index nx = 64;
  Index ny = 64;
  std::vector<EllipseSpec> ellipses; // rasterized in order, later ones win
  std::map<int, TissueParams> regions;
};

struct Phantom {
  Index nx = 0;
  Index ny = 0;
  std::vector<int> labels; // x fastest, 0 = background
  std::map<int, TissueParams> regions;

  Index n_voxels() const { return nx * ny; }
  // Tissue of a voxel; background has rho = 0.
  TissueParams tissue_at(Index v) const;
  CVec rho_map() const;
  RVec t1_map() const;
  RVec t2_map() const;
  Index count(int region) const;
};

Phantom make_phantom(PhantomSpec const &spec);

// 64 x 64 scene with four tissue regions.
PhantomSpec default_phantom_spec();

// Noiseless echo images rho(r) f_i(r) (N x T), one simulation per region.
CMat contrast_images(Phantom const &phantom, SequenceParams const &seq);

// Adds i.i.d. complex Gaussian noise, sigma / sqrt(2) per real component.
void add_noise(CVec &y, double sigma, std::uint64_t seed);

CVec simulate_acquisition(Phantom const &phantom, SequenceParams const &seq,
                          SamplingMasks const &masks, SensitivityMaps const &maps, double sigma,
                          std::uint64_t seed);

} // namespace spinshuffle
