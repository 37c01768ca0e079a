#include "spinshuffle/phantom.hpp"

#include <cmath>
#include <random>
#include <string>

namespace spinshuffle {

TissueParams Phantom::tissue_at(Index v) const
{
  int const id = labels[static_cast<size_t>(v)];
  auto it = regions.find(id);
  if (it == regions.end()) {
    TissueParams bg;
    bg.rho = 0.0;
    return bg;
  }
  return it->second;
}

CVec Phantom::rho_map() const
{
  CVec m(n_voxels());
  for (Index v = 0; v < n_voxels(); v++) {
    m[v] = tissue_at(v).rho;
  }
  return m;
}

RVec Phantom::t1_map() const
{
  RVec m(n_voxels());
  for (Index v = 0; v < n_voxels(); v++) {
    m[v] = labels[static_cast<size_t>(v)] == 0 ? 0.0 : tissue_at(v).t1;
  }
  return m;
}

RVec Phantom::t2_map() const
{
  RVec m(n_voxels());
  for (Index v = 0; v < n_voxels(); v++) {
    m[v] = labels[static_cast<size_t>(v)] == 0 ? 0.0 : tissue_at(v).t2;
  }
  return m;
}

Index Phantom::count(int region) const
{
  Index n = 0;
  for (int l : labels) {
    n += l == region ? 1 : 0;
  }
  return n;
}

Phantom make_phantom(PhantomSpec const &spec)
{
  if (spec.nx < 1 || spec.ny < 1) {
    throw std::invalid_argument("phantom grid must be nonempty");
  }
  for (auto const &[id, tissue] : spec.regions) {
    if (id < 0) {
      throw std::invalid_argument("region ids must be nonnegative");
    }
    if (id == 0) {
      if (tissue.rho != cplx{0.0}) {
        throw std::invalid_argument("background region 0 must have zero proton density");
      }
      continue;
    }
    tissue.validate();
  }
  Phantom ph;
  ph.nx = spec.nx;
  ph.ny = spec.ny;
  ph.regions = spec.regions;
  ph.labels.assign(static_cast<size_t>(spec.nx * spec.ny), 0);
  for (size_t e = 0; e < spec.ellipses.size(); e++) {
    auto const &el = spec.ellipses[e];
    std::string const where = "ellipse " + std::to_string(e);
    if (!(std::abs(el.cx) <= 1.0 && std::abs(el.cy) <= 1.0)) {
      throw std::invalid_argument(where + " has its center outside [-1, 1]");
    }
    if (!(el.ax > 0.0 && el.ay > 0.0)) {
      throw std::invalid_argument(where + " needs positive semi-axes");
    }
    if (el.region < 0 || (el.region != 0 && !spec.regions.count(el.region))) {
      throw std::invalid_argument(where + " refers to undefined region " + std::to_string(el.region));
    }
    double const c = std::cos(deg2rad(el.angle_deg));
    double const s = std::sin(deg2rad(el.angle_deg));
    for (Index y = 0; y < spec.ny; y++) {
      double const v = (2.0 * static_cast<double>(y) + 1.0) / static_cast<double>(spec.ny) - 1.0;
      for (Index x = 0; x < spec.nx; x++) {
        double const u = (2.0 * static_cast<double>(x) + 1.0) / static_cast<double>(spec.nx) - 1.0;
        double const du = u - el.cx;
        double const dv = v - el.cy;
        double const p = (c * du + s * dv) / el.ax;
        double const q = (-s * du + c * dv) / el.ay;
        if (p * p + q * q <= 1.0) {
          ph.labels[static_cast<size_t>(x + spec.nx * y)] = el.region;
        }
      }
    }
  }
  return ph;
}

PhantomSpec default_phantom_spec()
{
  PhantomSpec spec;
  spec.nx = 64;
  spec.ny = 64;
  auto tissue = [](double rho, double t1, double t2) {
    TissueParams t;
    t.rho = rho;
    t.t1 = t1;
    t.t2 = t2;
    return t;
  };
  spec.regions[1] = tissue(1.0, 1000.0, 100.0);
  spec.regions[2] = tissue(0.8, 800.0, 60.0);
  spec.regions[3] = tissue(0.9, 1500.0, 200.0);
  spec.regions[4] = tissue(0.7, 600.0, 40.0);
  spec.ellipses = {
    {0.0, 0.0, 0.85, 0.7, 0.0, 1},
    {-0.38, 0.18, 0.22, 0.3, 15.0, 2},
    {0.36, 0.2, 0.2, 0.26, -30.0, 3},
    {0.0, -0.38, 0.32, 0.15, 0.0, 4},
  };
  return spec;
}

CMat contrast_images(Phantom const &phantom, SequenceParams const &seq)
{
  seq.validate();
  Index const T = seq.n_echoes();
  std::map<int, SignalEvolution> evolutions;
  for (auto const &[id, tissue] : phantom.regions) {
    if (id != 0) {
      evolutions[id] = simulate_fse(tissue, seq);
    }
  }
  CMat X = CMat::Zero(phantom.n_voxels(), T);
  for (Index v = 0; v < phantom.n_voxels(); v++) {
    auto it = evolutions.find(phantom.labels[static_cast<size_t>(v)]);
    if (it != evolutions.end()) {
      X.row(v) = it->second.transpose();
    }
  }
  return X;
}

void add_noise(CVec &y, double sigma, std::uint64_t seed)
{
  if (!(sigma >= 0.0)) {
    throw std::invalid_argument("noise level must be nonnegative");
  }
  if (sigma == 0.0) {
    return;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma / std::sqrt(2.0));
  for (Index i = 0; i < y.size(); i++) {
    double const re = gauss(rng);
    double const im = gauss(rng);
    y[i] += cplx(re, im);
  }
}

CVec simulate_acquisition(Phantom const &phantom, SequenceParams const &seq,
                          SamplingMasks const &masks, SensitivityMaps const &maps, double sigma,
                          std::uint64_t seed)
{
  if (masks.nx != phantom.nx || masks.ny != phantom.ny) {
    throw std::invalid_argument("masks and phantom grids differ");
  }
  if (masks.n_echoes() != seq.n_echoes()) {
    throw std::invalid_argument("masks and sequence disagree on echo count");
  }
  Encoder const enc(masks, maps);
  CVec y = apply_forward(enc, contrast_images(phantom, seq));
  add_noise(y, sigma, seed);
  return y;
}

} // namespace spinshuffle
