#include "spinshuffle/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "spinshuffle/kernels.hpp"

namespace spinshuffle {

namespace {

RVec radius_map(Index nx, Index ny)
{
  RVec r(nx * ny);
  double const hx = std::max<double>(1.0, static_cast<double>(nx / 2));
  double const hy = std::max<double>(1.0, static_cast<double>(ny / 2));
  for (Index y = 0; y < ny; y++) {
    for (Index x = 0; x < nx; x++) {
      double const kx = (static_cast<double>(x) - static_cast<double>(nx / 2)) / hx;
      double const ky = (static_cast<double>(y) - static_cast<double>(ny / 2)) / hy;
      r[x + nx * y] = std::hypot(kx, ky);
    }
  }
  return r / r.maxCoeff();
}

double squared_radius(Index idx, Index nx, Index ny)
{
  double const dx = static_cast<double>(idx % nx - nx / 2);
  double const dy = static_cast<double>(idx / nx - ny / 2);
  return dx * dx + dy * dy;
}

} // namespace

RVec sampling_density(DensityProfile const &profile, Index nx, Index ny)
{
  if (nx < 4 || ny < 4) {
    throw std::invalid_argument("sampling grid must be at least 4x4");
  }
  if (!(profile.accel >= 1.0)) {
    throw std::invalid_argument("acceleration must be >= 1, got " + std::to_string(profile.accel));
  }
  Index const N = nx * ny;
  if (profile.accel == 1.0) {
    return RVec::Ones(N);
  }
  RVec const r = radius_map(nx, ny);
  RVec w(N);
  Index forced = 0;
  for (Index i = 0; i < N; i++) {
    if (r[i] <= profile.fully_sampled_radius) {
      w[i] = -1.0;
      forced++;
    } else if (profile.shape == DensityProfile::Shape::polynomial) {
      w[i] = std::pow(1.0 - r[i], profile.decay_power);
    } else {
      w[i] = std::exp(-r[i] * r[i] / (2 * profile.sigma * profile.sigma));
    }
  }
  double const target = static_cast<double>(N) / profile.accel;

  auto density_for = [&](double c) {
    RVec p(N);
    for (Index i = 0; i < N; i++) {
      p[i] = w[i] < 0 ? 1.0 : std::min(1.0, c * w[i]);
    }
    return p;
  };

  double wmin = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < N; i++) {
    if (w[i] > 0) {
      wmin = std::min(wmin, w[i]);
    }
  }
  double lo = 0.0;
  double hi = std::isfinite(wmin) ? 1.0 / wmin : 1.0;
  if (static_cast<double>(forced) >= target) {
    return density_for(0.0);
  }
  for (int it = 0; it < 200; it++) {
    double const mid = 0.5 * (lo + hi);
    if (density_for(mid).sum() < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return density_for(hi);
}

SamplingMask draw_mask(DensityProfile const &profile, Index nx, Index ny, std::uint64_t seed)
{
  RVec const p = sampling_density(profile, nx, ny);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SamplingMask mask(nx, ny);
  for (Index i = 0; i < mask.size(); i++) {
    mask.set(i, unit(rng) < p[i]);
  }
  return mask;
}

SamplingMasks draw_echo_masks(DensityProfile const &profile, Index nx, Index ny, Index T,
                              std::uint64_t seed)
{
  if (T < 1) {
    throw std::invalid_argument("need at least one echo");
  }
  std::vector<SamplingMask> masks;
  for (Index i = 0; i < T; i++) {
    masks.push_back(draw_mask(profile, nx, ny, seed + static_cast<std::uint64_t>(i)));
  }
  return SamplingMasks(std::move(masks));
}

double tpsf_peak(SamplingMask const &mask, SparsityModel const &model, Index probe_count,
                 std::uint64_t seed)
{
  if (probe_count < 1) {
    throw std::invalid_argument("TPSF needs at least one probe");
  }
  if (mask.count() == 0) {
    throw std::invalid_argument("TPSF of an empty mask is undefined");
  }
  Index const N = mask.size();
  SparsifyingTransform const W(model.transform, mask.nx, mask.ny);
  Fft2 const fft(mask.nx, mask.ny);

  std::vector<Index> probes(static_cast<size_t>(N));
  std::iota(probes.begin(), probes.end(), Index{0});
  if (probe_count < N) {
    std::mt19937_64 rng(seed);
    for (Index i = 0; i < probe_count; i++) {
      std::uniform_int_distribution<Index> pick(i, N - 1);
      std::swap(probes[static_cast<size_t>(i)], probes[static_cast<size_t>(pick(rng))]);
    }
    probes.resize(static_cast<size_t>(probe_count));
  }

  double peak = 0.0;
  CVec e = CVec::Zero(N);
  for (Index j : probes) {
    e.setZero();
    e[j] = 1.0;
    CVec ksp = fft.forward(W.inverse(e));
    for (Index k = 0; k < N; k++) {
      if (!mask[k]) {
        ksp[k] = 0.0;
      }
    }
    CVec const col = W.forward(fft.adjoint(ksp));
    double const diag = std::abs(col[j]);
    if (diag == 0.0) {
      return std::numeric_limits<double>::infinity();
    }
    double off = 0.0;
    for (Index i = 0; i < N; i++) {
      if (i != j) {
        off = std::max(off, std::abs(col[i]));
      }
    }
    peak = std::max(peak, off / diag);
  }
  return peak;
}

MonteCarloMask monte_carlo_mask(DensityProfile const &profile, Index nx, Index ny,
                                SparsityModel const &model, Index n_trials, std::uint64_t seed,
                                Index probe_count)
{
  if (n_trials < 1) {
    throw std::invalid_argument("Monte-Carlo design needs at least one trial");
  }
  MonteCarloMask out;
  out.trial_peaks = kernels::omp::tpsf_trials(profile, nx, ny, model, n_trials, seed, probe_count);
  out.trial = 0;
  for (Index t = 1; t < n_trials; t++) {
    if (out.trial_peaks[static_cast<size_t>(t)] < out.trial_peaks[static_cast<size_t>(out.trial)]) {
      out.trial = t;
    }
  }
  out.peak = out.trial_peaks[static_cast<size_t>(out.trial)];
  out.mask = draw_mask(profile, nx, ny, seed + static_cast<std::uint64_t>(out.trial));
  return out;
}

SamplingMasks assign_echoes(SamplingMask const &mask, Index T, EchoOrdering ordering,
                            std::uint64_t seed)
{
  if (T < 1) {
    throw std::invalid_argument("need at least one echo");
  }
  std::vector<Index> locs;
  for (Index i = 0; i < mask.size(); i++) {
    if (mask[i]) {
      locs.push_back(i);
    }
  }
  Index const M = static_cast<Index>(locs.size());
  if (M < T) {
    throw std::invalid_argument("mask has " + std::to_string(M) + " samples, fewer than " +
                                std::to_string(T) + " echoes");
  }
  if (ordering == EchoOrdering::center_out) {
    std::stable_sort(locs.begin(), locs.end(), [&](Index a, Index b) {
      return squared_radius(a, mask.nx, mask.ny) < squared_radius(b, mask.nx, mask.ny);
    });
  } else {
    std::mt19937_64 rng(seed);
    std::shuffle(locs.begin(), locs.end(), rng);
  }

  std::vector<SamplingMask> echoes(static_cast<size_t>(T), SamplingMask(mask.nx, mask.ny));
  Index const base = M / T;
  Index const extra = M % T;
  Index pos = 0;
  for (Index i = 0; i < T; i++) {
    Index const n = base + (i < extra ? 1 : 0);
    for (Index m = 0; m < n; m++) {
      echoes[static_cast<size_t>(i)].set(locs[static_cast<size_t>(pos++)], true);
    }
  }
  return SamplingMasks(std::move(echoes));
}

double sparsity_crb(SamplingMask const &mask, SparsityModel const &model)
{
  Index const N = mask.size();
  Index const S = static_cast<Index>(model.support.size());
  if (S == 0) {
    throw std::invalid_argument("sparsity model has an empty support");
  }
  std::set<Index> seen;
  for (Index s : model.support) {
    if (s < 0 || s >= N || !seen.insert(s).second) {
      throw std::invalid_argument("support indices must be unique and within the grid");
    }
  }
  if (S > mask.count()) {
    throw std::invalid_argument("support size exceeds the number of acquired samples");
  }
  SparsifyingTransform const W(model.transform, mask.nx, mask.ny);
  Fft2 const fft(mask.nx, mask.ny);

  CMat G(S, S);
  CVec e = CVec::Zero(N);
  for (Index c = 0; c < S; c++) {
    e.setZero();
    e[model.support[static_cast<size_t>(c)]] = 1.0;
    CVec ksp = fft.forward(W.inverse(e));
    for (Index k = 0; k < N; k++) {
      if (!mask[k]) {
        ksp[k] = 0.0;
      }
    }
    CVec const col = W.forward(fft.adjoint(ksp));
    for (Index r = 0; r < S; r++) {
      G(r, c) = col[model.support[static_cast<size_t>(r)]];
    }
  }
  CMat const H = 0.5 * (G + G.adjoint());
  Eigen::SelfAdjointEigenSolver<CMat> eig(H);
  RVec const lambda = eig.eigenvalues();
  double const top = std::max(1.0, lambda.maxCoeff());
  if (lambda.minCoeff() <= 1e-10 * top) {
    throw NonIdentifiable("support is not identifiable under this mask (smallest eigenvalue " +
                          std::to_string(lambda.minCoeff()) + ")");
  }
  return lambda.cwiseInverse().sum();
}

} // namespace spinshuffle
