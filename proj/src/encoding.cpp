#include "spinshuffle/encoding.hpp"

#include <string>

#include "spinshuffle/kernels.hpp"

namespace spinshuffle {

SamplingMask::SamplingMask(Index nx_, Index ny_, bool fill)
  : nx(nx_)
  , ny(ny_)
  , bits(static_cast<size_t>(nx_ * ny_), fill ? 1 : 0)
{
}

Index SamplingMask::count() const
{
  Index n = 0;
  for (auto b : bits) {
    n += b != 0;
  }
  return n;
}

SamplingMasks::SamplingMasks(std::vector<SamplingMask> masks)
  : echoes(std::move(masks))
{
  if (!echoes.empty()) {
    nx = echoes.front().nx;
    ny = echoes.front().ny;
  }
  validate();
}

Index SamplingMasks::total_count() const
{
  Index n = 0;
  for (auto const &m : echoes) {
    n += m.count();
  }
  return n;
}

void SamplingMasks::validate() const
{
  if (echoes.empty()) {
    throw std::invalid_argument("sampling needs at least one echo mask");
  }
  for (auto const &m : echoes) {
    if (m.nx != nx || m.ny != ny || static_cast<Index>(m.bits.size()) != nx * ny) {
      throw std::invalid_argument("echo masks disagree on grid dimensions");
    }
  }
}

Encoder::Encoder(SamplingMasks masks, SensitivityMaps maps, std::optional<SubspaceBasis> basis)
  : masks_(std::move(masks))
  , maps_(std::move(maps))
  , basis_(std::move(basis))
  , fft_(masks_.nx, masks_.ny)
{
  masks_.validate();
  Index const N = n_voxels();
  Index const T = n_echoes();
  if (maps_.maps.empty()) {
    coils_.push_back(CVec::Ones(N));
  } else {
    for (auto const &m : maps_.maps) {
      if (m.size() != N) {
        throw std::invalid_argument("sensitivity map size does not match the grid");
      }
      coils_.push_back(m);
    }
  }
  if (basis_ && basis_->T() != T) {
    throw std::invalid_argument("basis has " + std::to_string(basis_->T()) +
                                " echoes but sampling has " + std::to_string(T));
  }

  acquired_.resize(static_cast<size_t>(T));
  echo_offsets_.resize(static_cast<size_t>(T) + 1, 0);
  for (Index i = 0; i < T; i++) {
    auto const &m = masks_.echoes[static_cast<size_t>(i)];
    auto &list = acquired_[static_cast<size_t>(i)];
    for (Index k = 0; k < N; k++) {
      if (m[k]) {
        list.push_back(k);
      }
    }
    echo_offsets_[static_cast<size_t>(i) + 1] =
      echo_offsets_[static_cast<size_t>(i)] + static_cast<Index>(list.size()) * n_coils();
  }
  n_measurements_ = echo_offsets_.back();
  if (basis_) {
    kernel_ = build_normal_kernel(masks_, *basis_);
  }
}

SubspaceBasis const &Encoder::basis() const
{
  if (!basis_) {
    throw std::logic_error("encoder has no subspace basis");
  }
  return *basis_;
}

NormalKernel const &Encoder::normal_kernel() const
{
  if (!kernel_) {
    throw std::invalid_argument("normal kernel requires an encoder with a basis");
  }
  return *kernel_;
}

Encoder Encoder::without_basis() const { return Encoder(masks_, maps_); }

Index Encoder::block_offset(Index echo, Index coil) const
{
  return echo_offsets_[static_cast<size_t>(echo)] +
         coil * static_cast<Index>(acquired_[static_cast<size_t>(echo)].size());
}

void Encoder::check_domain(CMat const &x) const
{
  if (x.rows() != n_voxels() || x.cols() != domain_frames()) {
    throw std::invalid_argument("image stack is " + std::to_string(x.rows()) + "x" +
                                std::to_string(x.cols()) + ", encoder expects " +
                                std::to_string(n_voxels()) + "x" +
                                std::to_string(domain_frames()));
  }
}

CVec Encoder::forward(CMat const &x) const
{
  check_domain(x);
  CMat const echoes = basis_ ? CMat(x * basis_->phi.transpose()) : x;
  Index const T = n_echoes();
  Index const C = n_coils();
  Index const N = n_voxels();
  CVec y(n_measurements_);

#pragma omp parallel for schedule(static)
  for (Index p = 0; p < T * C; p++) {
    Index const i = p / C;
    Index const j = p % C;
    CVec const coil_image = coils_[static_cast<size_t>(j)].cwiseProduct(echoes.col(i));
    CVec ksp(N);
    fft_.forward(coil_image.data(), ksp.data());
    auto const &list = acquired_[static_cast<size_t>(i)];
    Index const off = block_offset(i, j);
    for (size_t m = 0; m < list.size(); m++) {
      y[off + static_cast<Index>(m)] = ksp[list[m]];
    }
  }
  return y;
}

CMat Encoder::adjoint(CVec const &y) const
{
  if (y.size() != n_measurements_) {
    throw std::invalid_argument("measurement vector has " + std::to_string(y.size()) +
                                " samples, encoder expects " + std::to_string(n_measurements_));
  }
  Index const T = n_echoes();
  Index const C = n_coils();
  Index const N = n_voxels();
  CMat echoes(N, T);

#pragma omp parallel for schedule(static)
  for (Index i = 0; i < T; i++) {
    auto const &list = acquired_[static_cast<size_t>(i)];
    CVec acc = CVec::Zero(N);
    CVec ksp(N);
    CVec img(N);
    for (Index j = 0; j < C; j++) {
      ksp.setZero();
      Index const off = block_offset(i, j);
      for (size_t m = 0; m < list.size(); m++) {
        ksp[list[m]] = y[off + static_cast<Index>(m)];
      }
      fft_.adjoint(ksp.data(), img.data());
      acc += coils_[static_cast<size_t>(j)].conjugate().cwiseProduct(img);
    }
    echoes.col(i) = acc;
  }
  if (basis_) {
    return echoes * basis_->phi.conjugate();
  }
  return echoes;
}

CMat Encoder::normal(CMat const &x) const
{
  check_domain(x);
  Index const N = n_voxels();
  Index const F = domain_frames();
  CMat out = CMat::Zero(N, F);

  if (basis_) {
    CMat ksp(N, F);
    for (auto const &coil : coils_) {
#pragma omp parallel for schedule(static)
      for (Index k = 0; k < F; k++) {
        CVec const img = coil.cwiseProduct(x.col(k));
        fft_.forward(img.data(), ksp.col(k).data());
      }
      CMat const weighted = kernels::omp::apply_normal_kernel(*kernel_, ksp);
#pragma omp parallel for schedule(static)
      for (Index k = 0; k < F; k++) {
        CVec img(N);
        fft_.adjoint(weighted.col(k).data(), img.data());
        out.col(k) += coil.conjugate().cwiseProduct(img);
      }
    }
    return out;
  }

#pragma omp parallel for schedule(static)
  for (Index i = 0; i < F; i++) {
    auto const &mask = masks_.echoes[static_cast<size_t>(i)];
    CVec ksp(N);
    CVec img(N);
    for (auto const &coil : coils_) {
      CVec const c_img = coil.cwiseProduct(x.col(i));
      fft_.forward(c_img.data(), ksp.data());
      for (Index k = 0; k < N; k++) {
        if (!mask[k]) {
          ksp[k] = 0.0;
        }
      }
      fft_.adjoint(ksp.data(), img.data());
      out.col(i) += coil.conjugate().cwiseProduct(img);
    }
  }
  return out;
}

CVec apply_forward(Encoder const &enc, CMat const &x) { return enc.forward(x); }

CMat apply_adjoint(Encoder const &enc, CVec const &y) { return enc.adjoint(y); }

NormalKernel build_normal_kernel(SamplingMasks const &masks, SubspaceBasis const &basis)
{
  masks.validate();
  if (basis.T() != masks.n_echoes()) {
    throw std::invalid_argument("basis and masks disagree on echo count");
  }
  Index const K = basis.K();
  Index const N = masks.nx * masks.ny;
  NormalKernel kernel;
  kernel.K = K;
  kernel.n_locations = N;
  kernel.blocks = CMat::Zero(K * K, N);

  // Outer products of each basis row, reused at every location the echo hits.
  std::vector<CMat> outer;
  for (Index i = 0; i < basis.T(); i++) {
    CVec const row = basis.phi.row(i).transpose();
    outer.emplace_back(row.conjugate() * row.transpose());
  }
#pragma omp parallel for schedule(static)
  for (Index loc = 0; loc < N; loc++) {
    Eigen::Map<CMat> blk(kernel.blocks.col(loc).data(), K, K);
    for (Index i = 0; i < basis.T(); i++) {
      if (masks.echoes[static_cast<size_t>(i)][loc]) {
        blk += outer[static_cast<size_t>(i)];
      }
    }
  }
  return kernel;
}

NormalKernel build_normal_kernel(Encoder const &enc)
{
  if (!enc.has_basis()) {
    throw std::invalid_argument("normal kernel requires an encoder with a basis");
  }
  return enc.normal_kernel();
}

} // namespace spinshuffle
