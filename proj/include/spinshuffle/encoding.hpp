#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "spinshuffle/fft.hpp"
#include "spinshuffle/subspace.hpp"

namespace spinshuffle {

// Binary k-space mask on the centered grid (DC at (nx/2, ny/2)), x fastest.
struct SamplingMask {
  Index nx = 0;
  Index ny = 0;
  std::vector<std::uint8_t> bits;

  SamplingMask() = default;
  SamplingMask(Index nx, Index ny, bool fill = false);

  Index size() const { return nx * ny; }
  Index count() const;
  bool operator[](Index i) const { return bits[static_cast<size_t>(i)] != 0; }
  void set(Index i, bool v) { bits[static_cast<size_t>(i)] = v ? 1 : 0; }

  bool operator==(SamplingMask const &) const = default;
};

// One mask per echo, all on the same grid.
struct SamplingMasks {
  Index nx = 0;
  Index ny = 0;
  std::vector<SamplingMask> echoes;

  SamplingMasks() = default;
  explicit SamplingMasks(std::vector<SamplingMask> masks);

  Index n_echoes() const { return static_cast<Index>(echoes.size()); }
  Index total_count() const;
  void validate() const;

  bool operator==(SamplingMasks const &) const = default;
};

// Coil sensitivities; an empty list means one uniform coil.
struct SensitivityMaps {
  std::vector<CVec> maps;
};

// Per-location K x K blocks of the subspace normal operator.
struct NormalKernel {
  Index K = 0;
  Index n_locations = 0;
  CMat blocks; // (K*K) x n_locations, each column a column-major K x K block

  Eigen::Map<CMat const> block(Index loc) const
  {
    return Eigen::Map<CMat const>(blocks.col(loc).data(), K, K);
  }
};

// Linear measurement model y = P_i F S_j (Phi x)_i. Image stacks are N x frames
// matrices (one column per echo or per subspace coefficient). Measurements are
// laid out echo-major, then coil, then acquired locations in increasing linear
// index of the mask.
class Encoder {
public:
  Encoder(SamplingMasks masks, SensitivityMaps maps = {},
          std::optional<SubspaceBasis> basis = std::nullopt);

  Index nx() const { return masks_.nx; }
  Index ny() const { return masks_.ny; }
  Index n_voxels() const { return masks_.nx * masks_.ny; }
  Index n_echoes() const { return masks_.n_echoes(); }
  Index n_coils() const { return static_cast<Index>(coils_.size()); }
  Index domain_frames() const { return basis_ ? basis_->K() : n_echoes(); }
  Index n_measurements() const { return n_measurements_; }

  bool has_basis() const { return basis_.has_value(); }
  SubspaceBasis const &basis() const;
  SamplingMasks const &masks() const { return masks_; }
  SensitivityMaps const &maps() const { return maps_; }
  Fft2 const &fft() const { return fft_; }

  CVec forward(CMat const &x) const;
  CMat adjoint(CVec const &y) const;
  // A^H A. With a basis this goes through the per-location kernel.
  CMat normal(CMat const &x) const;

  NormalKernel const &normal_kernel() const;
  Encoder without_basis() const;

  // Offset of the (echo, coil) block within the measurement vector.
  Index block_offset(Index echo, Index coil) const;
  std::vector<Index> const &acquired(Index echo) const { return acquired_[static_cast<size_t>(echo)]; }

  void check_domain(CMat const &x) const;

private:
  SamplingMasks masks_;
  SensitivityMaps maps_;
  std::optional<SubspaceBasis> basis_;
  Fft2 fft_;
  std::vector<CVec> coils_;
  std::vector<std::vector<Index>> acquired_;
  std::vector<Index> echo_offsets_;
  Index n_measurements_ = 0;
  std::optional<NormalKernel> kernel_;
};

CVec apply_forward(Encoder const &enc, CMat const &x);
CMat apply_adjoint(Encoder const &enc, CVec const &y);

// Psi(loc) = sum_i mask_i(loc) conj(phi_i) phi_i^T, phi_i = row i of Phi_K.
NormalKernel build_normal_kernel(Encoder const &enc);
NormalKernel build_normal_kernel(SamplingMasks const &masks, SubspaceBasis const &basis);

} // namespace spinshuffle
