#pragma once

#include <memory>

#include "spinshuffle/core.hpp"

namespace spinshuffle {

// Unitary 2-D DFT on an nx x ny column-major grid (x fastest). k-space arrays
// are stored with DC at (nx/2, ny/2). Thread-safe after construction.
class Fft2 {
public:
  Fft2(Index nx, Index ny);

  Index nx() const { return nx_; }
  Index ny() const { return ny_; }
  Index size() const { return nx_ * ny_; }

  // image -> centered k-space
  void forward(cplx const *image, cplx *kspace) const;
  // centered k-space -> image; exact inverse and adjoint of forward()
  void adjoint(cplx const *kspace, cplx *image) const;

  CVec forward(CVec const &image) const;
  CVec adjoint(CVec const &kspace) const;

  // Linear index of the centered k-space location for an uncentered index.
  Index centered_index(Index uncentered) const;

private:
  struct Plans;
  Index nx_;
  Index ny_;
  std::shared_ptr<Plans const> plans_;
};

} // namespace spinshuffle
