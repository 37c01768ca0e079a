#pragma once

#include "spinshuffle/core.hpp"

namespace spinshuffle {

// Orthonormal sparsifying transform on an nx x ny column-major image.
class SparsifyingTransform {
public:
  enum class Kind { identity, haar };

  SparsifyingTransform(Kind kind, Index nx, Index ny);

  Kind kind() const { return kind_; }
  Index nx() const { return nx_; }
  Index ny() const { return ny_; }
  Index levels() const { return levels_; }

  CVec forward(CVec const &image) const;
  CVec inverse(CVec const &coeffs) const;

  // Column-wise application to an N x frames stack.
  CMat forward(CMat const &stack) const;
  CMat inverse(CMat const &stack) const;

private:
  Kind kind_;
  Index nx_;
  Index ny_;
  Index levels_ = 0;
};

} // namespace spinshuffle
