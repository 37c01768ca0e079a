#include "spinshuffle/transform.hpp"

#include <cmath>
#include <vector>

namespace spinshuffle {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// One analysis level along x on the leading w x h block; stride is nx.
void haar_x(cplx *v, Index nx, Index w, Index h, std::vector<cplx> &tmp)
{
  tmp.resize(static_cast<size_t>(w));
  for (Index y = 0; y < h; y++) {
    cplx *row = v + y * nx;
    for (Index x = 0; x < w / 2; x++) {
      tmp[static_cast<size_t>(x)] = (row[2 * x] + row[2 * x + 1]) * kInvSqrt2;
      tmp[static_cast<size_t>(x + w / 2)] = (row[2 * x] - row[2 * x + 1]) * kInvSqrt2;
    }
    std::copy(tmp.begin(), tmp.begin() + w, row);
  }
}

void haar_y(cplx *v, Index nx, Index w, Index h, std::vector<cplx> &tmp)
{
  tmp.resize(static_cast<size_t>(h));
  for (Index x = 0; x < w; x++) {
    for (Index y = 0; y < h / 2; y++) {
      cplx const a = v[x + nx * (2 * y)];
      cplx const b = v[x + nx * (2 * y + 1)];
      tmp[static_cast<size_t>(y)] = (a + b) * kInvSqrt2;
      tmp[static_cast<size_t>(y + h / 2)] = (a - b) * kInvSqrt2;
    }
    for (Index y = 0; y < h; y++) {
      v[x + nx * y] = tmp[static_cast<size_t>(y)];
    }
  }
}

void ihaar_x(cplx *v, Index nx, Index w, Index h, std::vector<cplx> &tmp)
{
  tmp.resize(static_cast<size_t>(w));
  for (Index y = 0; y < h; y++) {
    cplx *row = v + y * nx;
    for (Index x = 0; x < w / 2; x++) {
      cplx const a = row[x];
      cplx const d = row[x + w / 2];
      tmp[static_cast<size_t>(2 * x)] = (a + d) * kInvSqrt2;
      tmp[static_cast<size_t>(2 * x + 1)] = (a - d) * kInvSqrt2;
    }
    std::copy(tmp.begin(), tmp.begin() + w, row);
  }
}

void ihaar_y(cplx *v, Index nx, Index w, Index h, std::vector<cplx> &tmp)
{
  tmp.resize(static_cast<size_t>(h));
  for (Index x = 0; x < w; x++) {
    for (Index y = 0; y < h / 2; y++) {
      cplx const a = v[x + nx * y];
      cplx const d = v[x + nx * (y + h / 2)];
      tmp[static_cast<size_t>(2 * y)] = (a + d) * kInvSqrt2;
      tmp[static_cast<size_t>(2 * y + 1)] = (a - d) * kInvSqrt2;
    }
    for (Index y = 0; y < h; y++) {
      v[x + nx * y] = tmp[static_cast<size_t>(y)];
    }
  }
}

} // namespace

SparsifyingTransform::SparsifyingTransform(Kind kind, Index nx, Index ny)
  : kind_(kind)
  , nx_(nx)
  , ny_(ny)
{
  if (nx < 1 || ny < 1) {
    throw std::invalid_argument("transform grid must be non-empty");
  }
  if (kind_ == Kind::haar) {
    Index w = nx;
    Index h = ny;
    while (w % 2 == 0 && h % 2 == 0 && w >= 2 && h >= 2) {
      levels_++;
      w /= 2;
      h /= 2;
    }
    if (levels_ == 0) {
      throw std::invalid_argument("Haar transform needs even grid dimensions");
    }
  }
}

CVec SparsifyingTransform::forward(CVec const &image) const
{
  if (image.size() != nx_ * ny_) {
    throw std::invalid_argument("transform input size mismatch");
  }
  CVec out = image;
  if (kind_ == Kind::identity) {
    return out;
  }
  std::vector<cplx> tmp;
  Index w = nx_;
  Index h = ny_;
  for (Index l = 0; l < levels_; l++) {
    haar_x(out.data(), nx_, w, h, tmp);
    haar_y(out.data(), nx_, w, h, tmp);
    w /= 2;
    h /= 2;
  }
  return out;
}

CVec SparsifyingTransform::inverse(CVec const &coeffs) const
{
  if (coeffs.size() != nx_ * ny_) {
    throw std::invalid_argument("transform input size mismatch");
  }
  CVec out = coeffs;
  if (kind_ == Kind::identity) {
    return out;
  }
  std::vector<cplx> tmp;
  for (Index l = levels_ - 1; l >= 0; l--) {
    Index const w = nx_ >> l;
    Index const h = ny_ >> l;
    ihaar_y(out.data(), nx_, w, h, tmp);
    ihaar_x(out.data(), nx_, w, h, tmp);
  }
  return out;
}

CMat SparsifyingTransform::forward(CMat const &stack) const
{
  CMat out(stack.rows(), stack.cols());
  for (Index c = 0; c < stack.cols(); c++) {
    out.col(c) = forward(CVec(stack.col(c)));
  }
  return out;
}

CMat SparsifyingTransform::inverse(CMat const &stack) const
{
  CMat out(stack.rows(), stack.cols());
  for (Index c = 0; c < stack.cols(); c++) {
    out.col(c) = inverse(CVec(stack.col(c)));
  }
  return out;
}

} // namespace spinshuffle
