#include "spinshuffle/fft.hpp"

#include <cmath>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace spinshuffle {

namespace {
// The FFTW planner is not re-entrant.
std::mutex &planner_mutex()
{
  static std::mutex m;
  return m;
}
} // namespace

struct Fft2::Plans {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;

  ~Plans()
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (fwd) {
      fftw_destroy_plan(fwd);
    }
    if (bwd) {
      fftw_destroy_plan(bwd);
    }
  }
};

Fft2::Fft2(Index nx, Index ny)
  : nx_(nx)
  , ny_(ny)
{
  if (nx < 1 || ny < 1) {
    throw std::invalid_argument("FFT grid must be non-empty");
  }
  auto plans = std::make_shared<Plans>();
  std::vector<cplx> scratch(static_cast<size_t>(nx * ny));
  auto *buf = reinterpret_cast<fftw_complex *>(scratch.data());
  unsigned const flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    // FFTW is row-major: the last (fastest) dimension is x.
    plans->fwd = fftw_plan_dft_2d(static_cast<int>(ny), static_cast<int>(nx), buf, buf,
                                  FFTW_FORWARD, flags);
    plans->bwd = fftw_plan_dft_2d(static_cast<int>(ny), static_cast<int>(nx), buf, buf,
                                  FFTW_BACKWARD, flags);
  }
  if (!plans->fwd || !plans->bwd) {
    throw std::runtime_error("FFTW planning failed");
  }
  plans_ = std::move(plans);
}

Index Fft2::centered_index(Index uncentered) const
{
  Index const x = uncentered % nx_;
  Index const y = uncentered / nx_;
  return (x + nx_ / 2) % nx_ + nx_ * ((y + ny_ / 2) % ny_);
}

void Fft2::forward(cplx const *image, cplx *kspace) const
{
  Index const N = size();
  std::vector<cplx> buf(image, image + N);
  auto *b = reinterpret_cast<fftw_complex *>(buf.data());
  fftw_execute_dft(plans_->fwd, b, b);
  double const scale = 1.0 / std::sqrt(static_cast<double>(N));
  for (Index y = 0; y < ny_; y++) {
    Index const ys = (y + ny_ / 2) % ny_;
    for (Index x = 0; x < nx_; x++) {
      Index const xs = (x + nx_ / 2) % nx_;
      kspace[xs + nx_ * ys] = buf[static_cast<size_t>(x + nx_ * y)] * scale;
    }
  }
}

void Fft2::adjoint(cplx const *kspace, cplx *image) const
{
  Index const N = size();
  std::vector<cplx> buf(static_cast<size_t>(N));
  for (Index y = 0; y < ny_; y++) {
    Index const ys = (y + ny_ / 2) % ny_;
    for (Index x = 0; x < nx_; x++) {
      Index const xs = (x + nx_ / 2) % nx_;
      buf[static_cast<size_t>(x + nx_ * y)] = kspace[xs + nx_ * ys];
    }
  }
  auto *b = reinterpret_cast<fftw_complex *>(buf.data());
  fftw_execute_dft(plans_->bwd, b, b);
  double const scale = 1.0 / std::sqrt(static_cast<double>(N));
  for (Index i = 0; i < N; i++) {
    image[i] = buf[static_cast<size_t>(i)] * scale;
  }
}

CVec Fft2::forward(CVec const &image) const
{
  if (image.size() != size()) {
    throw std::invalid_argument("FFT input size mismatch");
  }
  CVec out(size());
  forward(image.data(), out.data());
  return out;
}

CVec Fft2::adjoint(CVec const &kspace) const
{
  if (kspace.size() != size()) {
    throw std::invalid_argument("FFT input size mismatch");
  }
  CVec out(size());
  adjoint(kspace.data(), out.data());
  return out;
}

} // namespace spinshuffle
