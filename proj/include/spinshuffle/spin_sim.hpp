#pragma once

#include <algorithm>
#include <vector>

#include "spinshuffle/core.hpp"

namespace spinshuffle {

// Intrinsic voxel parameters. Times in ms, eta scales every flip angle.
struct TissueParams {
  cplx rho{1.0, 0.0};
  double t1 = 1000.0;
  double t2 = 100.0;
  double eta = 1.0;

  void validate() const;
};

// Fast spin echo controls. Angles in degrees, times in ms.
struct SequenceParams {
  double excitation_deg = 90.0;
  double excitation_phase_deg = 0.0;
  std::vector<double> flips_deg;
  std::vector<double> flip_phases_deg;
  double echo_spacing_ms = 10.0;

  Index n_echoes() const { return static_cast<Index>(flips_deg.size()); }
  void validate() const;

  // Constant refocusing train with the CPMG phase (refocusing along y).
  static SequenceParams constant(Index n_echoes, double flip_deg, double echo_spacing_ms);
  static SequenceParams from_flips(std::vector<double> flips_deg, double echo_spacing_ms);
};

using SignalEvolution = CVec;
using RfMatrix = Eigen::Matrix3cd;

// Rotation acting on one Fourier order of (F+, F-, Z).
RfMatrix rf_matrix(double alpha_deg, double phi_deg);

// Configuration-state representation of a dephased spin ensemble. Orders run
// 0..max_order for each of F+, F- and Z.
class EpgState {
public:
  explicit EpgState(Index max_order);

  Index max_order() const { return max_order_; }

  void rotate(RfMatrix const &rf);
  // Relaxation over dt ms; Z0 recovers toward an equilibrium of 1.
  void relax(double dt_ms, double t1, double t2);
  // One unit of gradient dephasing.
  void shift();
  // Zeroes every order above keep.
  void truncate(Index keep);

  cplx fplus(Index k) const { return fplus_[k]; }
  cplx fminus(Index k) const { return fminus_[k]; }
  cplx z(Index k) const { return z_[k]; }
  void set_z(Index k, cplx v)
  {
    z_[k] = v;
    top_ = std::max(top_, static_cast<size_t>(k));
  }

private:
  Index max_order_;
  std::vector<cplx> fplus_;
  std::vector<cplx> fminus_;
  std::vector<cplx> z_;
  size_t top_ = 0; // orders above this are exactly zero
};

// Receiver demodulation applied to recorded echoes: an ideal excitation
// yields real-positive transverse magnetization.
cplx receiver_phase(SequenceParams const &seq);

// Advances the state through one echo period: relax Ts/2, shift, refocus,
// shift, relax Ts/2. The flip is the nominal angle; eta is applied inside.
void epg_echo_step(EpgState &state, TissueParams const &tissue, double echo_spacing_ms,
                   double flip_deg, double phase_deg);
void epg_echo_step(EpgState &state, TissueParams const &tissue, double echo_spacing_ms,
                   RfMatrix const &rf);

// State right after the (eta-scaled) excitation pulse.
EpgState epg_excite(TissueParams const &tissue, SequenceParams const &seq, Index max_order);

// EPG simulation of the echo train. max_order <= 0 selects T + 2.
SignalEvolution simulate_fse(TissueParams const &tissue, SequenceParams const &seq,
                             Index max_order = 0);

// Brute-force oracle: isochromats with uniformly spaced per-interval
// dephasing over [0, 2pi), each rotated and relaxed explicitly.
SignalEvolution bloch_isochromat_train(TissueParams const &tissue, SequenceParams const &seq,
                                       Index n_isochromats);

struct SignalParam {
  enum class Kind { rho, t1, t2, eta, flip };
  Kind kind = Kind::rho;
  Index flip_index = 0;

  static SignalParam rho() { return {Kind::rho, 0}; }
  static SignalParam t1() { return {Kind::t1, 0}; }
  static SignalParam t2() { return {Kind::t2, 0}; }
  static SignalParam eta() { return {Kind::eta, 0}; }
  static SignalParam flip(Index i) { return {Kind::flip, i}; }

  bool operator==(SignalParam const &) const = default;
};

// dSignal/dp, one column per selected parameter. rho is exact (f / rho);
// everything else is a central difference with relative step 1e-4 (T1, T2,
// eta) or 1e-4 rad (flips). Flip columns are per degree.
CMat signal_jacobian(TissueParams const &tissue, SequenceParams const &seq,
                     std::vector<SignalParam> const &wrt);

} // namespace spinshuffle
