#include "spinshuffle/spin_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace spinshuffle {

namespace {
constexpr cplx I{0.0, 1.0};
constexpr double kRelStep = 1e-4;
constexpr double kAngleStepRad = 1e-4;
} // namespace

void TissueParams::validate() const
{
  if (!(t1 > 0.0) || !(t2 > 0.0)) {
    throw std::invalid_argument("tissue relaxation times must be positive");
  }
  if (t2 > t1) {
    throw std::invalid_argument("tissue T2 must not exceed T1");
  }
  if (!(eta > 0.0)) {
    throw std::invalid_argument("B1 scale eta must be positive");
  }
}

void SequenceParams::validate() const
{
  if (flips_deg.empty()) {
    throw std::invalid_argument("sequence needs at least one echo");
  }
  if (flip_phases_deg.size() != flips_deg.size()) {
    throw std::invalid_argument("flip phase list length must match flip list length");
  }
  if (!(echo_spacing_ms > 0.0)) {
    throw std::invalid_argument("echo spacing must be positive");
  }
  for (double f : flips_deg) {
    if (!(f >= 0.0 && f <= 180.0)) {
      throw std::invalid_argument("refocusing flips must lie in [0, 180] degrees, got " +
                                  std::to_string(f));
    }
  }
}

SequenceParams SequenceParams::constant(Index n_echoes, double flip_deg, double echo_spacing_ms)
{
  return from_flips(std::vector<double>(static_cast<size_t>(n_echoes), flip_deg), echo_spacing_ms);
}

SequenceParams SequenceParams::from_flips(std::vector<double> flips_deg, double echo_spacing_ms)
{
  SequenceParams seq;
  seq.flip_phases_deg.assign(flips_deg.size(), 90.0);
  seq.flips_deg = std::move(flips_deg);
  seq.echo_spacing_ms = echo_spacing_ms;
  return seq;
}

RfMatrix rf_matrix(double alpha_deg, double phi_deg)
{
  double const a = deg2rad(alpha_deg);
  double const p = deg2rad(phi_deg);
  double const c2 = std::cos(a / 2) * std::cos(a / 2);
  double const s2 = std::sin(a / 2) * std::sin(a / 2);
  double const sa = std::sin(a);
  cplx const e1 = std::polar(1.0, p);
  cplx const e2 = std::polar(1.0, 2 * p);

  RfMatrix T;
  T(0, 0) = c2;
  T(0, 1) = e2 * s2;
  T(0, 2) = -I * e1 * sa;
  T(1, 0) = std::conj(e2) * s2;
  T(1, 1) = c2;
  T(1, 2) = I * std::conj(e1) * sa;
  T(2, 0) = -0.5 * I * std::conj(e1) * sa;
  T(2, 1) = 0.5 * I * e1 * sa;
  T(2, 2) = std::cos(a);
  return T;
}

EpgState::EpgState(Index max_order)
  : max_order_(max_order)
  , fplus_(static_cast<size_t>(max_order + 1))
  , fminus_(static_cast<size_t>(max_order + 1))
  , z_(static_cast<size_t>(max_order + 1))
{
  if (max_order < 1) {
    throw std::invalid_argument("EPG state needs max_order >= 1");
  }
}

void EpgState::rotate(RfMatrix const &rf)
{
  for (size_t k = 0; k <= top_; k++) {
    cplx const fp = fplus_[k];
    cplx const fm = fminus_[k];
    cplx const zz = z_[k];
    fplus_[k] = rf(0, 0) * fp + rf(0, 1) * fm + rf(0, 2) * zz;
    fminus_[k] = rf(1, 0) * fp + rf(1, 1) * fm + rf(1, 2) * zz;
    z_[k] = rf(2, 0) * fp + rf(2, 1) * fm + rf(2, 2) * zz;
  }
}

void EpgState::relax(double dt_ms, double t1, double t2)
{
  double const e1 = std::exp(-dt_ms / t1);
  double const e2 = std::exp(-dt_ms / t2);
  for (size_t k = 0; k <= top_; k++) {
    fplus_[k] *= e2;
    fminus_[k] *= e2;
    z_[k] *= e1;
  }
  z_[0] += 1.0 - e1;
}

void EpgState::truncate(Index keep)
{
  if (keep < 0 || static_cast<size_t>(keep) >= top_) {
    return;
  }
  for (size_t k = static_cast<size_t>(keep) + 1; k <= top_; k++) {
    fplus_[k] = 0.0;
    fminus_[k] = 0.0;
    z_[k] = 0.0;
  }
  top_ = static_cast<size_t>(keep);
}

void EpgState::shift()
{
  size_t const Q = fplus_.size() - 1;
  size_t const top = std::min(top_ + 1, Q);
  for (size_t k = top; k >= 1; k--) {
    fplus_[k] = fplus_[k - 1];
  }
  for (size_t k = 0; k < top_; k++) {
    fminus_[k] = fminus_[k + 1];
  }
  fminus_[top_] = 0.0;
  fplus_[0] = std::conj(fminus_[0]);
  top_ = top;
}

cplx receiver_phase(SequenceParams const &seq)
{
  return I * std::polar(1.0, -deg2rad(seq.excitation_phase_deg));
}

EpgState epg_excite(TissueParams const &tissue, SequenceParams const &seq, Index max_order)
{
  EpgState state(max_order);
  state.set_z(0, 1.0);
  state.rotate(rf_matrix(tissue.eta * seq.excitation_deg, seq.excitation_phase_deg));
  return state;
}

void epg_echo_step(EpgState &state, TissueParams const &tissue, double echo_spacing_ms,
                   RfMatrix const &rf)
{
  double const half = echo_spacing_ms / 2;
  state.relax(half, tissue.t1, tissue.t2);
  state.shift();
  state.rotate(rf);
  state.shift();
  state.relax(half, tissue.t1, tissue.t2);
}

void epg_echo_step(EpgState &state, TissueParams const &tissue, double echo_spacing_ms,
                   double flip_deg, double phase_deg)
{
  epg_echo_step(state, tissue, echo_spacing_ms, rf_matrix(tissue.eta * flip_deg, phase_deg));
}

namespace {

SignalEvolution simulate_unchecked(TissueParams const &tissue, SequenceParams const &seq,
                                   Index max_order)
{
  Index const T = seq.n_echoes();
  EpgState state = epg_excite(tissue, seq, max_order);
  cplx const scale = tissue.rho * receiver_phase(seq);
  SignalEvolution out(T);
  RfMatrix rf;
  for (Index i = 0; i < T; i++) {
    if (i == 0 || seq.flips_deg[i] != seq.flips_deg[i - 1] ||
        seq.flip_phases_deg[i] != seq.flip_phases_deg[i - 1]) {
      rf = rf_matrix(tissue.eta * seq.flips_deg[i], seq.flip_phases_deg[i]);
    }
    // Orders above 2(T - i) cannot reach order zero before the last echo.
    state.truncate(2 * (T - i));
    epg_echo_step(state, tissue, seq.echo_spacing_ms, rf);
    out[i] = scale * state.fplus(0);
  }
  return out;
}

using Vec3 = std::array<double, 3>;

Vec3 rotate_about(Vec3 const &m, double angle, double phi)
{
  double const nx = std::cos(phi);
  double const ny = std::sin(phi);
  double const c = std::cos(angle);
  double const s = std::sin(angle);
  double const dot = nx * m[0] + ny * m[1];
  // Rodrigues, axis (nx, ny, 0), right-handed
  Vec3 const cross{ny * m[2], -nx * m[2], nx * m[1] - ny * m[0]};
  return {c * m[0] + s * cross[0] + (1 - c) * dot * nx,
          c * m[1] + s * cross[1] + (1 - c) * dot * ny,
          c * m[2] + s * cross[2]};
}

} // namespace

SignalEvolution simulate_fse(TissueParams const &tissue, SequenceParams const &seq, Index max_order)
{
  tissue.validate();
  seq.validate();
  Index const T = seq.n_echoes();
  if (max_order <= 0) {
    max_order = T + 2;
  }
  if (max_order < T + 1) {
    throw std::invalid_argument("echo train of " + std::to_string(T) +
                                " echoes exceeds EPG capacity of order " +
                                std::to_string(max_order));
  }
  return simulate_unchecked(tissue, seq, max_order);
}

SignalEvolution bloch_isochromat_train(TissueParams const &tissue, SequenceParams const &seq,
                                       Index n_isochromats)
{
  tissue.validate();
  seq.validate();
  Index const T = seq.n_echoes();
  if (n_isochromats < 2 * (T + 1)) {
    throw std::invalid_argument("need at least 2(T+1) isochromats");
  }
  double const e1 = std::exp(-seq.echo_spacing_ms / 2 / tissue.t1);
  double const e2 = std::exp(-seq.echo_spacing_ms / 2 / tissue.t2);

  std::vector<Vec3> spins(static_cast<size_t>(n_isochromats), Vec3{0.0, 0.0, 1.0});
  std::vector<double> cos_dphi(spins.size());
  std::vector<double> sin_dphi(spins.size());
  for (size_t n = 0; n < spins.size(); n++) {
    double const theta = 2 * kPi * static_cast<double>(n) / static_cast<double>(n_isochromats);
    cos_dphi[n] = std::cos(theta);
    sin_dphi[n] = std::sin(theta);
  }

  auto relax = [&](Vec3 &m) {
    m[0] *= e2;
    m[1] *= e2;
    m[2] = m[2] * e1 + (1 - e1);
  };
  auto precess = [&](Vec3 &m, size_t n) {
    double const x = m[0];
    double const y = m[1];
    m[0] = cos_dphi[n] * x - sin_dphi[n] * y;
    m[1] = sin_dphi[n] * x + cos_dphi[n] * y;
  };

  double const exc = deg2rad(tissue.eta * seq.excitation_deg);
  double const exc_phase = deg2rad(seq.excitation_phase_deg);
  for (auto &m : spins) {
    m = rotate_about(m, exc, exc_phase);
  }

  cplx const scale = tissue.rho * receiver_phase(seq);
  SignalEvolution out(T);
  for (Index i = 0; i < T; i++) {
    double const a = deg2rad(tissue.eta * seq.flips_deg[i]);
    double const p = deg2rad(seq.flip_phases_deg[i]);
    double sx = 0.0;
    double sy = 0.0;
    for (size_t n = 0; n < spins.size(); n++) {
      Vec3 &m = spins[n];
      relax(m);
      precess(m, n);
      m = rotate_about(m, a, p);
      precess(m, n);
      relax(m);
      sx += m[0];
      sy += m[1];
    }
    double const inv = 1.0 / static_cast<double>(n_isochromats);
    out[i] = scale * cplx(sx * inv, sy * inv);
  }
  return out;
}

CMat signal_jacobian(TissueParams const &tissue, SequenceParams const &seq,
                     std::vector<SignalParam> const &wrt)
{
  tissue.validate();
  seq.validate();
  Index const T = seq.n_echoes();
  Index const Q = T + 2;
  CMat J(T, static_cast<Index>(wrt.size()));

  auto central = [&](auto &&perturb, double h) {
    TissueParams tp = tissue;
    SequenceParams sp = seq;
    perturb(tp, sp, h);
    SignalEvolution const fwd = simulate_unchecked(tp, sp, Q);
    tp = tissue;
    sp = seq;
    perturb(tp, sp, -h);
    SignalEvolution const bwd = simulate_unchecked(tp, sp, Q);
    return SignalEvolution((fwd - bwd) / (2 * h));
  };

  for (size_t c = 0; c < wrt.size(); c++) {
    auto const &p = wrt[c];
    Index const col = static_cast<Index>(c);
    switch (p.kind) {
    case SignalParam::Kind::rho: {
      TissueParams unit = tissue;
      unit.rho = 1.0;
      J.col(col) = simulate_unchecked(unit, seq, Q);
      break;
    }
    case SignalParam::Kind::t1:
      J.col(col) = central([](TissueParams &t, SequenceParams &, double d) { t.t1 += d; },
                           kRelStep * tissue.t1);
      break;
    case SignalParam::Kind::t2:
      J.col(col) = central([](TissueParams &t, SequenceParams &, double d) { t.t2 += d; },
                           kRelStep * tissue.t2);
      break;
    case SignalParam::Kind::eta:
      J.col(col) = central([](TissueParams &t, SequenceParams &, double d) { t.eta += d; },
                           kRelStep * tissue.eta);
      break;
    case SignalParam::Kind::flip: {
      if (p.flip_index < 0 || p.flip_index >= T) {
        throw std::invalid_argument("flip index out of range in Jacobian selector");
      }
      auto const idx = static_cast<size_t>(p.flip_index);
      J.col(col) = central(
        [idx](TissueParams &, SequenceParams &s, double d) { s.flips_deg[idx] += d; },
        rad2deg(kAngleStepRad));
      break;
    }
    }
  }
  return J;
}

} // namespace spinshuffle
