#include "spinshuffle/qmap.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "spinshuffle/kernels.hpp"

namespace spinshuffle {

namespace {
constexpr double kGolden = 0.61803398874989484820;
constexpr cplx I{0.0, 1.0};
} // namespace

VoxelFitter::VoxelFitter(SequenceParams seq, FitOptions opts, std::optional<SubspaceBasis> basis)
  : seq_(std::move(seq))
  , opts_(opts)
  , basis_(std::move(basis))
{
  seq_.validate();
  if (basis_ && basis_->T() != seq_.n_echoes()) {
    throw std::invalid_argument("basis and sequence disagree on echo count");
  }
  // T2 above the nominal T1 is unphysical.
  t2_hi_ = std::min(opts_.bounds.t2_max, opts_.t1_nominal);
  if (!(opts_.bounds.t2_min > 0.0) || !(opts_.bounds.t2_min < t2_hi_)) {
    throw std::invalid_argument("T2 bounds are empty");
  }
  if (opts_.coarse_points < 2) {
    throw std::invalid_argument("coarse T2 scan needs at least two points");
  }
  double const a = std::log(opts_.bounds.t2_min);
  double const b = std::log(t2_hi_);
  for (Index g = 0; g < opts_.coarse_points; g++) {
    double const t2 =
      std::exp(a + (b - a) * static_cast<double>(g) / static_cast<double>(opts_.coarse_points - 1));
    grid_t2_.push_back(std::min(t2, t2_hi_));
    grid_atoms_.push_back(model(grid_t2_.back(), opts_.eta_nominal));
  }
}

Index VoxelFitter::data_length() const { return basis_ ? basis_->K() : seq_.n_echoes(); }

CVec VoxelFitter::to_data_space(CVec const &evolution) const
{
  if (basis_) {
    return basis_->phi.adjoint() * evolution;
  }
  return evolution;
}

CVec VoxelFitter::model(double t2, double eta) const
{
  TissueParams tissue;
  tissue.t1 = opts_.t1_nominal;
  tissue.t2 = t2;
  tissue.eta = eta;
  return to_data_space(simulate_fse(tissue, seq_));
}

CVec VoxelFitter::t2_derivative(double t2, double eta) const
{
  TissueParams tissue;
  tissue.t1 = opts_.t1_nominal;
  tissue.t2 = t2;
  tissue.eta = eta;
  return to_data_space(signal_jacobian(tissue, seq_, {SignalParam::t2()}).col(0));
}

CVec VoxelFitter::eta_derivative(double t2, double eta) const
{
  TissueParams tissue;
  tissue.t1 = opts_.t1_nominal;
  tissue.t2 = t2;
  tissue.eta = eta;
  return to_data_space(signal_jacobian(tissue, seq_, {SignalParam::eta()}).col(0));
}

double VoxelFitter::projected_cost(CVec const &data, double t2, double eta, cplx *rho) const
{
  CVec const g = model(t2, eta);
  double const gg = g.squaredNorm();
  cplx const r = gg > 0.0 ? g.dot(data) / gg : cplx{0.0};
  if (rho) {
    *rho = r;
  }
  return 0.5 * (data - r * g).squaredNorm();
}

FitResult VoxelFitter::fit(CVec const &data) const { return fit(data, opts_.t2_init); }

FitResult VoxelFitter::fit(CVec const &data, double t2_init) const
{
  if (data.size() != data_length()) {
    throw std::invalid_argument("voxel data has length " + std::to_string(data.size()) +
                                ", fitter expects " + std::to_string(data_length()));
  }
  if (!(t2_init >= opts_.bounds.t2_min && t2_init <= t2_hi_)) {
    throw std::invalid_argument("initial T2 outside the fit bounds");
  }
  FitResult res;
  res.t1 = opts_.t1_nominal;
  res.eta = opts_.eta_nominal;
  res.t2 = t2_init;
  if (data.squaredNorm() == 0.0) {
    res.t2_defined = false;
    return res;
  }

  // Coarse scan on the precomputed grid.
  Index best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (size_t g = 0; g < grid_atoms_.size(); g++) {
    CVec const &atom = grid_atoms_[g];
    cplx const r = atom.dot(data) / atom.squaredNorm();
    double const c = 0.5 * (data - r * atom).squaredNorm();
    if (c < best_cost) {
      best_cost = c;
      best = static_cast<Index>(g);
    }
  }

  // Golden-section in log T2 between the neighbours of the best grid point.
  double const eta0 = opts_.eta_nominal;
  double lo = std::log(grid_t2_[static_cast<size_t>(std::max<Index>(best - 1, 0))]);
  double hi = std::log(grid_t2_[static_cast<size_t>(std::min<Index>(best + 1, opts_.coarse_points - 1))]);
  double t2 = grid_t2_[static_cast<size_t>(best)];
  double cost = best_cost;
  {
    double x1 = hi - kGolden * (hi - lo);
    double x2 = lo + kGolden * (hi - lo);
    double f1 = projected_cost(data, std::exp(x1), eta0);
    double f2 = projected_cost(data, std::exp(x2), eta0);
    while (hi - lo > 1e-5) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - kGolden * (hi - lo);
        f1 = projected_cost(data, std::exp(x1), eta0);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + kGolden * (hi - lo);
        f2 = projected_cost(data, std::exp(x2), eta0);
      }
    }
    double const xm = 0.5 * (lo + hi);
    double const t2m = std::clamp(std::exp(xm), opts_.bounds.t2_min, t2_hi_);
    double const fm = projected_cost(data, t2m, eta0);
    if (fm < cost) {
      cost = fm;
      t2 = t2m;
    }
  }

  // Gauss-Newton polish over (Re rho, Im rho, T2[, eta]).
  double eta = eta0;
  cplx rho;
  cost = projected_cost(data, t2, eta, &rho);
  Index const P = opts_.fit_eta ? 4 : 3;
  double last_rel = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (Index step = 0; step < opts_.max_gn_steps; step++) {
    CVec const g = model(t2, eta);
    CVec const r = data - rho * g;
    CMat J(g.size(), P);
    J.col(0) = g;
    J.col(1) = I * g;
    J.col(2) = rho * t2_derivative(t2, eta);
    if (opts_.fit_eta) {
      J.col(3) = rho * eta_derivative(t2, eta);
    }
    RMat const H = (J.adjoint() * J).real();
    RVec const b = (J.adjoint() * r).real();
    RVec const delta = H.ldlt().solve(b);
    if (!delta.allFinite()) {
      break;
    }
    double const proposed = std::abs(delta[2]) / t2 + (opts_.fit_eta ? std::abs(delta[3]) : 0.0);
    if (proposed < 1e-10) {
      converged = true;
      break;
    }
    double s = 1.0;
    bool accepted = false;
    double t2n = t2;
    double etan = eta;
    cplx rhon;
    for (int h = 0; h <= 20; h++, s *= 0.5) {
      t2n = std::clamp(t2 + s * delta[2], opts_.bounds.t2_min, t2_hi_);
      etan = opts_.fit_eta ? std::clamp(eta + s * delta[3], opts_.bounds.eta_min, opts_.bounds.eta_max)
                           : eta;
      if ((t2n == t2 && etan == eta) || s * proposed < 1e-13) {
        break;
      }
      double const cn = projected_cost(data, t2n, etan, &rhon);
      // near the minimum the cost is flat to round-off; ties still follow the gradient
      if (cn < cost || (s == 1.0 && cn - cost <= 16 * std::numeric_limits<double>::epsilon() * cost)) {
        accepted = true;
        cost = cn;
        break;
      }
    }
    if (!accepted) {
      converged = true;
      break;
    }
    last_rel = std::abs(t2n - t2) / t2 + std::abs(etan - eta);
    t2 = t2n;
    eta = etan;
    rho = rhon;
    if (last_rel < 1e-12) {
      converged = true;
      break;
    }
  }
  if (!converged && last_rel < 1e-6) {
    converged = true;
  }

  res.t2 = t2;
  res.eta = eta;
  res.residual = projected_cost(data, t2, eta, &res.rho);
  res.converged = converged;
  return res;
}

FitResult fit_voxel_nlls(CVec const &signal, SequenceParams const &seq, FitOptions const &opts)
{
  return VoxelFitter(seq, opts).fit(signal);
}

FitResult fit_voxel_subspace(CVec const &alpha, SubspaceBasis const &basis,
                             SequenceParams const &seq, FitOptions const &opts)
{
  return VoxelFitter(seq, opts, basis).fit(alpha);
}

Dictionary build_dictionary(std::vector<TissueParams> const &tissues, SequenceParams const &seq,
                            std::optional<SubspaceBasis> const &basis)
{
  if (tissues.empty()) {
    throw std::invalid_argument("dictionary needs at least one entry");
  }
  Dictionary dict;
  dict.params = tissues;
  for (auto &p : dict.params) {
    p.rho = 1.0;
  }
  dict.atoms = kernels::omp::ensemble(dict.params, seq);
  for (Index d = 0; d < dict.atoms.cols(); d++) {
    double const n = dict.atoms.col(d).norm();
    if (n == 0.0) {
      throw std::invalid_argument("dictionary entry " + std::to_string(d) + " has zero signal");
    }
    dict.atoms.col(d) /= n;
  }
  if (basis) {
    dict.compressed = basis->phi.adjoint() * dict.atoms;
  }
  return dict;
}

FitResult dictionary_match(CVec const &data, Dictionary const &dict, MatchSpace space)
{
  if (dict.size() == 0) {
    throw std::invalid_argument("empty dictionary");
  }
  CMat const *atoms = &dict.atoms;
  if (space == MatchSpace::coefficients) {
    if (!dict.compressed) {
      throw std::invalid_argument("dictionary has no compressed atoms");
    }
    atoms = &*dict.compressed;
  }
  if (data.size() != atoms->rows()) {
    throw std::invalid_argument("data length does not match dictionary atoms");
  }
  Index best = 0;
  double best_mag = -1.0;
  for (Index d = 0; d < atoms->cols(); d++) {
    double const m = std::abs(atoms->col(d).dot(data));
    if (m > best_mag) {
      best_mag = m;
      best = d;
    }
  }
  FitResult res;
  res.atom = best;
  res.rho = atoms->col(best).dot(data);
  res.t1 = dict.params[static_cast<size_t>(best)].t1;
  res.t2 = dict.params[static_cast<size_t>(best)].t2;
  res.eta = dict.params[static_cast<size_t>(best)].eta;
  res.residual = 0.5 * (data - res.rho * atoms->col(best)).squaredNorm();
  res.converged = true;
  res.t2_defined = data.squaredNorm() > 0.0;
  return res;
}

ParameterMaps assemble_maps(std::vector<FitResult> const &fits)
{
  Index const N = static_cast<Index>(fits.size());
  ParameterMaps maps;
  maps.rho.resize(N);
  maps.t2.resize(N);
  maps.residual.resize(N);
  maps.failed.resize(fits.size());
  for (Index v = 0; v < N; v++) {
    auto const &f = fits[static_cast<size_t>(v)];
    maps.rho[v] = f.rho;
    maps.t2[v] = f.t2;
    maps.residual[v] = f.residual;
    maps.failed[static_cast<size_t>(v)] = (!f.t2_defined || !f.converged) ? 1 : 0;
  }
  return maps;
}

ParameterMaps fit_map(CMat const &stack, std::optional<SubspaceBasis> const &basis,
                      SequenceParams const &seq, FitMethod method, FitOptions const &opts,
                      Dictionary const *dict)
{
  switch (method) {
  case FitMethod::nlls: {
    if (stack.cols() != seq.n_echoes()) {
      throw std::invalid_argument("image stack frames do not match the echo count");
    }
    VoxelFitter const fitter(seq, opts);
    return assemble_maps(kernels::omp::fit_voxels(fitter, stack));
  }
  case FitMethod::subspace: {
    if (!basis) {
      throw std::invalid_argument("subspace fitting needs a basis");
    }
    if (stack.cols() != basis->K()) {
      throw std::invalid_argument("coefficient stack frames do not match the basis size");
    }
    VoxelFitter const fitter(seq, opts, basis);
    return assemble_maps(kernels::omp::fit_voxels(fitter, stack));
  }
  case FitMethod::dictionary: {
    if (!dict) {
      throw std::invalid_argument("dictionary fitting needs a dictionary");
    }
    MatchSpace const space =
      stack.cols() == dict->atoms.rows() ? MatchSpace::time : MatchSpace::coefficients;
    return assemble_maps(kernels::omp::match_voxels(*dict, stack, space));
  }
  }
  throw std::invalid_argument("unknown fit method");
}

} // namespace spinshuffle
