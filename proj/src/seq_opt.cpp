#include "spinshuffle/seq_opt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "first_error.hpp"

namespace spinshuffle {

namespace {

std::vector<SignalParam> joint_params(SignalParam const &target, std::vector<SignalParam> const &nuisance)
{
  std::vector<SignalParam> params;
  for (auto const &p : nuisance) {
    if (!(p == target)) {
      params.push_back(p);
    }
  }
  params.push_back(target);
  return params;
}

SequenceParams with_flips(SequenceParams seq, std::vector<double> const &flips)
{
  seq.flips_deg = flips;
  return seq;
}

} // namespace

Index FisherInfo::index_of(SignalParam const &p) const
{
  for (size_t i = 0; i < params.size(); i++) {
    if (params[i] == p) {
      return static_cast<Index>(i);
    }
  }
  throw std::invalid_argument("parameter " + param_name(p) + " is not part of this information matrix");
}

std::string param_name(SignalParam const &p)
{
  switch (p.kind) {
  case SignalParam::Kind::rho:
    return "rho";
  case SignalParam::Kind::t1:
    return "T1";
  case SignalParam::Kind::t2:
    return "T2";
  case SignalParam::Kind::eta:
    return "eta";
  case SignalParam::Kind::flip:
    return "flip" + std::to_string(p.flip_index);
  }
  return "?";
}

FisherInfo fisher_info(TissueParams const &tissue, SequenceParams const &seq, double sigma,
                       std::vector<SignalParam> const &params)
{
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("noise level must be positive");
  }
  if (params.empty()) {
    throw std::invalid_argument("Fisher information needs at least one parameter");
  }
  CMat const J = signal_jacobian(tissue, seq, params);
  FisherInfo info;
  info.params = params;
  info.sigma = sigma;
  RMat const m = (2.0 / (sigma * sigma)) * (J.adjoint() * J).real();
  info.matrix = 0.5 * (m + m.transpose());
  return info;
}

double crlb(FisherInfo const &info, SignalParam const &param)
{
  Index const p = info.index_of(param);
  Eigen::SelfAdjointEigenSolver<RMat> eig(info.matrix);
  RVec const lambda = eig.eigenvalues();
  double const top = std::abs(lambda.maxCoeff());
  if (!(top > 0.0) || lambda.minCoeff() <= 1e-12 * top) {
    throw NonIdentifiable("Fisher information is singular; " + param_name(param) +
                          " is not identifiable");
  }
  RMat const V = eig.eigenvectors();
  double bound = 0.0;
  for (Index k = 0; k < lambda.size(); k++) {
    bound += V(p, k) * V(p, k) / lambda[k];
  }
  return bound;
}

void PowerBudget::validate() const
{
  if (!(limit > 0.0)) {
    throw std::invalid_argument("power budget must be positive");
  }
}

double PowerBudget::power_of(std::vector<double> const &flips_deg)
{
  double s = 0.0;
  for (double f : flips_deg) {
    s += deg2rad(f) * deg2rad(f);
  }
  return s;
}

double equal_power_flip(PowerBudget const &budget, Index n_echoes, double max_flip_deg)
{
  budget.validate();
  if (n_echoes < 1) {
    throw std::invalid_argument("need at least one echo");
  }
  return std::min(max_flip_deg, rad2deg(std::sqrt(budget.limit / static_cast<double>(n_echoes))));
}

FlipSchedule optimize_flips(TissueParams const &tissue, SequenceParams const &seq_template,
                            PowerBudget const &budget, SignalParam const &target,
                            FlipOptConfig const &cfg)
{
  budget.validate();
  tissue.validate();
  Index const T = seq_template.n_echoes();
  if (T < 1) {
    throw std::invalid_argument("sequence template has no echoes");
  }
  if (!(cfg.min_flip_deg >= 0.0 && cfg.min_flip_deg < cfg.max_flip_deg && cfg.max_flip_deg <= 180.0)) {
    throw std::invalid_argument("flip bounds must satisfy 0 <= min < max <= 180");
  }
  double const start = equal_power_flip(budget, T, cfg.max_flip_deg);
  if (start < cfg.min_flip_deg) {
    throw std::invalid_argument(
      fmt::format("no feasible start: a constant {:.4g} deg train exceeds the budget", cfg.min_flip_deg));
  }

  std::vector<SignalParam> const params =
    cfg.objective == FlipOptConfig::Objective::inverse_crlb ? joint_params(target, cfg.nuisance)
                                                             : std::vector<SignalParam>{target};
  auto objective = [&](std::vector<double> const &flips) {
    FisherInfo const info = fisher_info(tissue, with_flips(seq_template, flips), cfg.sigma, params);
    if (cfg.objective == FlipOptConfig::Objective::fisher_diagonal) {
      return info.matrix(0, 0);
    }
    try {
      return 1.0 / crlb(info, target);
    } catch (NonIdentifiable const &) {
      return 0.0;
    }
  };
  auto project = [&](std::vector<double> flips) {
    for (double &f : flips) {
      f = std::clamp(f, cfg.min_flip_deg, cfg.max_flip_deg);
    }
    double const power = PowerBudget::power_of(flips);
    if (power > budget.limit) {
      double const scale = std::sqrt(budget.limit / power);
      for (double &f : flips) {
        f *= scale;
      }
    }
    return flips;
  };

  FlipSchedule out;
  std::vector<double> x = project(std::vector<double>(static_cast<size_t>(T), start));
  double fx = objective(x);
  out.objective_trace.push_back(fx);
  double step = cfg.initial_step_deg;
  for (Index it = 1; it <= cfg.max_iters; it++) {
    std::vector<double> grad(static_cast<size_t>(T));
    double gnorm = 0.0;
    for (Index i = 0; i < T; i++) {
      std::vector<double> xp = x;
      std::vector<double> xm = x;
      xp[static_cast<size_t>(i)] += cfg.fd_step_deg;
      xm[static_cast<size_t>(i)] -= cfg.fd_step_deg;
      double const g = (objective(xp) - objective(xm)) / (2.0 * cfg.fd_step_deg);
      grad[static_cast<size_t>(i)] = g;
      gnorm += g * g;
    }
    gnorm = std::sqrt(gnorm);
    if (!(gnorm > 0.0) || !std::isfinite(gnorm)) {
      break;
    }
    bool accepted = false;
    double s = step;
    for (int h = 0; h <= 20; h++, s *= 0.5) {
      std::vector<double> trial = x;
      for (Index i = 0; i < T; i++) {
        trial[static_cast<size_t>(i)] += s * grad[static_cast<size_t>(i)] / gnorm;
      }
      trial = project(std::move(trial));
      double const ft = objective(trial);
      if (ft > fx) {
        double const rel = (ft - fx) / std::max(std::abs(fx), 1e-300);
        x = std::move(trial);
        fx = ft;
        accepted = true;
        step = std::min(2.0 * s, 45.0);
        out.objective_trace.push_back(fx);
        out.iterations = it;
        if (rel < cfg.tolerance) {
          it = cfg.max_iters;
        }
        break;
      }
    }
    if (!accepted) {
      break;
    }
  }
  out.flips_deg = x;
  return out;
}

MinmaxResult minmax_grid_search(std::vector<TissueParams> const &tissues,
                                std::vector<SequenceParams> const &schedules,
                                SignalParam const &target, std::vector<SignalParam> const &nuisance,
                                double sigma)
{
  if (tissues.empty() || schedules.empty()) {
    throw std::invalid_argument("min-max search needs nonempty tissue and schedule grids");
  }
  std::vector<SignalParam> const params = joint_params(target, nuisance);
  Index const S = static_cast<Index>(schedules.size());
  Index const P = static_cast<Index>(tissues.size());
  MinmaxResult res;
  res.costs.resize(S, P);
  FirstError err;
#pragma omp parallel for schedule(dynamic, 1)
  for (Index s = 0; s < S; s++) {
    try {
      for (Index t = 0; t < P; t++) {
        double cost = std::numeric_limits<double>::infinity();
        try {
          cost = crlb(fisher_info(tissues[static_cast<size_t>(t)], schedules[static_cast<size_t>(s)],
                                  sigma, params),
                      target);
        } catch (NonIdentifiable const &) {
        }
        res.costs(s, t) = cost;
      }
    } catch (...) {
      err.capture();
    }
  }
  err.rethrow();
  res.best = 0;
  res.worst_case = res.costs.row(0).maxCoeff();
  for (Index s = 1; s < S; s++) {
    double const w = res.costs.row(s).maxCoeff();
    if (w < res.worst_case) {
      res.worst_case = w;
      res.best = s;
    }
  }
  return res;
}

double optimal_te(double t2a, double t2b)
{
  if (!(t2a > 0.0 && t2b > 0.0)) {
    throw std::invalid_argument("T2 values must be positive");
  }
  if (t2a == t2b) {
    throw std::invalid_argument("contrast time is undefined for equal T2 values");
  }
  return -std::log(t2a / t2b) / (1.0 / t2a - 1.0 / t2b);
}

std::vector<double> normalized_amplitudes(TissueParams const &tissue, SequenceParams const &seq)
{
  SignalEvolution const s = simulate_fse(tissue, seq);
  double const r = std::abs(tissue.rho);
  if (!(r > 0.0)) {
    throw std::invalid_argument("normalized amplitudes need nonzero proton density");
  }
  std::vector<double> out(static_cast<size_t>(s.size()));
  for (Index i = 0; i < s.size(); i++) {
    out[static_cast<size_t>(i)] =
      std::abs(s[i]) * std::exp(static_cast<double>(i + 1) * seq.echo_spacing_ms / tissue.t2) / r;
  }
  return out;
}

AsymptoticDesign design_asymptotic_flips(TissueParams const &tissue,
                                         SequenceParams const &seq_template, double s_target,
                                         double alpha_max_deg, Index n_constant, double decay)
{
  tissue.validate();
  seq_template.validate();
  Index const T = seq_template.n_echoes();
  if (!(alpha_max_deg > 0.0 && alpha_max_deg <= 180.0)) {
    throw std::invalid_argument("alpha_max must lie in (0, 180] degrees");
  }
  if (n_constant < 1 || n_constant > T) {
    throw std::invalid_argument("controlled echo count must lie in [1, T]");
  }
  if (!(decay > 0.0 && decay < 1.0)) {
    throw std::invalid_argument("approach factor must lie in (0, 1)");
  }
  double const Ts = seq_template.echo_spacing_ms;
  double const r = std::abs(tissue.rho);
  if (!(r > 0.0)) {
    throw std::invalid_argument("design needs nonzero proton density");
  }
  Index const Q = T + 2;

  auto amplitude_after = [&](EpgState state, Index echo, double flip) {
    epg_echo_step(state, tissue, Ts, flip, seq_template.flip_phases_deg[static_cast<size_t>(echo)]);
    return std::abs(state.fplus(0)) * std::exp(static_cast<double>(echo + 1) * Ts / tissue.t2) / r;
  };

  EpgState state = epg_excite(tissue, seq_template, Q);

  AsymptoticDesign out;
  out.first_echo_max = 0.0;
  for (int k = 0; k <= 3600; k++) {
    double const a = alpha_max_deg * k / 3600.0;
    out.first_echo_max = std::max(out.first_echo_max, amplitude_after(state, 0, a));
  }
  double const s1 = out.first_echo_max;
  if (!(s_target > 0.0) || s_target > s1 * (1.0 + 1e-9)) {
    throw std::invalid_argument(fmt::format(
      "signal target {:.6g} must lie in (0, {:.6g}], the first-echo maximum", s_target, s1));
  }

  std::vector<double> flips(static_cast<size_t>(T));
  for (Index i = 0; i < n_constant; i++) {
    double const target = s_target + (s1 - s_target) * std::pow(decay, static_cast<double>(i + 1));
    double lo = 0.0;
    double hi = alpha_max_deg;
    double const g_lo = amplitude_after(state, i, lo) - target;
    double const g_hi = amplitude_after(state, i, hi) - target;
    double flip;
    if (std::abs(g_hi) <= 1e-12) {
      flip = hi;
    } else if (std::abs(g_lo) <= 1e-12) {
      flip = lo;
    } else if ((g_lo < 0.0) == (g_hi < 0.0)) {
      throw std::runtime_error(
        fmt::format("signal target {:.6g} is unreachable at echo {}", target, i + 1));
    } else {
      bool const rising = g_lo < 0.0;
      for (int it = 0; it < 200 && hi - lo > 1e-13; it++) {
        double const mid = 0.5 * (lo + hi);
        bool const below = amplitude_after(state, i, mid) < target;
        if (below == rising) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      flip = 0.5 * (lo + hi);
    }
    flips[static_cast<size_t>(i)] = flip;
    out.targets.push_back(target);
    epg_echo_step(state, tissue, Ts, flip, seq_template.flip_phases_deg[static_cast<size_t>(i)]);
  }
  double const last = flips[static_cast<size_t>(n_constant - 1)];
  Index const rest = T - n_constant;
  for (Index j = 1; j <= rest; j++) {
    flips[static_cast<size_t>(n_constant - 1 + j)] =
      last + (alpha_max_deg - last) * static_cast<double>(j) / static_cast<double>(rest);
  }
  out.flips_deg = flips;

  std::vector<double> const amp = normalized_amplitudes(tissue, with_flips(seq_template, flips));
  out.achieved.assign(amp.begin(), amp.begin() + n_constant);
  return out;
}

void write_schedule_csv(std::ostream &os, std::vector<double> const &flips_deg)
{
  os << "echo,flip_deg\n";
  for (size_t i = 0; i < flips_deg.size(); i++) {
    os << fmt::format("{},{:.17g}\n", i + 1, flips_deg[i]);
  }
}

std::vector<double> read_schedule_csv(std::istream &is)
{
  std::string line;
  if (!std::getline(is, line)) {
    throw std::runtime_error("schedule CSV is empty");
  }
  std::vector<double> flips;
  Index expected = 1;
  while (std::getline(is, line)) {
    if (line.empty()) {
      continue;
    }
    auto const comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error("malformed schedule line: " + line);
    }
    Index const echo = std::stol(line.substr(0, comma));
    if (echo != expected) {
      throw std::runtime_error("schedule echoes must be numbered 1, 2, ...");
    }
    flips.push_back(std::stod(line.substr(comma + 1)));
    expected++;
  }
  return flips;
}

std::vector<CrlbSweepRow> crlb_sweep(TissueParams tissue, SequenceParams const &constant,
                                     SequenceParams const &optimized,
                                     std::vector<double> const &t2_values, SignalParam const &target,
                                     std::vector<SignalParam> const &nuisance, double sigma)
{
  std::vector<SignalParam> const params = joint_params(target, nuisance);
  std::vector<CrlbSweepRow> rows;
  for (double t2 : t2_values) {
    tissue.t2 = t2;
    CrlbSweepRow row;
    row.t2 = t2;
    row.bound_constant = crlb(fisher_info(tissue, constant, sigma, params), target);
    row.bound_optimized = crlb(fisher_info(tissue, optimized, sigma, params), target);
    rows.push_back(row);
  }
  return rows;
}

void write_crlb_sweep_csv(std::ostream &os, std::vector<CrlbSweepRow> const &rows)
{
  os << "T2,bound_constant,bound_optimized\n";
  for (auto const &r : rows) {
    os << fmt::format("{:.17g},{:.17g},{:.17g}\n", r.t2, r.bound_constant, r.bound_optimized);
  }
}

} // namespace spinshuffle
