#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "spinshuffle/spin_sim.hpp"

namespace spinshuffle {

// I = (2 / sigma^2) Re(J^H J) for complex circular Gaussian noise of standard
// deviation sigma per complex sample.
struct FisherInfo {
  RMat matrix;
  std::vector<SignalParam> params;
  double sigma = 1.0;

  Index index_of(SignalParam const &p) const;
};

FisherInfo fisher_info(TissueParams const &tissue, SequenceParams const &seq, double sigma,
                       std::vector<SignalParam> const &params);

// [I^-1]_pp. Throws NonIdentifiable when I is numerically singular.
double crlb(FisherInfo const &info, SignalParam const &param);

std::string param_name(SignalParam const &p);

struct PowerBudget {
  double limit = 0.0; // sum of squared flips, rad^2

  void validate() const;
  static double power_of(std::vector<double> const &flips_deg);
};

struct FlipOptConfig {
  enum class Objective { fisher_diagonal, inverse_crlb };

  Objective objective = Objective::fisher_diagonal;
  std::vector<SignalParam> nuisance{SignalParam::rho()}; // joint with the target for inverse_crlb
  double min_flip_deg = 20.0;
  double max_flip_deg = 180.0;
  double sigma = 1.0;
  Index max_iters = 200;
  double initial_step_deg = 10.0;
  double fd_step_deg = 1e-3;
  double tolerance = 1e-10; // relative objective change
};

struct FlipSchedule {
  std::vector<double> flips_deg;
  std::vector<double> objective_trace; // nondecreasing
  Index iterations = 0;
};

// Projected gradient ascent over the refocusing flips. Starts from the
// constant schedule that spends the whole budget; each candidate is clipped to
// [min_flip, max_flip] and rescaled into the budget.
FlipSchedule optimize_flips(TissueParams const &tissue, SequenceParams const &seq_template,
                            PowerBudget const &budget, SignalParam const &target,
                            FlipOptConfig const &cfg = {});

// Constant flip (degrees) whose train of n echoes uses exactly the budget,
// capped at max_flip_deg.
double equal_power_flip(PowerBudget const &budget, Index n_echoes, double max_flip_deg = 180.0);

struct MinmaxResult {
  Index best = -1;
  double worst_case = 0.0;
  RMat costs; // schedules x tissues, +inf where information is singular
};

// argmin over schedules of the max over tissues of CRLB(target), lowest index
// on ties. The bound is computed jointly with the nuisance parameters.
MinmaxResult minmax_grid_search(std::vector<TissueParams> const &tissues,
                                std::vector<SequenceParams> const &schedules,
                                SignalParam const &target,
                                std::vector<SignalParam> const &nuisance = {SignalParam::rho()},
                                double sigma = 1.0);

// Echo time maximizing |exp(-t/a) - exp(-t/b)|.
double optimal_te(double t2a, double t2b);

struct AsymptoticDesign {
  std::vector<double> flips_deg;
  std::vector<double> targets;  // controlled echoes, normalized amplitude
  std::vector<double> achieved; // same echoes after resimulation
  double first_echo_max = 0.0;
};

// Normalized amplitude of echo i: |s_i| exp(i Ts / T2) / |rho|. A 180 degree
// CPMG train holds it at 1.
std::vector<double> normalized_amplitudes(TissueParams const &tissue, SequenceParams const &seq);

// Flips chosen echo by echo (bisection on the next-echo amplitude) so the
// first n_constant echoes follow s_i = s_target + (s1max - s_target) decay^i;
// the remaining flips ramp linearly to alpha_max.
AsymptoticDesign design_asymptotic_flips(TissueParams const &tissue,
                                         SequenceParams const &seq_template, double s_target,
                                         double alpha_max_deg, Index n_constant,
                                         double decay = 0.5);

// CSV: echo,flip_deg
void write_schedule_csv(std::ostream &os, std::vector<double> const &flips_deg);
std::vector<double> read_schedule_csv(std::istream &is);

struct CrlbSweepRow {
  double t2 = 0.0;
  double bound_constant = 0.0;
  double bound_optimized = 0.0;
};

std::vector<CrlbSweepRow> crlb_sweep(TissueParams tissue, SequenceParams const &constant,
                                     SequenceParams const &optimized,
                                     std::vector<double> const &t2_values, SignalParam const &target,
                                     std::vector<SignalParam> const &nuisance = {SignalParam::rho()},
                                     double sigma = 1.0);

// CSV: T2,bound_constant,bound_optimized
void write_crlb_sweep_csv(std::ostream &os, std::vector<CrlbSweepRow> const &rows);

} // namespace spinshuffle
