#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spinshuffle/phantom.hpp"
#include "spinshuffle/qmap.hpp"
#include "spinshuffle/recon.hpp"
#include "spinshuffle/sampling.hpp"
#include "spinshuffle/seq_opt.hpp"

namespace spinshuffle {

// "[section]" headers, "key = value" lines, '#' comments.
class IniFile {
public:
  static IniFile parse(std::string const &text);
  static IniFile load(std::string const &path);

  std::string to_string() const;

  bool has(std::string const &section, std::string const &key) const;
  std::string const &get(std::string const &section, std::string const &key) const;
  void set(std::string const &section, std::string const &key, std::string value);

  std::vector<std::string> keys(std::string const &section) const;
  std::vector<std::string> sections() const;

private:
  std::map<std::string, std::map<std::string, std::string>> data_;
};

std::string format_double(double v);

struct PipelineConfig {
  enum class MaskScheme { independent, randomized, center_out };
  enum class ReconMethod { cg, fista_identity, fista_wavelet };

  PhantomSpec phantom = default_phantom_spec();
  SequenceParams seq = SequenceParams::constant(32, 180.0, 10.0);

  TissuePrior prior;
  Index ensemble_size = 256;
  Index K = 3;

  DensityProfile density;
  MaskScheme mask_scheme = MaskScheme::independent;
  std::uint64_t mask_seed = 1;
  Index monte_carlo_trials = 0; // > 0 picks each mask by lowest TPSF peak
  Index probe_count = 64;

  double noise_sigma = 0.005;
  std::uint64_t noise_seed = 2;

  ReconMethod recon_method = ReconMethod::fista_wavelet;
  SolverConfig solver;

  FitMethod fit_method = FitMethod::subspace;
  FitOptions fit;
  Index dictionary_points = 400;

  // seq-opt study
  TissueParams crlb_tissue;
  double crlb_budget_flip_deg = 120.0;
  FlipOptConfig flip_opt;
  double sweep_t2_min = 40.0;
  double sweep_t2_max = 300.0;
  Index sweep_points = 27;

  std::string output_dir = "out";

  // prior <- s, masks <- s + 1, noise <- s + 2
  void apply_seed(std::uint64_t s);
  void validate() const;

  static PipelineConfig defaults();
  static PipelineConfig from_ini(IniFile const &ini);
  IniFile to_ini() const;
};

} // namespace spinshuffle
