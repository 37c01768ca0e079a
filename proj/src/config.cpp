#include "spinshuffle/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace spinshuffle {

namespace {

std::string trim(std::string const &s)
{
  auto const b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return "";
  }
  auto const e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string const &s)
{
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(trim(item));
  }
  return out;
}

std::string where(std::string const &section, std::string const &key)
{
  return "[" + section + "] " + key;
}

double to_double(std::string const &section, std::string const &key, std::string const &v)
{
  try {
    size_t pos = 0;
    double const d = std::stod(v, &pos);
    if (pos != v.size()) {
      throw std::invalid_argument("trailing characters");
    }
    return d;
  } catch (std::exception const &) {
    throw std::invalid_argument(where(section, key) + ": expected a number, got '" + v + "'");
  }
}

long long to_integer(std::string const &section, std::string const &key, std::string const &v)
{
  try {
    size_t pos = 0;
    long long const n = std::stoll(v, &pos);
    if (pos != v.size()) {
      throw std::invalid_argument("trailing characters");
    }
    return n;
  } catch (std::exception const &) {
    throw std::invalid_argument(where(section, key) + ": expected an integer, got '" + v + "'");
  }
}

std::uint64_t to_u64(std::string const &section, std::string const &key, std::string const &v)
{
  try {
    size_t pos = 0;
    if (!v.empty() && v[0] == '-') {
      throw std::invalid_argument("negative");
    }
    unsigned long long const n = std::stoull(v, &pos);
    if (pos != v.size()) {
      throw std::invalid_argument("trailing characters");
    }
    return n;
  } catch (std::exception const &) {
    throw std::invalid_argument(where(section, key) + ": expected an unsigned integer, got '" + v + "'");
  }
}

bool to_bool(std::string const &section, std::string const &key, std::string const &v)
{
  if (v == "true" || v == "1") {
    return true;
  }
  if (v == "false" || v == "0") {
    return false;
  }
  throw std::invalid_argument(where(section, key) + ": expected true or false, got '" + v + "'");
}

std::string join(std::vector<double> const &values)
{
  std::string out;
  for (size_t i = 0; i < values.size(); i++) {
    out += (i ? ", " : "") + format_double(values[i]);
  }
  return out;
}

template <class E>
E to_enum(std::string const &section, std::string const &key, std::string const &v,
          std::vector<std::pair<char const *, E>> const &table)
{
  for (auto const &[name, e] : table) {
    if (v == name) {
      return e;
    }
  }
  std::string options;
  for (auto const &[name, e] : table) {
    options += (options.empty() ? "" : ", ") + std::string(name);
  }
  throw std::invalid_argument(where(section, key) + ": '" + v + "' is not one of " + options);
}

template <class E>
std::string enum_name(E e, std::vector<std::pair<char const *, E>> const &table)
{
  for (auto const &[name, x] : table) {
    if (x == e) {
      return name;
    }
  }
  throw std::logic_error("unnamed enum value");
}

std::vector<std::pair<char const *, PipelineConfig::MaskScheme>> const kMaskSchemes{
  {"independent", PipelineConfig::MaskScheme::independent},
  {"randomized", PipelineConfig::MaskScheme::randomized},
  {"center_out", PipelineConfig::MaskScheme::center_out},
};
std::vector<std::pair<char const *, PipelineConfig::ReconMethod>> const kReconMethods{
  {"cg", PipelineConfig::ReconMethod::cg},
  {"fista_identity", PipelineConfig::ReconMethod::fista_identity},
  {"fista_wavelet", PipelineConfig::ReconMethod::fista_wavelet},
};
std::vector<std::pair<char const *, FitMethod>> const kFitMethods{
  {"nlls", FitMethod::nlls},
  {"subspace", FitMethod::subspace},
  {"dictionary", FitMethod::dictionary},
};
std::vector<std::pair<char const *, DensityProfile::Shape>> const kShapes{
  {"polynomial", DensityProfile::Shape::polynomial},
  {"gaussian", DensityProfile::Shape::gaussian},
};
std::vector<std::pair<char const *, TissuePrior::Sampling>> const kPriors{
  {"log_uniform", TissuePrior::Sampling::log_uniform},
  {"uniform", TissuePrior::Sampling::uniform},
};
std::vector<std::pair<char const *, SolverConfig::StepRule>> const kStepRules{
  {"power_iteration", SolverConfig::StepRule::power_iteration},
  {"fixed", SolverConfig::StepRule::fixed},
};
std::vector<std::pair<char const *, FlipOptConfig::Objective>> const kObjectives{
  {"fisher_diagonal", FlipOptConfig::Objective::fisher_diagonal},
  {"inverse_crlb", FlipOptConfig::Objective::inverse_crlb},
};

// Reads one section, rejecting keys nobody asked for.
class SectionReader {
public:
  SectionReader(IniFile const &ini, std::string section)
    : ini_(ini)
    , section_(std::move(section))
  {
  }
  ~SectionReader() noexcept(false)
  {
    if (std::uncaught_exceptions() > 0) {
      return;
    }
    for (auto const &k : ini_.keys(section_)) {
      if (!used_.count(k) && !prefix_used(k)) {
        throw std::invalid_argument("unknown config key " + where(section_, k));
      }
    }
  }

  std::optional<std::string> raw(std::string const &key)
  {
    used_.insert(key);
    if (!ini_.has(section_, key)) {
      return std::nullopt;
    }
    return ini_.get(section_, key);
  }
  void number(std::string const &key, double &out)
  {
    if (auto v = raw(key)) {
      out = to_double(section_, key, *v);
    }
  }
  void integer(std::string const &key, Index &out)
  {
    if (auto v = raw(key)) {
      out = static_cast<Index>(to_integer(section_, key, *v));
    }
  }
  void u64(std::string const &key, std::uint64_t &out)
  {
    if (auto v = raw(key)) {
      out = to_u64(section_, key, *v);
    }
  }
  void boolean(std::string const &key, bool &out)
  {
    if (auto v = raw(key)) {
      out = to_bool(section_, key, *v);
    }
  }
  void text(std::string const &key, std::string &out)
  {
    if (auto v = raw(key)) {
      out = *v;
    }
  }
  template <class E>
  void choice(std::string const &key, E &out, std::vector<std::pair<char const *, E>> const &table)
  {
    if (auto v = raw(key)) {
      out = to_enum(section_, key, *v, table);
    }
  }
  std::vector<double> numbers(std::string const &key)
  {
    std::vector<double> out;
    if (auto v = raw(key)) {
      for (auto const &item : split_list(*v)) {
        out.push_back(to_double(section_, key, item));
      }
    }
    return out;
  }
  // Keys "<prefix>.<n>" in the section, consumed together.
  std::vector<std::pair<std::string, std::string>> prefixed(std::string const &prefix)
  {
    prefixes_.insert(prefix + ".");
    std::vector<std::pair<std::string, std::string>> out;
    for (auto const &k : ini_.keys(section_)) {
      if (k.rfind(prefix + ".", 0) == 0) {
        out.emplace_back(k.substr(prefix.size() + 1), ini_.get(section_, k));
      }
    }
    return out;
  }
  std::string const &section() const { return section_; }

private:
  bool prefix_used(std::string const &k) const
  {
    return std::any_of(prefixes_.begin(), prefixes_.end(),
                       [&](std::string const &p) { return k.rfind(p, 0) == 0; });
  }

  IniFile const &ini_;
  std::string section_;
  std::set<std::string> used_;
  std::set<std::string> prefixes_;
};

} // namespace

IniFile IniFile::parse(std::string const &text)
{
  IniFile ini;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    auto const hash = line.find('#');
    if (hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      ini.data_[section];
      continue;
    }
    auto const eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    if (section.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": key outside any section");
    }
    std::string const key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    }
    if (ini.has(section, key)) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": duplicate key " +
                                  where(section, key));
    }
    ini.data_[section][key] = trim(line.substr(eq + 1));
  }
  return ini;
}

IniFile IniFile::load(std::string const &path)
{
  std::ifstream f(path);
  if (!f) {
    throw std::runtime_error("cannot open config " + path);
  }
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string IniFile::to_string() const
{
  std::string out;
  for (auto const &[section, kv] : data_) {
    out += (out.empty() ? "" : "\n") + std::string("[") + section + "]\n";
    for (auto const &[k, v] : kv) {
      out += k + " = " + v + "\n";
    }
  }
  return out;
}

bool IniFile::has(std::string const &section, std::string const &key) const
{
  auto it = data_.find(section);
  return it != data_.end() && it->second.count(key);
}

std::string const &IniFile::get(std::string const &section, std::string const &key) const
{
  if (!has(section, key)) {
    throw std::invalid_argument("missing config key " + where(section, key));
  }
  return data_.at(section).at(key);
}

void IniFile::set(std::string const &section, std::string const &key, std::string value)
{
  data_[section][key] = std::move(value);
}

std::vector<std::string> IniFile::keys(std::string const &section) const
{
  std::vector<std::string> out;
  auto it = data_.find(section);
  if (it != data_.end()) {
    for (auto const &kv : it->second) {
      out.push_back(kv.first);
    }
  }
  return out;
}

std::vector<std::string> IniFile::sections() const
{
  std::vector<std::string> out;
  for (auto const &kv : data_) {
    out.push_back(kv.first);
  }
  return out;
}

// shortest text that reads back to the same double
std::string format_double(double v) { return fmt::format("{}", v); }

void PipelineConfig::apply_seed(std::uint64_t s)
{
  prior.seed = s;
  mask_seed = s + 1;
  noise_seed = s + 2;
}

PipelineConfig PipelineConfig::defaults()
{
  PipelineConfig c;
  c.density.accel = 4.0;
  c.solver.lambda = 1e-3;
  c.solver.max_iters = 300;
  c.solver.tolerance = 1e-8;
  c.prior.seed = 0;
  c.crlb_tissue.t1 = 1000.0;
  c.crlb_tissue.t2 = 100.0;
  return c;
}

void PipelineConfig::validate() const
{
  make_phantom(phantom);
  seq.validate();
  if (K < 1 || K > seq.n_echoes()) {
    throw std::invalid_argument("K must lie in [1, echoes]");
  }
  if (ensemble_size < K) {
    throw std::invalid_argument("ensemble size must be at least K");
  }
  if (!(density.accel >= 1.0)) {
    throw std::invalid_argument("acceleration must be >= 1");
  }
  if (!(noise_sigma >= 0.0)) {
    throw std::invalid_argument("noise sigma must be nonnegative");
  }
  if (monte_carlo_trials < 0 || probe_count < 1) {
    throw std::invalid_argument("Monte-Carlo trials must be >= 0 and probe count >= 1");
  }
  solver.validate();
  if (dictionary_points < 2) {
    throw std::invalid_argument("dictionary needs at least two entries");
  }
  if (!(sweep_t2_min > 0.0 && sweep_t2_min < sweep_t2_max) || sweep_points < 2) {
    throw std::invalid_argument("CRLB sweep range is empty");
  }
  if (output_dir.empty()) {
    throw std::invalid_argument("output directory must be set");
  }
}

PipelineConfig PipelineConfig::from_ini(IniFile const &ini)
{
  PipelineConfig c = defaults();
  std::set<std::string> const known{"phantom", "sequence", "subspace", "sampling", "noise",
                                    "recon",   "fit",      "crlb",     "output"};
  for (auto const &s : ini.sections()) {
    if (!known.count(s)) {
      throw std::invalid_argument("unknown config section [" + s + "]");
    }
  }
  {
    SectionReader r(ini, "phantom");
    r.integer("nx", c.phantom.nx);
    r.integer("ny", c.phantom.ny);
    auto regions = r.prefixed("region");
    auto ellipses = r.prefixed("ellipse");
    if (!regions.empty()) {
      c.phantom.regions.clear();
      for (auto const &[id, value] : regions) {
        auto const v = split_list(value);
        if (v.size() != 4) {
          throw std::invalid_argument("[phantom] region." + id + ": expected rho, t1, t2, eta");
        }
        TissueParams t;
        t.rho = to_double("phantom", "region." + id, v[0]);
        t.t1 = to_double("phantom", "region." + id, v[1]);
        t.t2 = to_double("phantom", "region." + id, v[2]);
        t.eta = to_double("phantom", "region." + id, v[3]);
        c.phantom.regions[static_cast<int>(to_integer("phantom", "region." + id, id))] = t;
      }
    }
    if (!ellipses.empty() || !regions.empty()) {
      std::map<long long, EllipseSpec> ordered;
      for (auto const &[n, value] : ellipses) {
        auto const v = split_list(value);
        std::string const key = "ellipse." + n;
        if (v.size() != 6) {
          throw std::invalid_argument("[phantom] " + key + ": expected cx, cy, ax, ay, angle, region");
        }
        EllipseSpec e;
        e.cx = to_double("phantom", key, v[0]);
        e.cy = to_double("phantom", key, v[1]);
        e.ax = to_double("phantom", key, v[2]);
        e.ay = to_double("phantom", key, v[3]);
        e.angle_deg = to_double("phantom", key, v[4]);
        e.region = static_cast<int>(to_integer("phantom", key, v[5]));
        ordered[to_integer("phantom", key, n)] = e;
      }
      c.phantom.ellipses.clear();
      for (auto const &kv : ordered) {
        c.phantom.ellipses.push_back(kv.second);
      }
    }
  }
  {
    SectionReader r(ini, "sequence");
    Index echoes = c.seq.n_echoes();
    double flip = 180.0;
    r.integer("echoes", echoes);
    r.number("flip_deg", flip);
    r.number("echo_spacing_ms", c.seq.echo_spacing_ms);
    SequenceParams s = SequenceParams::constant(echoes, flip, c.seq.echo_spacing_ms);
    r.number("excitation_deg", s.excitation_deg);
    r.number("excitation_phase_deg", s.excitation_phase_deg);
    auto flips = r.numbers("flips");
    auto phases = r.numbers("flip_phases");
    if (!flips.empty()) {
      if (ini.has("sequence", "echoes") && static_cast<Index>(flips.size()) != echoes) {
        throw std::invalid_argument("[sequence] flips lists " + std::to_string(flips.size()) +
                                    " angles but echoes = " + std::to_string(echoes));
      }
      s.flips_deg = flips;
      s.flip_phases_deg.assign(flips.size(), 90.0);
    }
    if (!phases.empty()) {
      s.flip_phases_deg = phases;
    }
    c.seq = s;
  }
  {
    SectionReader r(ini, "subspace");
    r.integer("K", c.K);
    r.integer("ensemble_size", c.ensemble_size);
    r.choice("prior", c.prior.sampling, kPriors);
    r.number("t1_min", c.prior.t1_range.first);
    r.number("t1_max", c.prior.t1_range.second);
    r.number("t2_min", c.prior.t2_range.first);
    r.number("t2_max", c.prior.t2_range.second);
    r.u64("seed", c.prior.seed);
  }
  {
    SectionReader r(ini, "sampling");
    r.choice("shape", c.density.shape, kShapes);
    r.number("accel", c.density.accel);
    r.number("fully_sampled_radius", c.density.fully_sampled_radius);
    r.number("decay_power", c.density.decay_power);
    r.number("sigma", c.density.sigma);
    r.choice("scheme", c.mask_scheme, kMaskSchemes);
    r.u64("seed", c.mask_seed);
    r.integer("monte_carlo_trials", c.monte_carlo_trials);
    r.integer("probe_count", c.probe_count);
  }
  {
    SectionReader r(ini, "noise");
    r.number("sigma", c.noise_sigma);
    r.u64("seed", c.noise_seed);
  }
  {
    SectionReader r(ini, "recon");
    r.choice("method", c.recon_method, kReconMethods);
    r.number("lambda", c.solver.lambda);
    r.number("mu", c.solver.mu);
    r.integer("max_iters", c.solver.max_iters);
    r.number("tolerance", c.solver.tolerance);
    r.choice("step_rule", c.solver.step_rule, kStepRules);
    r.number("fixed_step", c.solver.fixed_step);
  }
  {
    SectionReader r(ini, "fit");
    r.choice("method", c.fit_method, kFitMethods);
    r.number("t1_nominal", c.fit.t1_nominal);
    r.number("eta_nominal", c.fit.eta_nominal);
    r.number("t2_min", c.fit.bounds.t2_min);
    r.number("t2_max", c.fit.bounds.t2_max);
    r.number("t2_init", c.fit.t2_init);
    r.integer("coarse_points", c.fit.coarse_points);
    r.integer("max_gn_steps", c.fit.max_gn_steps);
    r.integer("dictionary_points", c.dictionary_points);
  }
  {
    SectionReader r(ini, "crlb");
    r.number("t1", c.crlb_tissue.t1);
    r.number("t2", c.crlb_tissue.t2);
    r.number("budget_flip_deg", c.crlb_budget_flip_deg);
    r.number("min_flip_deg", c.flip_opt.min_flip_deg);
    r.number("max_flip_deg", c.flip_opt.max_flip_deg);
    r.number("sigma", c.flip_opt.sigma);
    r.integer("max_iters", c.flip_opt.max_iters);
    r.choice("objective", c.flip_opt.objective, kObjectives);
    r.number("sweep_t2_min", c.sweep_t2_min);
    r.number("sweep_t2_max", c.sweep_t2_max);
    r.integer("sweep_points", c.sweep_points);
  }
  {
    SectionReader r(ini, "output");
    r.text("dir", c.output_dir);
  }
  c.validate();
  return c;
}

IniFile PipelineConfig::to_ini() const
{
  IniFile ini;
  ini.set("phantom", "nx", std::to_string(phantom.nx));
  ini.set("phantom", "ny", std::to_string(phantom.ny));
  for (auto const &[id, t] : phantom.regions) {
    if (t.rho.imag() != 0.0) {
      throw std::invalid_argument("config files store real proton densities only");
    }
    ini.set("phantom", "region." + std::to_string(id), join({t.rho.real(), t.t1, t.t2, t.eta}));
  }
  for (size_t i = 0; i < phantom.ellipses.size(); i++) {
    auto const &e = phantom.ellipses[i];
    ini.set("phantom", "ellipse." + std::to_string(i + 1),
            join({e.cx, e.cy, e.ax, e.ay, e.angle_deg}) + ", " + std::to_string(e.region));
  }

  ini.set("sequence", "echoes", std::to_string(seq.n_echoes()));
  ini.set("sequence", "echo_spacing_ms", format_double(seq.echo_spacing_ms));
  ini.set("sequence", "excitation_deg", format_double(seq.excitation_deg));
  ini.set("sequence", "excitation_phase_deg", format_double(seq.excitation_phase_deg));
  ini.set("sequence", "flips", join(seq.flips_deg));
  ini.set("sequence", "flip_phases", join(seq.flip_phases_deg));

  ini.set("subspace", "K", std::to_string(K));
  ini.set("subspace", "ensemble_size", std::to_string(ensemble_size));
  ini.set("subspace", "prior", enum_name(prior.sampling, kPriors));
  ini.set("subspace", "t1_min", format_double(prior.t1_range.first));
  ini.set("subspace", "t1_max", format_double(prior.t1_range.second));
  ini.set("subspace", "t2_min", format_double(prior.t2_range.first));
  ini.set("subspace", "t2_max", format_double(prior.t2_range.second));
  ini.set("subspace", "seed", std::to_string(prior.seed));

  ini.set("sampling", "shape", enum_name(density.shape, kShapes));
  ini.set("sampling", "accel", format_double(density.accel));
  ini.set("sampling", "fully_sampled_radius", format_double(density.fully_sampled_radius));
  ini.set("sampling", "decay_power", format_double(density.decay_power));
  ini.set("sampling", "sigma", format_double(density.sigma));
  ini.set("sampling", "scheme", enum_name(mask_scheme, kMaskSchemes));
  ini.set("sampling", "seed", std::to_string(mask_seed));
  ini.set("sampling", "monte_carlo_trials", std::to_string(monte_carlo_trials));
  ini.set("sampling", "probe_count", std::to_string(probe_count));

  ini.set("noise", "sigma", format_double(noise_sigma));
  ini.set("noise", "seed", std::to_string(noise_seed));

  ini.set("recon", "method", enum_name(recon_method, kReconMethods));
  ini.set("recon", "lambda", format_double(solver.lambda));
  ini.set("recon", "mu", format_double(solver.mu));
  ini.set("recon", "max_iters", std::to_string(solver.max_iters));
  ini.set("recon", "tolerance", format_double(solver.tolerance));
  ini.set("recon", "step_rule", enum_name(solver.step_rule, kStepRules));
  ini.set("recon", "fixed_step", format_double(solver.fixed_step));

  ini.set("fit", "method", enum_name(fit_method, kFitMethods));
  ini.set("fit", "t1_nominal", format_double(fit.t1_nominal));
  ini.set("fit", "eta_nominal", format_double(fit.eta_nominal));
  ini.set("fit", "t2_min", format_double(fit.bounds.t2_min));
  ini.set("fit", "t2_max", format_double(fit.bounds.t2_max));
  ini.set("fit", "t2_init", format_double(fit.t2_init));
  ini.set("fit", "coarse_points", std::to_string(fit.coarse_points));
  ini.set("fit", "max_gn_steps", std::to_string(fit.max_gn_steps));
  ini.set("fit", "dictionary_points", std::to_string(dictionary_points));

  ini.set("crlb", "t1", format_double(crlb_tissue.t1));
  ini.set("crlb", "t2", format_double(crlb_tissue.t2));
  ini.set("crlb", "budget_flip_deg", format_double(crlb_budget_flip_deg));
  ini.set("crlb", "min_flip_deg", format_double(flip_opt.min_flip_deg));
  ini.set("crlb", "max_flip_deg", format_double(flip_opt.max_flip_deg));
  ini.set("crlb", "sigma", format_double(flip_opt.sigma));
  ini.set("crlb", "max_iters", std::to_string(flip_opt.max_iters));
  ini.set("crlb", "objective", enum_name(flip_opt.objective, kObjectives));
  ini.set("crlb", "sweep_t2_min", format_double(sweep_t2_min));
  ini.set("crlb", "sweep_t2_max", format_double(sweep_t2_max));
  ini.set("crlb", "sweep_points", std::to_string(sweep_points));

  ini.set("output", "dir", output_dir);
  return ini;
}

} // namespace spinshuffle
