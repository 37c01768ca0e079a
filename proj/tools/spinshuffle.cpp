// Command-line front end. Every subcommand resolves the same config, so a
// stage run on its own reproduces the corresponding pipeline stage exactly.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "spinshuffle/array_io.hpp"
#include "spinshuffle/parallel.hpp"
#include "spinshuffle/pipeline.hpp"

using namespace spinshuffle;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool verbose = false;
  std::string input;
};

PipelineConfig resolve(Common const &c)
{
  PipelineConfig cfg =
    c.config.empty() ? PipelineConfig::defaults() : PipelineConfig::from_ini(IniFile::load(c.config));
  if (!c.out.empty()) {
    cfg.output_dir = c.out;
  }
  if (c.seed_given) {
    cfg.apply_seed(c.seed);
  }
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  return cfg;
}

std::string path_in(PipelineConfig const &cfg, std::string const &name)
{
  return (std::filesystem::path(cfg.output_dir) / name).string();
}

void write_config(PipelineConfig const &cfg)
{
  std::ofstream f(path_in(cfg, "config.ini"));
  f << cfg.to_ini().to_string();
}

void write_objective(PipelineConfig const &cfg, std::vector<double> const &trace)
{
  std::ofstream f(path_in(cfg, "objective.csv"));
  f << "iteration,objective\n";
  for (size_t i = 0; i < trace.size(); i++) {
    f << fmt::format("{},{:.17g}\n", i, trace[i]);
  }
}

SubspaceBasis make_basis(PipelineConfig const &cfg, double *err = nullptr)
{
  EnsembleMatrix const ens = pipeline_ensemble(cfg);
  SubspaceBasis basis = compute_basis(ens, cfg.K);
  if (err) {
    *err = projection_error(ens, basis, ProjectionMetric::frobenius_relative);
  }
  return basis;
}

int cmd_phantom(PipelineConfig const &cfg, Logger const &)
{
  Phantom const ph = pipeline_phantom(cfg);
  RMat labels(ph.n_voxels(), 1);
  for (Index v = 0; v < ph.n_voxels(); v++) {
    labels(v, 0) = ph.labels[static_cast<size_t>(v)];
  }
  write_array(path_in(cfg, "labels"), {ph.nx, ph.ny}, labels);
  write_array(path_in(cfg, "rho_true"), {ph.nx, ph.ny}, CMat(ph.rho_map()));
  write_array(path_in(cfg, "t1_true"), {ph.nx, ph.ny}, RMat(ph.t1_map()));
  write_array(path_in(cfg, "t2_true"), {ph.nx, ph.ny}, RMat(ph.t2_map()));
  write_config(cfg);
  return 0;
}

int cmd_basis(PipelineConfig const &cfg, Logger const &log)
{
  double err = 0.0;
  SubspaceBasis const basis = make_basis(cfg, &err);
  write_array(path_in(cfg, "basis"), {basis.T(), basis.K()}, basis.phi);
  write_array(path_in(cfg, "singular_values"), {basis.singular_values.size()}, RMat(basis.singular_values));
  std::ofstream f(path_in(cfg, "basis.csv"));
  f << "K,relative_error\n" << fmt::format("{},{:.17g}\n", basis.K(), err);
  log(fmt::format("K = {}: relative projection error {:.4g}", basis.K(), err));
  write_config(cfg);
  return 0;
}

int cmd_mask(PipelineConfig const &cfg, Logger const &log)
{
  SamplingMasks const masks = pipeline_masks(cfg);
  write_masks(cfg.output_dir, "masks", masks);
  std::ofstream f(path_in(cfg, "masks.csv"));
  f << "echo,count\n";
  for (Index e = 0; e < masks.n_echoes(); e++) {
    f << fmt::format("{},{}\n", e + 1, masks.echoes[static_cast<size_t>(e)].count());
  }
  log(fmt::format("{} samples over {} echoes", masks.total_count(), masks.n_echoes()));
  write_config(cfg);
  return 0;
}

int cmd_sim(PipelineConfig const &cfg, Logger const &)
{
  Phantom const ph = pipeline_phantom(cfg);
  SamplingMasks const masks = pipeline_masks(cfg);
  CMat const truth = contrast_images(ph, cfg.seq);
  CVec y = apply_forward(Encoder(masks), truth);
  add_noise(y, cfg.noise_sigma, cfg.noise_seed);
  write_masks(cfg.output_dir, "masks", masks);
  write_images(cfg.output_dir, "truth", ph.nx, ph.ny, truth);
  write_array(path_in(cfg, "kspace"), {y.size()}, CMat(y));
  write_config(cfg);
  return 0;
}

int cmd_recon(PipelineConfig const &cfg, Logger const &log, std::string const &input)
{
  SamplingMasks const masks = pipeline_masks(cfg);
  SubspaceBasis const basis = make_basis(cfg);
  CVec y;
  if (!input.empty()) {
    ComplexArray const a = read_array(input);
    y = to_matrix(a, a.numel(), 1).col(0);
  } else {
    Phantom const ph = pipeline_phantom(cfg);
    y = apply_forward(Encoder(masks), contrast_images(ph, cfg.seq));
    add_noise(y, cfg.noise_sigma, cfg.noise_seed);
  }
  ReconResult const res = pipeline_reconstruct(cfg, masks, basis, y);
  write_images(cfg.output_dir, "coefficients", masks.nx, masks.ny, res.images);
  write_images(cfg.output_dir, "images", masks.nx, masks.ny, back_project(res.images, basis));
  write_objective(cfg, res.objective_trace);
  log(fmt::format("{} iterations, converged = {}", res.iterations, res.converged));
  write_config(cfg);
  return 0;
}

int cmd_fit(PipelineConfig const &cfg, Logger const &log, std::string const &input)
{
  if (input.empty()) {
    PipelineReport const r = run_pipeline(cfg, log);
    write_report(cfg, r);
    return 0;
  }
  SubspaceBasis const basis = make_basis(cfg);
  ComplexArray const a = read_array(input);
  Index const N = cfg.phantom.nx * cfg.phantom.ny;
  CMat const coeffs = to_matrix(a, N, a.numel() / N);
  ParameterMaps const maps = pipeline_fit(cfg, coeffs, basis);
  write_array(path_in(cfg, "rho_map"), {cfg.phantom.nx, cfg.phantom.ny}, CMat(maps.rho));
  write_array(path_in(cfg, "t2_map"), {cfg.phantom.nx, cfg.phantom.ny}, RMat(maps.t2));
  std::ofstream f(path_in(cfg, "regions.csv"));
  f << "region,t1,t2_true,t2_mean,t2_std,bias_percent,voxels,failed\n";
  for (auto const &s : region_stats(pipeline_phantom(cfg), maps)) {
    f << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", s.region, s.t1, s.t2_true,
                     s.t2_mean, s.t2_std, s.bias_percent, s.voxels, s.failed);
  }
  write_config(cfg);
  return 0;
}

int cmd_crlb(PipelineConfig const &cfg, Logger const &log)
{
  CrlbStudy const study = run_crlb_study(cfg);
  write_crlb_study(cfg.output_dir, study);
  log(fmt::format("CRLB(T2): constant {:.6g}, optimized {:.6g}", study.bound_constant,
                  study.bound_optimized));
  write_config(cfg);
  return 0;
}

int cmd_pipeline(PipelineConfig const &cfg, Logger const &log)
{
  PipelineReport const r = run_pipeline(cfg, log);
  write_report(cfg, r);
  return 0;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Subspace-constrained T2 mapping from shuffled fast spin echo data"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App *sub) {
    sub->add_option("--config", common.config, "INI config file (defaults when omitted)");
    sub->add_option("--out", common.out, "output directory (overrides [output] dir)");
    sub->add_option("--seed", common.seed, "base seed: prior = s, masks = s + 1, noise = s + 2")
      ->each([&](std::string const &) { common.seed_given = true; });
    sub->add_flag("--verbose", common.verbose, "progress messages on stderr");
  };

  struct Command {
    char const *name;
    char const *help;
    bool takes_input;
  };
  std::vector<Command> const commands{
    {"phantom", "rasterize the phantom", false},
    {"sim", "simulate noisy k-space", false},
    {"basis", "compute the temporal subspace", false},
    {"mask", "draw the sampling masks", false},
    {"recon", "reconstruct subspace coefficient images", true},
    {"fit", "fit T2 maps", true},
    {"crlb", "optimize flips and sweep the T2 bound", false},
    {"pipeline", "run every stage and write the report", false},
  };
  std::map<std::string, CLI::App *> subs;
  for (auto const &c : commands) {
    CLI::App *sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    if (c.takes_input) {
      sub->add_option("--input", common.input,
                      std::string(c.name) == "recon" ? "k-space array base path"
                                                     : "coefficient array base path");
    }
    subs[c.name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const &e) {
    int const code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  Logger log = [&](std::string const &msg) {
    if (common.verbose) {
      std::cerr << msg << "\n";
    }
  };

  try {
    int const threads = configure_threads();
    log(fmt::format("{} worker threads", threads));
    auto const t0 = std::chrono::steady_clock::now();
    PipelineConfig const cfg = resolve(common);
    int rc = 0;
    if (subs["phantom"]->parsed()) {
      rc = cmd_phantom(cfg, log);
    } else if (subs["sim"]->parsed()) {
      rc = cmd_sim(cfg, log);
    } else if (subs["basis"]->parsed()) {
      rc = cmd_basis(cfg, log);
    } else if (subs["mask"]->parsed()) {
      rc = cmd_mask(cfg, log);
    } else if (subs["recon"]->parsed()) {
      rc = cmd_recon(cfg, log, common.input);
    } else if (subs["fit"]->parsed()) {
      rc = cmd_fit(cfg, log, common.input);
    } else if (subs["crlb"]->parsed()) {
      rc = cmd_crlb(cfg, log);
    } else {
      rc = cmd_pipeline(cfg, log);
    }
    auto const dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log(fmt::format("done in {:.2f} s, outputs in {}", dt, cfg.output_dir));
    return rc;
  } catch (std::exception const &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
