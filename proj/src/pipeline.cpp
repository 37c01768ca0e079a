#include "spinshuffle/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>

#include "spinshuffle/array_io.hpp"

namespace spinshuffle {

namespace {

template <class F>
auto stage(std::string const &name, Logger const &log, F &&fn)
{
  auto const t0 = std::chrono::steady_clock::now();
  try {
    auto result = fn();
    if (log) {
      double const dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log(fmt::format("stage {} done in {:.3f} s", name, dt));
    }
    return result;
  } catch (StageFailure const &) {
    throw;
  } catch (std::exception const &e) {
    throw StageFailure(name, e.what());
  }
}

std::ofstream open_out(std::string const &path)
{
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw std::runtime_error("cannot open " + path + " for writing");
  }
  return f;
}

std::string join_path(std::string const &dir, std::string const &name)
{
  return (std::filesystem::path(dir) / name).string();
}

} // namespace

StageFailure::StageFailure(std::string stage, std::string const &cause)
  : std::runtime_error(stage + ": " + cause)
  , stage_(std::move(stage))
{
}

Phantom pipeline_phantom(PipelineConfig const &cfg) { return make_phantom(cfg.phantom); }

EnsembleMatrix pipeline_ensemble(PipelineConfig const &cfg)
{
  return build_ensemble(sample_prior(cfg.prior, cfg.ensemble_size), cfg.seq);
}

SamplingMasks pipeline_masks(PipelineConfig const &cfg)
{
  Index const nx = cfg.phantom.nx;
  Index const ny = cfg.phantom.ny;
  Index const T = cfg.seq.n_echoes();
  SparsityModel const model{SparsifyingTransform::Kind::haar, {}};
  Index const trials = cfg.monte_carlo_trials;
  auto one_mask = [&](std::uint64_t seed) {
    if (trials > 0) {
      return monte_carlo_mask(cfg.density, nx, ny, model, trials, seed, cfg.probe_count).mask;
    }
    return draw_mask(cfg.density, nx, ny, seed);
  };
  switch (cfg.mask_scheme) {
  case PipelineConfig::MaskScheme::independent: {
    if (trials == 0) {
      return draw_echo_masks(cfg.density, nx, ny, T, cfg.mask_seed);
    }
    std::vector<SamplingMask> masks;
    for (Index i = 0; i < T; i++) {
      masks.push_back(one_mask(cfg.mask_seed + static_cast<std::uint64_t>(i * trials)));
    }
    return SamplingMasks(std::move(masks));
  }
  case PipelineConfig::MaskScheme::randomized:
    return assign_echoes(one_mask(cfg.mask_seed), T, EchoOrdering::randomized, cfg.mask_seed);
  case PipelineConfig::MaskScheme::center_out:
    return assign_echoes(one_mask(cfg.mask_seed), T, EchoOrdering::center_out, cfg.mask_seed);
  }
  throw std::invalid_argument("unknown mask scheme");
}

ReconResult pipeline_reconstruct(PipelineConfig const &cfg, SamplingMasks const &masks,
                                 SubspaceBasis const &basis, CVec const &y)
{
  Encoder const enc(masks, {}, basis);
  switch (cfg.recon_method) {
  case PipelineConfig::ReconMethod::cg:
    return cg_solve(enc, y, cfg.solver);
  case PipelineConfig::ReconMethod::fista_identity:
    return fista_solve(enc, y, Regularizer::l1_identity, cfg.solver);
  case PipelineConfig::ReconMethod::fista_wavelet:
    return fista_solve(enc, y, Regularizer::l1_wavelet, cfg.solver);
  }
  throw std::invalid_argument("unknown reconstruction method");
}

ParameterMaps pipeline_fit(PipelineConfig const &cfg, CMat const &coeffs, SubspaceBasis const &basis)
{
  switch (cfg.fit_method) {
  case FitMethod::subspace:
    return fit_map(coeffs, basis, cfg.seq, FitMethod::subspace, cfg.fit);
  case FitMethod::nlls:
    return fit_map(back_project(coeffs, basis), std::nullopt, cfg.seq, FitMethod::nlls, cfg.fit);
  case FitMethod::dictionary: {
    double const lo = cfg.fit.bounds.t2_min;
    double const hi = std::min(cfg.fit.bounds.t2_max, cfg.fit.t1_nominal);
    std::vector<TissueParams> entries;
    for (Index d = 0; d < cfg.dictionary_points; d++) {
      TissueParams t;
      t.t1 = cfg.fit.t1_nominal;
      t.eta = cfg.fit.eta_nominal;
      t.t2 = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<double>(d) /
                                       static_cast<double>(cfg.dictionary_points - 1));
      entries.push_back(t);
    }
    Dictionary const dict = build_dictionary(entries, cfg.seq, basis);
    return fit_map(coeffs, basis, cfg.seq, FitMethod::dictionary, cfg.fit, &dict);
  }
  }
  throw std::invalid_argument("unknown fit method");
}

std::vector<RegionStats> region_stats(Phantom const &phantom, ParameterMaps const &maps)
{
  std::vector<RegionStats> out;
  for (auto const &[id, tissue] : phantom.regions) {
    if (id == 0) {
      continue;
    }
    RegionStats s;
    s.region = id;
    s.t1 = tissue.t1;
    s.t2_true = tissue.t2;
    double sum = 0.0;
    double sq = 0.0;
    for (Index v = 0; v < phantom.n_voxels(); v++) {
      if (phantom.labels[static_cast<size_t>(v)] != id) {
        continue;
      }
      s.voxels++;
      s.failed += maps.failed[static_cast<size_t>(v)] ? 1 : 0;
      sum += maps.t2[v];
      sq += maps.t2[v] * maps.t2[v];
    }
    if (s.voxels > 0) {
      double const n = static_cast<double>(s.voxels);
      s.t2_mean = sum / n;
      s.t2_std = std::sqrt(std::max(0.0, sq / n - s.t2_mean * s.t2_mean));
      s.bias_percent = 100.0 * (s.t2_mean - s.t2_true) / s.t2_true;
    }
    out.push_back(s);
  }
  return out;
}

PipelineReport run_pipeline(PipelineConfig const &cfg, Logger const &log)
{
  stage("config", log, [&] {
    cfg.validate();
    return 0;
  });
  PipelineReport r;
  r.phantom = stage("phantom", log, [&] { return pipeline_phantom(cfg); });
  stage("basis", log, [&] {
    EnsembleMatrix const ens = pipeline_ensemble(cfg);
    r.basis = compute_basis(ens, cfg.K);
    r.basis_error = projection_error(ens, r.basis, ProjectionMetric::frobenius_relative);
    return 0;
  });
  r.masks = stage("masks", log, [&] { return pipeline_masks(cfg); });
  stage("simulate", log, [&] {
    r.truth = contrast_images(r.phantom, cfg.seq);
    r.kspace = apply_forward(Encoder(r.masks), r.truth);
    add_noise(r.kspace, cfg.noise_sigma, cfg.noise_seed);
    return 0;
  });
  r.recon = stage("reconstruct", log, [&] { return pipeline_reconstruct(cfg, r.masks, r.basis, r.kspace); });
  r.images = stage("back-project", log, [&] { return back_project(r.recon.images, r.basis); });
  r.image_nrmse = (r.images - r.truth).norm() / r.truth.norm();
  r.maps = stage("fit", log, [&] { return pipeline_fit(cfg, r.recon.images, r.basis); });
  r.regions = region_stats(r.phantom, r.maps);
  if (log) {
    log(fmt::format("image NRMSE {:.6g}, {} solver iterations", r.image_nrmse, r.recon.iterations));
    for (auto const &s : r.regions) {
      log(fmt::format("region {}: T2 {:.4g} ms (true {:.4g}), bias {:+.3f}%", s.region, s.t2_mean,
                      s.t2_true, s.bias_percent));
    }
  }
  return r;
}

void write_images(std::string const &dir, std::string const &name, Index nx, Index ny, CMat const &stack)
{
  write_array(join_path(dir, name), {nx, ny, stack.cols()}, stack);
}

void write_masks(std::string const &dir, std::string const &name, SamplingMasks const &masks)
{
  RMat m(masks.nx * masks.ny, masks.n_echoes());
  for (Index e = 0; e < masks.n_echoes(); e++) {
    for (Index i = 0; i < m.rows(); i++) {
      m(i, e) = masks.echoes[static_cast<size_t>(e)][i] ? 1.0 : 0.0;
    }
  }
  write_array(join_path(dir, name), {masks.nx, masks.ny, masks.n_echoes()}, m);
}

void write_report(PipelineConfig const &cfg, PipelineReport const &r)
{
  std::string const &dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  Index const nx = r.phantom.nx;
  Index const ny = r.phantom.ny;
  auto image = [&](std::string const &name, auto const &m) {
    write_array(join_path(dir, name), {nx, ny}, m);
  };

  RMat labels(nx * ny, 1);
  RMat failed(nx * ny, 1);
  for (Index v = 0; v < nx * ny; v++) {
    labels(v, 0) = r.phantom.labels[static_cast<size_t>(v)];
    failed(v, 0) = r.maps.failed[static_cast<size_t>(v)];
  }
  image("labels", labels);
  image("rho_true", CMat(r.phantom.rho_map()));
  image("t2_true", RMat(r.phantom.t2_map()));
  write_masks(dir, "masks", r.masks);
  write_array(join_path(dir, "basis"), {r.basis.T(), r.basis.K()}, r.basis.phi);
  write_array(join_path(dir, "singular_values"), {r.basis.singular_values.size()},
              RMat(r.basis.singular_values));
  write_images(dir, "truth", nx, ny, r.truth);
  write_array(join_path(dir, "kspace"), {r.kspace.size()}, CMat(r.kspace));
  write_images(dir, "coefficients", nx, ny, r.recon.images);
  write_images(dir, "images", nx, ny, r.images);
  image("rho_map", CMat(r.maps.rho));
  image("t2_map", RMat(r.maps.t2));
  image("failed", failed);

  {
    auto f = open_out(join_path(dir, "regions.csv"));
    f << "region,t1,t2_true,t2_mean,t2_std,bias_percent,voxels,failed\n";
    for (auto const &s : r.regions) {
      f << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", s.region, s.t1, s.t2_true,
                       s.t2_mean, s.t2_std, s.bias_percent, s.voxels, s.failed);
    }
  }
  {
    Index n_failed = 0;
    for (auto b : r.maps.failed) {
      n_failed += b;
    }
    auto f = open_out(join_path(dir, "summary.csv"));
    f << "metric,value\n";
    f << fmt::format("image_nrmse,{:.17g}\n", r.image_nrmse);
    f << fmt::format("basis_error,{:.17g}\n", r.basis_error);
    f << fmt::format("measurements,{}\n", r.kspace.size());
    f << fmt::format("sampled_fraction,{:.17g}\n",
                     static_cast<double>(r.masks.total_count()) /
                       static_cast<double>(nx * ny * r.masks.n_echoes()));
    f << fmt::format("solver_iterations,{}\n", r.recon.iterations);
    f << fmt::format("solver_converged,{}\n", r.recon.converged ? 1 : 0);
    f << fmt::format("failed_voxels,{}\n", n_failed);
  }
  {
    auto f = open_out(join_path(dir, "objective.csv"));
    f << "iteration,objective\n";
    for (size_t i = 0; i < r.recon.objective_trace.size(); i++) {
      f << fmt::format("{},{:.17g}\n", i, r.recon.objective_trace[i]);
    }
  }
  {
    auto f = open_out(join_path(dir, "config.ini"));
    f << cfg.to_ini().to_string();
  }
}

CrlbStudy run_crlb_study(PipelineConfig const &cfg)
{
  Index const T = cfg.seq.n_echoes();
  PowerBudget budget;
  budget.limit = static_cast<double>(T) * deg2rad(cfg.crlb_budget_flip_deg) * deg2rad(cfg.crlb_budget_flip_deg);
  CrlbStudy study;
  double const flip = equal_power_flip(budget, T, cfg.flip_opt.max_flip_deg);
  study.constant_flips.assign(static_cast<size_t>(T), flip);
  study.optimized = optimize_flips(cfg.crlb_tissue, cfg.seq, budget, SignalParam::t2(), cfg.flip_opt);

  SequenceParams constant = cfg.seq;
  constant.flips_deg = study.constant_flips;
  SequenceParams optimized = cfg.seq;
  optimized.flips_deg = study.optimized.flips_deg;
  std::vector<SignalParam> const params = cfg.flip_opt.nuisance;
  std::vector<SignalParam> joint = params;
  joint.push_back(SignalParam::t2());
  study.bound_constant = crlb(fisher_info(cfg.crlb_tissue, constant, cfg.flip_opt.sigma, joint), SignalParam::t2());
  study.bound_optimized = crlb(fisher_info(cfg.crlb_tissue, optimized, cfg.flip_opt.sigma, joint), SignalParam::t2());

  std::vector<double> grid;
  for (Index i = 0; i < cfg.sweep_points; i++) {
    grid.push_back(cfg.sweep_t2_min + (cfg.sweep_t2_max - cfg.sweep_t2_min) * static_cast<double>(i) /
                                        static_cast<double>(cfg.sweep_points - 1));
  }
  study.sweep = crlb_sweep(cfg.crlb_tissue, constant, optimized, grid, SignalParam::t2(), params,
                           cfg.flip_opt.sigma);
  return study;
}

void write_crlb_study(std::string const &dir, CrlbStudy const &study)
{
  std::filesystem::create_directories(dir);
  {
    auto f = open_out(join_path(dir, "schedule_constant.csv"));
    write_schedule_csv(f, study.constant_flips);
  }
  {
    auto f = open_out(join_path(dir, "schedule_optimized.csv"));
    write_schedule_csv(f, study.optimized.flips_deg);
  }
  {
    auto f = open_out(join_path(dir, "crlb_sweep.csv"));
    write_crlb_sweep_csv(f, study.sweep);
  }
  {
    auto f = open_out(join_path(dir, "flip_objective.csv"));
    f << "iteration,objective\n";
    for (size_t i = 0; i < study.optimized.objective_trace.size(); i++) {
      f << fmt::format("{},{:.17g}\n", i, study.optimized.objective_trace[i]);
    }
  }
}

} // namespace spinshuffle
