#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>
#include <unistd.h>

#include "helpers.hpp"
#include "spinshuffle/array_io.hpp"
#include "spinshuffle/parallel.hpp"
#include "spinshuffle/pipeline.hpp"

using namespace spinshuffle;
namespace fs = std::filesystem;

namespace {

fs::path scratch(std::string const &name)
{
  fs::path const p = fs::temp_directory_path() / ("spinshuffle_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(std::string const &args, std::string const &env = "")
{
  std::string const cmd = env + " " SPINSHUFFLE_CLI " " + args + " >/dev/null 2>&1";
  int const status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

char const *const small_ini = R"(# reduced scene for quick runs
[phantom]
nx = 16
ny = 16

[sequence]
echoes = 8
flip_deg = 180
echo_spacing_ms = 10

[subspace]
K = 3
ensemble_size = 64

[recon]
max_iters = 60
)";

} // namespace

TEST_CASE("make_phantom")
{
  Phantom const empty = make_phantom(PhantomSpec{});
  CHECK(empty.count(0) == 64 * 64);
  CHECK(empty.rho_map().norm() == 0.0);

  PhantomSpec disc;
  double const r_vox = 20.0;
  disc.ellipses = {{0, 0, r_vox / 32, r_vox / 32, 0, 1}};
  disc.regions[1] = {1.0, 1000, 100, 1.0};
  double const area = oracle::pi * r_vox * r_vox;
  CHECK(std::abs(static_cast<double>(make_phantom(disc).count(1)) - area) < 0.03 * area);

  PhantomSpec nested = disc;
  nested.ellipses.push_back({0, 0, 0.2, 0.2, 0, 2});
  nested.regions[2] = {0.5, 800, 50, 1.0};
  Phantom const n = make_phantom(nested);
  CHECK(n.labels[32 + 64 * 32] == 2);
  CHECK(n.tissue_at(32 + 64 * 32).t2 == 50);
  CHECK(n.labels[0] == 0);
  CHECK(n.tissue_at(0).rho == cplx(0.0));

  PhantomSpec bad = disc;
  bad.ellipses[0].cx = 1.5;
  CHECK_THROWS(make_phantom(bad));
  bad = disc;
  bad.ellipses[0].region = 7;
  CHECK_THROWS(make_phantom(bad));
  bad = disc;
  bad.regions[0] = {0.3, 1000, 100, 1.0};
  CHECK_THROWS(make_phantom(bad));

  Phantom const def = make_phantom(default_phantom_spec());
  for (int region = 1; region <= 4; region++) {
    CHECK(def.count(region) > 50);
  }
}

TEST_CASE("simulate_acquisition and noise")
{
  PhantomSpec spec = default_phantom_spec();
  spec.nx = 16;
  spec.ny = 16;
  Phantom const ph = make_phantom(spec);
  SequenceParams const seq = SequenceParams::constant(6, 180, 10);
  std::vector<SamplingMask> full(6, SamplingMask(16, 16, true));
  SamplingMasks const masks(full);
  CVec const y = simulate_acquisition(ph, seq, masks, {}, 0.0, 1);
  Fft2 const fft(16, 16);
  for (Index i = 0; i < 6; i++) {
    CVec const img = fft.adjoint(CVec(y.segment(256 * i, 256)));
    for (Index v = 0; v < 256; v++) {
      TissueParams const t = ph.tissue_at(v);
      cplx const expect = t.rho * std::exp(-static_cast<double>(i + 1) * 10 / t.t2);
      CHECK(std::abs(img[v] - expect) < 1e-12);
    }
  }
  CHECK(simulate_acquisition(ph, seq, masks, {}, 0.1, 5) == simulate_acquisition(ph, seq, masks, {}, 0.1, 5));

  CVec z = CVec::Zero(100000);
  add_noise(z, 0.3, 11);
  double const var = z.squaredNorm() / 100000.0;
  CHECK(std::abs(var - 0.09) < 0.02 * 0.09);
  CHECK(std::abs(z.real().squaredNorm() / z.imag().squaredNorm() - 1.0) < 0.03);
  CVec w = CVec::Zero(4);
  CHECK_THROWS(add_noise(w, -1, 0));
}

TEST_CASE("array round trip and header errors")
{
  fs::path const dir = scratch("io");
  ComplexArray a;
  a.dims = {3, 4, 2};
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(-1e6f, 1e6f);
  for (int i = 0; i < 24; i++) {
    a.data.emplace_back(u(rng), u(rng));
  }
  a.data[5] = {std::numeric_limits<float>::denorm_min(), -0.0f};
  std::string const base = (dir / "x").string();
  write_array(base, a);
  ComplexArray const b = read_array(base);
  CHECK(b.dims == a.dims);
  CHECK(std::memcmp(a.data.data(), b.data.data(), 24 * sizeof(std::complex<float>)) == 0);

  oracle::RawArray const raw = oracle::read_raw(base);
  CHECK(raw.dims == std::vector<long long>{3, 4, 2});
  CHECK(raw.values == a.data);

  std::ifstream h(base + ".hdr");
  std::string l1, l2, l3;
  std::getline(h, l1);
  std::getline(h, l2);
  std::getline(h, l3);
  CHECK(l1 == "3");
  CHECK(l2 == "3 4 2");
  CHECK(l3 == "complex64");

  {
    std::ofstream o(base + ".hdr");
    o << "3\n3 4 3\ncomplex64\n";
  }
  CHECK_THROWS(read_array(base));
  {
    std::ofstream o(base + ".hdr");
    o << "2\n3 4 2\ncomplex64\n";
  }
  CHECK_THROWS(read_array(base));
  {
    std::ofstream o(base + ".hdr");
    o << "3\n3 4 2\nfloat32\n";
  }
  CHECK_THROWS(read_array(base));
  CHECK_THROWS(read_array((dir / "missing").string()));

  a.dims = {5};
  CHECK_THROWS(write_array(base, a));
}

TEST_CASE("ini parsing and config round trip")
{
  IniFile const ini = IniFile::parse("# c\n[a]\nx = 1 \n y=two words\n\n[b]\nz = 3\n");
  CHECK(ini.get("a", "x") == "1");
  CHECK(ini.get("a", "y") == "two words");
  CHECK(ini.sections() == std::vector<std::string>{"a", "b"});
  CHECK_THROWS(IniFile::parse("x = 1\n"));
  CHECK_THROWS(IniFile::parse("[a]\nx = 1\nx = 2\n"));
  CHECK_THROWS(IniFile::parse("[a]\njunk\n"));
  CHECK_THROWS(IniFile::parse("[a\nx = 1\n"));

  PipelineConfig c = PipelineConfig::defaults();
  c.noise_sigma = 0.1 / 3.0;
  c.solver.lambda = 1.0 / 7.0;
  c.seq.flips_deg[3] = 123.456789012345;
  c.apply_seed(77);
  CHECK(c.prior.seed == 77);
  CHECK(c.mask_seed == 78);
  CHECK(c.noise_seed == 79);
  std::string const text = c.to_ini().to_string();
  PipelineConfig const back = PipelineConfig::from_ini(IniFile::parse(text));
  CHECK(back.to_ini().to_string() == text);
  CHECK(back.noise_sigma == c.noise_sigma);
  CHECK(back.solver.lambda == c.solver.lambda);
  CHECK(back.seq.flips_deg == c.seq.flips_deg);
  CHECK(back.phantom.ellipses.size() == c.phantom.ellipses.size());
  CHECK(back.phantom.regions.at(2).t2 == 60.0);

  CHECK_THROWS(PipelineConfig::from_ini(IniFile::parse("[recon]\nlambada = 1\n")));
  CHECK_THROWS(PipelineConfig::from_ini(IniFile::parse("[nonsense]\nx = 1\n")));
  CHECK_THROWS(PipelineConfig::from_ini(IniFile::parse("[recon]\nmethod = admm\n")));
  CHECK_THROWS(PipelineConfig::from_ini(IniFile::parse("[subspace]\nK = 99\n")));
  CHECK_THROWS(PipelineConfig::from_ini(IniFile::parse("[noise]\nsigma = abc\n")));
}

TEST_CASE("noiseless fully sampled pipeline is an identity")
{
  PipelineConfig c = PipelineConfig::defaults();
  c.phantom.nx = 32;
  c.phantom.ny = 32;
  c.seq = SequenceParams::constant(12, 180, 10);
  c.K = 12;
  c.ensemble_size = 64;
  c.density.accel = 1.0;
  c.noise_sigma = 0.0;
  c.recon_method = PipelineConfig::ReconMethod::cg;
  c.solver.lambda = 0.0;
  c.solver.tolerance = 1e-12;
  PipelineReport const r = run_pipeline(c);
  CHECK(r.masks.total_count() == 32 * 32 * 12);
  CHECK(r.image_nrmse < 1e-6);
  for (auto const &s : r.regions) {
    CHECK(std::abs(s.bias_percent) < 0.1);
    CHECK(s.failed == 0);
  }
}

TEST_CASE("stage failures name the stage")
{
  PipelineConfig c = PipelineConfig::defaults();
  c.prior.t2_range = {50, 10};
  try {
    run_pipeline(c);
    FAIL("expected a stage failure");
  } catch (StageFailure const &e) {
    CHECK(e.stage() == "basis");
    CHECK(std::string(e.what()).rfind("basis: ", 0) == 0);
  }
  c = PipelineConfig::defaults();
  c.K = 0;
  CHECK_THROWS_AS(run_pipeline(c), StageFailure);
}

TEST_CASE("thread configuration")
{
  ::setenv("SPINSHUFFLE_THREADS", "2", 1);
  CHECK(configure_threads() == 2);
  ::setenv("SPINSHUFFLE_THREADS", "0", 1);
  CHECK(configure_threads() >= 1);
  ::setenv("SPINSHUFFLE_THREADS", "lots", 1);
  CHECK_THROWS(configure_threads());
  ::unsetenv("SPINSHUFFLE_THREADS");
  set_threads(0);
}

TEST_CASE("command line")
{
  fs::path const dir = scratch("cli");
  std::string const cfg = (dir / "small.ini").string();
  {
    std::ofstream o(cfg);
    o << small_ini;
  }
  CHECK(run_cli("") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("phantom --bogus") == 1);
  CHECK(run_cli("phantom --seed notanumber") == 1);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("phantom --config " + (dir / "nope.ini").string()) == 2);
  {
    std::ofstream o(dir / "bad.ini");
    o << "[subspace]\nK = 0\n";
  }
  CHECK(run_cli("basis --config " + (dir / "bad.ini").string() + " --out " + (dir / "bad").string()) == 2);

  std::string const out = (dir / "run").string();
  std::string const common = " --config " + cfg + " --out " + out + " --seed 5";
  CHECK(run_cli("phantom" + common) == 0);
  CHECK(fs::exists(out + "/labels.hdr"));
  CHECK(run_cli("basis" + common) == 0);
  CHECK(oracle::read_raw(out + "/basis").dims == std::vector<long long>{8, 3});
  CHECK(run_cli("mask" + common) == 0);
  CHECK(run_cli("sim" + common, "SPINSHUFFLE_THREADS=2") == 0);
  CHECK(oracle::read_raw(out + "/truth").dims == std::vector<long long>{16, 16, 8});
  CHECK(run_cli("recon" + common + " --input " + out + "/kspace") == 0);
  CHECK(oracle::read_raw(out + "/coefficients").dims == std::vector<long long>{16, 16, 3});
  CHECK(run_cli("fit" + common + " --input " + out + "/coefficients") == 0);
  CHECK(fs::exists(out + "/t2_map.dat"));
  CHECK(fs::exists(out + "/regions.csv"));
  CHECK(run_cli("crlb" + common) == 0);
  CHECK(fs::exists(out + "/crlb_sweep.csv"));
  CHECK(run_cli("pipeline" + common + " --verbose") == 0);
  CHECK(fs::exists(out + "/summary.csv"));
  PipelineConfig const echoed = PipelineConfig::from_ini(IniFile::load(out + "/config.ini"));
  CHECK(echoed.noise_seed == 7);
  CHECK(echoed.seq.n_echoes() == 8);

  // the standalone recon stage matches the pipeline's coefficients
  std::string const solo = (dir / "solo").string();
  CHECK(run_cli("recon --config " + cfg + " --out " + solo + " --seed 5") == 0);
  CHECK(oracle::read_raw(solo + "/coefficients").values == oracle::read_raw(out + "/coefficients").values);
  CHECK(run_cli("recon" + common + " --input " + out + "/missing") == 2);
}
