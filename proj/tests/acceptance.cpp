// Acceptance runner. Each selected criterion prints one PASS, FAIL or SKIP line;
// indented lines above it carry the measurements. Usage: acceptance [criterion ...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dvae/cli.hpp"
#include "dvae/data.hpp"
#include "dvae/diffusion.hpp"
#include "dvae/gradcheck.hpp"
#include "dvae/model.hpp"
#include "dvae/topo.hpp"
#include "dvae/validation.hpp"

using namespace dvae;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

enum class Verdict { Pass, Fail, Skip };

Verdict verdict(bool ok) { return ok ? Verdict::Pass : Verdict::Fail; }

void report(int id, Verdict v, const std::string& summary) {
  const char* tag = v == Verdict::Pass ? "PASS" : v == Verdict::Fail ? "FAIL" : "SKIP";
  std::printf("%s criterion %d: %s\n", tag, id, summary.c_str());
  std::fflush(stdout);
}

void note(const char* format, double a = 0, double b = 0, double c = 0, double d = 0) {
  std::printf("  ");
  std::printf(format, a, b, c, d);
  std::printf("\n");
  std::fflush(stdout);
}

// 1. Sampler correctness on the circle.
Verdict sampler() {
  const auto start = Clock::now();
  const Manifold c = Manifold::sphere(1);
  const double tv16 = walk_total_variation(c, 0.25, 16, 100000, 100, 1);
  const double tv64 = walk_total_variation(c, 0.25, 64, 100000, 100, 1);
  const double secs = seconds_since(start);
  note("TV(N=16) = %.5f  TV(N=64) = %.5f  runtime %.1f s", tv16, tv64, secs);
  return verdict(tv16 < 0.02 && tv64 <= 0.012 && secs < 60);
}

// 2. Small-time KL expansion against quadrature.
Verdict kl_asymptotics() {
  const auto start = Clock::now();
  const Manifold s2 = Manifold::sphere(2);
  Vec z(3);
  z << 0, 0, 1;
  auto rel = [&](double t) {
    const double num = kl_numeric(s2, {z, t});
    return std::abs(num - kl_asymptotic(s2, {z, t})) / std::abs(num);
  };
  const double e1 = rel(0.01), e3 = rel(0.001);
  note("S2 relative error: %.3e at t=0.01, %.3e at t=0.001", e1, e3);
  bool ok = e1 < 0.01 && e3 < 0.001;
  for (double t : {0.01, 0.005, 0.0025}) {
    const double ratio = rel(t) / rel(t / 2);
    note("error ratio t=%g -> t/2: %.3f", t, ratio);
    ok = ok && ratio >= 3.0;
  }
  const Manifold t2 = Manifold::flat_torus();
  const PosteriorParams p{torus_point(t2, 0.4, -1.1), 0.01};
  const double torus_err = std::abs(kl_numeric(t2, p) - kl_asymptotic(t2, p));
  const double secs = seconds_since(start);
  note("flat torus absolute error at t=0.01: %.3e  runtime %.1f s", torus_err, secs);
  return verdict(ok && torus_err < 1e-6 && secs < 60);
}

// 3. Kernel identities.
Verdict kernel_identities() {
  const auto start = Clock::now();
  const std::vector<Manifold> ms = {Manifold::sphere(1), Manifold::sphere(2), Manifold::flat_torus()};
  double mass = 0, asym = 0, heat = 0;
  for (const auto& m : ms) {
    for (double t : {0.01, 0.1, 1.0}) {
      KernelSeriesConfig cfg;
      mass = std::max(mass, std::abs(kernel_mass(m, t, cfg) - 1.0));
      heat = std::max(heat, heat_equation_residual(m, t));
    }
    asym = std::max(asym, kernel_asymmetry(m, 0.05, 200, 3));
    asym = std::max(asym, kernel_asymmetry(m, 0.5, 200, 4));
  }
  asym = std::max(asym, kernel_asymmetry(Manifold::projective(2), 0.5, 200, 5));
  const double ck = std::max(chapman_kolmogorov_residual(0.05, 0.05), chapman_kolmogorov_residual(0.1, 0.2));
  const double secs = seconds_since(start);
  note("normalization %.2e  symmetry %.2e", mass, asym);
  note("Chapman-Kolmogorov %.2e  heat residual %.2e  runtime %.1f s", ck, heat, secs);
  return verdict(mass <= 1e-3 && asym <= 1e-9 && ck <= 1e-6 && heat <= 1e-3 && secs < 120);
}

// 4. End-to-end gradients.
Verdict gradients() {
  const auto start = Clock::now();
  bool ok = true;
  for (const char* name : {"sphere2", "flat-torus", "embedded-torus", "rp2", "r2", "circle", "sphere3", "rp3", "r3"}) {
    for (Likelihood l : {Likelihood::Gaussian, Likelihood::Bernoulli}) {
      GradCheckConfig cfg;
      cfg.likelihood = l;
      const GradCheckResult r = gradient_check(Manifold::parse(name), cfg);
      std::printf("  %-15s %-9s rel error %.3e\n", name, likelihood_name(l), r.rel_error);
      ok = ok && r.passed && r.rel_error < 1e-4;
    }
  }
  const double secs = seconds_since(start);
  note("runtime %.1f s", secs);
  return verdict(ok && secs < 120);
}

// Settings for the synthetic training runs. t_max is raised so that the posterior
// spread exceeds one grid step (sqrt(0.05) > 2 pi / 64).
struct SyntheticRun {
  static constexpr int kHidden = 64;
  static constexpr int kEpochs = 40;
  static constexpr int kBatch = 16;
  static constexpr double kLr = 1e-3;
  static constexpr double kTMax = 0.05;
};

struct RunOutcome {
  double mse = 0.0;
  double kl = 0.0;
  double seconds = 0.0;
  std::optional<WindingMatrix> winding;
  double coverage = 0.0;
};

const TranslationDataset& simple_dataset() {
  static const TranslationDataset ds = [] {
    PictureSpec spec;
    return translate_dataset(gen_picture(spec), kPictureSize, &spec);
  }();
  return ds;
}

RunOutcome train_synthetic(const Manifold& m, std::uint64_t seed) {
  const auto start = Clock::now();
  ModelConfig c;
  c.manifold = m;
  c.hidden = SyntheticRun::kHidden;
  c.bounds.t_max = SyntheticRun::kTMax;
  c.seed = seed;
  DvaeModel model(c);
  TrainConfig tc;
  tc.epochs = SyntheticRun::kEpochs;
  tc.batch_size = SyntheticRun::kBatch;
  tc.seed = seed;
  tc.adam.lr = SyntheticRun::kLr;
  const auto history = train(model, simple_dataset().pixels, tc);
  RunOutcome r;
  r.mse = history.back().loss.mse;
  r.kl = history.back().loss.kl;
  const LatentGrid grid = encode_grid(model, simple_dataset());
  if (m == Manifold::flat_torus()) r.winding = torus_degree(grid);
  if (m == Manifold::sphere(2)) r.coverage = sphere_coverage(grid.coords);
  r.seconds = seconds_since(start);
  return r;
}

std::vector<RunOutcome>& torus_runs() {
  static std::vector<RunOutcome> runs;
  if (!runs.empty()) return runs;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const RunOutcome r = train_synthetic(Manifold::flat_torus(), seed);
    const WindingMatrix& w = *r.winding;
    std::printf("  flat-torus seed %2llu: winding [%d %d; %d %d] degree %d %s  mse %.5f  kl %.6f  %.0f s\n",
                static_cast<unsigned long long>(seed), w.a, w.b, w.c, w.d, w.degree,
                w.resolved ? "resolved" : "unresolved", r.mse, r.kl, r.seconds);
    std::fflush(stdout);
    runs.push_back(r);
  }
  return runs;
}

bool captures_topology(const RunOutcome& r) {
  return r.winding && r.winding->resolved && std::abs(r.winding->degree) == 1 && r.mse <= 2e-2;
}

// 5. Topology capture on the flat torus.
Verdict topology_capture() {
  const auto& runs = torus_runs();
  int good = 0;
  double slowest = 0;
  for (const auto& r : runs) {
    good += captures_topology(r) ? 1 : 0;
    slowest = std::max(slowest, r.seconds);
  }
  note("%.0f of 10 seeds reach resolved |degree| = 1 with MSE <= 2e-2; slowest seed %.0f s", good, slowest);
  return verdict(good >= 6 && slowest <= 15 * 60);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 6. Flat torus beats the sphere on a torus-shaped dataset.
Verdict manifold_mismatch() {
  const auto& torus = torus_runs();
  std::vector<double> torus_mse, sphere_mse;
  bool degree_one = false;
  for (const auto& r : torus) {
    torus_mse.push_back(r.mse);
    degree_one = degree_one || captures_topology(r);
  }
  double worst_coverage = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RunOutcome r = train_synthetic(Manifold::sphere(2), seed);
    std::printf("  sphere2 seed %llu: mse %.5f  coverage %.4f  %.0f s\n", static_cast<unsigned long long>(seed), r.mse,
                r.coverage, r.seconds);
    std::fflush(stdout);
    sphere_mse.push_back(r.mse);
    worst_coverage = std::max(worst_coverage, r.coverage);
  }
  const double mt = median(torus_mse), ms = median(sphere_mse);
  note("median MSE flat torus %.5f vs sphere %.5f; largest sphere coverage %.4f", mt, ms, worst_coverage);
  return verdict(mt < ms && worst_coverage < 0.9 && degree_one);
}

// 7. MNIST desk-scale run, only when the IDX files are available.
Verdict mnist(std::string& summary) {
  const char* dir = std::getenv("DVAE_MNIST_DIR");
  if (!dir || !fs::exists(fs::path(dir) / "train-images-idx3-ubyte")) {
    summary = "MNIST files not found (set DVAE_MNIST_DIR to a directory with the four IDX files)";
    return Verdict::Skip;
  }
  const fs::path base(dir);
  const MnistSet train_set = load_mnist((base / "train-images-idx3-ubyte").string(), (base / "train-labels-idx1-ubyte").string());
  const MnistSet test_set = load_mnist((base / "t10k-images-idx3-ubyte").string(), (base / "t10k-labels-idx1-ubyte").string());
  const char* ep = std::getenv("DVAE_MNIST_EPOCHS");
  const int epochs = ep ? std::atoi(ep) : 30;

  auto fit = [&](const Manifold& m) {
    ModelConfig c;
    c.manifold = m;
    c.data_dim = 784;
    c.image_height = 28;
    c.image_width = 28;
    DvaeModel model(c);
    TrainConfig tc;
    tc.epochs = epochs;
    auto history = train(model, train_set.pixels, tc);
    return std::pair{std::move(model), std::move(history)};
  };

  auto [sphere, sphere_hist] = fit(Manifold::sphere(2));
  const EvalRow row = evaluate(sphere, test_set.pixels, 100, 1);
  note("sphere2: test mse %.5f, ll %.3f, elbo %.3f", row.mse, row.ll, row.elbo);
  note("ll - elbo %.4f, standard error %.4f", row.ll - row.elbo, row.gap_stderr);
  const bool mse_ok = std::abs(row.mse - 3.48e-2) <= 0.5 * 3.48e-2;
  const bool ll_ok = row.ll >= row.elbo - 3 * row.gap_stderr;

  auto [torus, torus_hist] = fit(Manifold::flat_torus());
  const double expected = kl_asymptotic(Manifold::flat_torus(), torus.config().bounds.t_max, 0.0);
  const double last = torus_hist.back().loss.kl;
  note("flat-torus final KL %.17g, asymptotic KL at t_max %.17g", last, expected);
  summary = "MNIST sphere MSE band, LL >= ELBO, saturated flat-torus KL";
  return verdict(mse_ok && ll_ok && last == expected);
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// 8. Repeated commands give identical files.
Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "dvae_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
  bool ok = true;
  // Both passes run in the same directory so that recorded paths agree.
  const fs::path work = root / "work";
  for (const char* tag : {"a", "b"}) {
    fs::create_directories(work);
    const std::string ds = (work / "data.bin").string();
    ok = ok && run({"gen-data", "--mode", "random-fourier", "--cutoff", "4", "--gamma", "0.5", "--seed", "3", "--grid",
                    "8", "--out", ds}) == 0;
    ok = ok && run({"train", "--data", ds, "--hidden", "16", "--epochs", "4", "--batch-size", "16", "--log-every", "0",
                    "--out", (work / "runs").string(), "--name", "r"}) == 0;
    const std::string rundir = (work / "runs" / "r").string();
    ok = ok && run({"eval", "--run", rundir, "--L", "10", "--out", (work / "eval.csv").string()}) == 0;
    ok = ok && run({"kernel-check", "--manifold", "sphere2", "--samples", "20000", "--out", (work / "kernel.csv").string()}) == 0;
    ok = ok && run({"grad-check", "--manifold", "flat-torus", "--manifold", "rp2", "--out", (work / "grad.csv").string()}) == 0;
    ok = ok && run({"latents", "--run", rundir, "--res", "4", "--out", (work / "latents").string()}) == 0;
    fs::rename(work, root / tag);
  }
  int compared = 0, identical = 0;
  for (const char* rel : {"data.bin", "runs/r/metrics.csv", "runs/r/config.txt", "runs/r/checkpoint.bin", "eval.csv",
                          "kernel.csv", "grad.csv", "latents/latents.csv", "latents/topology.csv",
                          "latents/reconstructions.ppm"}) {
    const std::string a = file_bytes(root / "a" / rel), b = file_bytes(root / "b" / rel);
    ++compared;
    if (!a.empty() && a == b) {
      ++identical;
    } else {
      std::printf("  differs or missing: %s\n", rel);
    }
  }
  fs::remove_all(root);
  note("%.0f of %.0f output files byte-identical across repeated runs", identical, compared);
  return verdict(ok && identical == compared);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::map<int, std::string> titles = {
      {1, "walk sampler matches the exact circle kernel (TV < 0.02 at N=16, <= 0.012 at N=64)"},
      {2, "asymptotic KL within 1% (t=0.01) and 0.1% (t=0.001) on S2, ratio >= 3 per halving, torus < 1e-6"},
      {3, "kernel normalization, symmetry, Chapman-Kolmogorov and heat equation"},
      {4, "pathwise gradients match central differences within 1e-4 on every manifold"},
      {5, ">= 6/10 flat-torus seeds capture the torus with MSE <= 2e-2"},
      {6, "flat torus median MSE below sphere, sphere coverage < 0.9"},
      {8, "repeated commands produce byte-identical outputs"},
  };

  int failures = 0;
  for (int id : selected) {
    Verdict v = Verdict::Fail;
    std::string summary = titles.count(id) ? titles.at(id) : "";
    try {
      switch (id) {
        case 1: v = sampler(); break;
        case 2: v = kl_asymptotics(); break;
        case 3: v = kernel_identities(); break;
        case 4: v = gradients(); break;
        case 5: v = topology_capture(); break;
        case 6: v = manifold_mismatch(); break;
        case 7: v = mnist(summary); break;
        case 8: v = determinism(); break;
        default:
          std::fprintf(stderr, "unknown criterion %d\n", id);
          return 2;
      }
    } catch (const std::exception& e) {
      std::printf("  exception: %s\n", e.what());
      v = Verdict::Fail;
    }
    report(id, v, summary);
    if (v == Verdict::Fail) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
