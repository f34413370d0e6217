#include "dvae/cli.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "dvae/data.hpp"
#include "dvae/errors.hpp"
#include "dvae/gradcheck.hpp"
#include "dvae/model.hpp"
#include "dvae/topo.hpp"
#include "dvae/validation.hpp"

namespace fs = std::filesystem;

namespace dvae::cli {
namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError("bad value for " + key + ": '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("bad value for " + key + ": '" + text + "'");
}

std::string flag_for(const std::string& key) {
  std::string f = "--" + key;
  for (char& c : f) {
    if (c == '_') c = '-';
  }
  return f;
}

KeyValues read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  return parse_key_values(in);
}

// Registers one string option per key; only options that were given end up in the result.
class FlagSet {
 public:
  FlagSet(CLI::App* app, const std::vector<std::string>& keys) {
    for (const auto& k : keys) {
      if (k == "timing") {
        opts_[k] = app->add_flag("--timing", "record wall-clock seconds in metrics.csv");
        continue;
      }
      std::string names = flag_for(k);
      if (k == "samples") names += ",--L";
      opts_[k] = app->add_option(names, values_[k], k);
    }
  }

  KeyValues given() const {
    KeyValues kv;
    for (const auto& [k, opt] : opts_) {
      if (opt->count() == 0) continue;
      kv[k] = k == "timing" ? "true" : values_.at(k);
    }
    return kv;
  }

 private:
  std::map<std::string, CLI::Option*> opts_;
  std::map<std::string, std::string> values_;
};

struct LoadedData {
  Eigen::MatrixXf pixels;
  int height = 0;
  int width = 0;
  std::optional<TranslationDataset> translation;
};

LoadedData load_data(const RunConfig& c) {
  if (c.data.empty()) throw ConfigError("no dataset given (data)");
  LoadedData d;
  if (fs::is_directory(c.data)) {
    const std::string prefix = c.split == "train" ? "train" : "t10k";
    const fs::path dir(c.data);
    MnistSet set = load_mnist((dir / (prefix + "-images-idx3-ubyte")).string(),
                              (dir / (prefix + "-labels-idx1-ubyte")).string());
    d.pixels = std::move(set.pixels);
    d.height = set.rows;
    d.width = set.cols;
  } else {
    TranslationDataset ds = read_dataset(c.data);
    d.pixels = ds.pixels;
    d.height = ds.height;
    d.width = ds.width;
    d.translation = std::move(ds);
  }
  if (c.binarize == "threshold") d.pixels = binarize(d.pixels, c.seed, BinarizeMode::Threshold);
  return d;
}

ModelConfig model_config(const RunConfig& c, const LoadedData& d) {
  ModelConfig m;
  m.manifold = Manifold::parse(c.manifold);
  m.data_dim = static_cast<int>(d.pixels.rows());
  m.image_height = d.height;
  m.image_width = d.width;
  m.hidden = c.hidden;
  m.encoder_layers = c.encoder_layers;
  m.decoder_layers = c.decoder_layers;
  m.hidden_activation = parse_activation(c.activation);
  m.bounds = {c.t_min, c.t_max};
  m.walk_steps = c.walk_steps;
  m.likelihood = parse_likelihood(c.likelihood);
  m.kl_mode = m.manifold.is_closed() ? KlMode::Asymptotic : KlMode::Gaussian;
  m.seed = c.seed;
  m.validate();
  return m;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path);
}

int cmd_gen_data(const std::string& mode, int cutoff, double gamma, std::uint64_t seed, int grid,
                 const std::string& out_arg, std::ostream& out) {
  PictureSpec spec;
  if (mode == "simple") {
    spec.mode = PictureMode::Simple;
  } else if (mode == "random-fourier") {
    spec.mode = PictureMode::RandomFourier;
    spec.cutoff = cutoff;
    spec.gamma = gamma;
    spec.seed = seed;
  } else {
    throw ConfigError("unknown picture mode '" + mode + "'");
  }
  fs::path path(out_arg);
  if (out_arg.back() == '/' || fs::is_directory(path)) {
    fs::create_directories(path);
    path /= "dataset.bin";
  } else if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  const Eigen::MatrixXd picture = gen_picture(spec);
  const TranslationDataset ds = translate_dataset(picture, grid, &spec);
  write_dataset(ds, path.string());
  out << "wrote " << path.string() << ": " << ds.count() << " records " << ds.height << "x" << ds.width
      << ", native range [" << fmt(picture.minCoeff()) << ", " << fmt(picture.maxCoeff()) << "], mode " << mode
      << ", seed " << spec.seed << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const LoadedData data = load_data(c);
  DvaeModel model(model_config(c, data));
  TrainConfig tc;
  tc.epochs = c.epochs;
  tc.batch_size = c.batch_size;
  tc.seed = c.seed;
  tc.adam = {c.lr, c.beta1, c.beta2, c.adam_eps};
  tc.stochastic_binarize = c.binarize == "stochastic";

  const std::string dir = fresh_directory(c.out, c.name.empty() ? c.manifold + "-s" + std::to_string(c.seed) : c.name);
  write_text(dir + "/config.txt", serialize(c));
  std::ofstream metrics(dir + "/metrics.csv", std::ios::binary);
  if (!metrics) throw IoError("cannot write " + dir + "/metrics.csv");
  metrics << "epoch,re,kl,elbo,mse,wall_seconds\n";
  const std::string checkpoint = dir + "/checkpoint.bin";
  out << "run directory " << dir << "\n";

  auto on_epoch = [&](const DvaeModel&, const EpochMetrics& m) {
    metrics << m.epoch << ',' << fmt(m.loss.re) << ',' << fmt(m.loss.kl) << ',' << fmt(m.loss.elbo) << ','
            << fmt(m.loss.mse) << ',' << fmt(c.timing ? m.wall_seconds : 0.0) << '\n';
    metrics.flush();
    if (c.log_every > 0 && (m.epoch % static_cast<std::uint64_t>(c.log_every) == 0 ||
                            m.epoch == static_cast<std::uint64_t>(c.epochs))) {
      out << "epoch " << m.epoch << " re " << fmt(m.loss.re) << " kl " << fmt(m.loss.kl) << " mse "
          << fmt(m.loss.mse) << "\n";
      out.flush();
    }
  };
  try {
    train(model, data.pixels, tc, on_epoch);
  } catch (const NonFinite& e) {
    save_checkpoint(model, checkpoint);
    err << "training aborted: " << e.what() << "; kept the last good checkpoint\n";
    return kExitAbort;
  } catch (const ResampleExceeded& e) {
    save_checkpoint(model, checkpoint);
    err << "training aborted: " << e.what() << "\n";
    return kExitAbort;
  }
  save_checkpoint(model, checkpoint);
  out << "wrote " << checkpoint << "\n";
  return kExitOk;
}

std::string checkpoint_path(const std::string& run_dir, const std::string& checkpoint) {
  if (!checkpoint.empty()) return checkpoint;
  if (run_dir.empty()) throw ConfigError("give --run or --checkpoint");
  return run_dir + "/checkpoint.bin";
}

int cmd_eval(const RunConfig& c, const std::string& ckpt, const std::string& out_path, std::ostream& out) {
  const DvaeModel model = load_checkpoint(ckpt);
  LoadedData data = load_data(c);
  if (c.binarize == "stochastic") data.pixels = binarize(data.pixels, c.seed, BinarizeMode::Stochastic);
  if (c.limit > 0 && c.limit < data.pixels.cols()) data.pixels = data.pixels.leftCols(c.limit).eval();
  const KlMode kl = c.kl == "numeric" ? KlMode::Numeric : model.config().kl_mode;
  const EvalRow row = evaluate(model, data.pixels, c.samples, c.seed, kl);
  const double mse_or_re = model.config().likelihood == Likelihood::Gaussian ? row.mse : row.re;
  std::ostringstream csv;
  csv << "manifold,ll,elbo,kl,mse_or_re,seed,L,count,ll_stderr,elbo_stderr,gap_stderr\n";
  csv << row.manifold << ',' << fmt(row.ll) << ',' << fmt(row.elbo) << ',' << fmt(row.kl) << ',' << fmt(mse_or_re)
      << ',' << row.seed << ',' << row.samples << ',' << row.count << ',' << fmt(row.ll_stderr) << ','
      << fmt(row.elbo_stderr) << ',' << fmt(row.gap_stderr) << '\n';
  if (out_path.empty()) {
    out << csv.str();
  } else {
    write_text(out_path, csv.str());
    out << "wrote " << out_path << "\n";
  }
  return kExitOk;
}

int cmd_kernel_check(const std::string& manifold, const KernelCheckConfig& kc, const std::string& out_path,
                     std::ostream& out) {
  const auto rows = kernel_check(Manifold::parse(manifold), kc);
  std::ostringstream csv;
  write_check_report(rows, csv);
  if (out_path.empty()) {
    out << csv.str();
  } else {
    write_text(out_path, csv.str());
    out << "wrote " << out_path << "\n";
  }
  bool ok = true;
  for (const auto& r : rows) {
    if (!r.passed) {
      ok = false;
      out << "FAIL " << r.check << " " << fmt(r.value) << " > " << fmt(r.tolerance) << "\n";
    }
  }
  return ok ? kExitOk : kExitValidation;
}

int cmd_grad_check(const std::vector<std::string>& manifolds, const GradCheckConfig& gc, const std::string& out_path,
                   std::ostream& out) {
  std::ostringstream csv;
  csv << "manifold,parameters,rel_error,worst_entry,tolerance,pass\n";
  int failures = 0;
  for (const auto& name : manifolds) {
    const GradCheckResult r = gradient_check(Manifold::parse(name), gc);
    csv << r.manifold << ',' << r.parameters << ',' << fmt(r.rel_error) << ',' << fmt(r.worst_entry) << ','
        << fmt(gc.tolerance) << ',' << (r.passed ? 1 : 0) << '\n';
    if (!r.passed) ++failures;
  }
  if (out_path.empty()) {
    out << csv.str();
  } else {
    write_text(out_path, csv.str());
    out << "wrote " << out_path << "\n";
  }
  out << (manifolds.size() - static_cast<std::size_t>(failures)) << "/" << manifolds.size() << " passed\n";
  return failures == 0 ? kExitOk : kExitValidation;
}

int cmd_latents(const RunConfig& c, const std::string& ckpt, const std::string& run_dir, const std::string& out_arg,
                int res, std::ostream& out) {
  const DvaeModel model = load_checkpoint(ckpt);
  const LoadedData data = load_data(c);
  if (!data.translation) throw ConfigError("latents needs a translation dataset");
  std::string dir = out_arg;
  if (dir.empty()) {
    if (run_dir.empty()) throw ConfigError("give --out when using --checkpoint");
    dir = fresh_directory(run_dir, "latents");
  } else {
    fs::create_directories(dir);
  }
  const LatentGrid grid = encode_grid(model, *data.translation);
  {
    std::ofstream f(dir + "/latents.csv", std::ios::binary);
    export_latents(grid, f);
    if (!f) throw IoError("cannot write " + dir + "/latents.csv");
  }
  try {
    const RgbImage img = reconstruction_grid(model, res);
    std::ofstream f(dir + "/reconstructions.ppm", std::ios::binary);
    write_ppm(img, f);
    if (!f) throw IoError("cannot write " + dir + "/reconstructions.ppm");
  } catch (const UnsupportedManifold&) {
    out << "no reconstruction grid for " << model.manifold().name() << "\n";
  }
  std::ostringstream topo;
  topo << "key,value\nmanifold," << model.manifold().name() << "\n";
  if (model.manifold() == Manifold::flat_torus()) {
    const WindingMatrix w = torus_degree(grid);
    topo << "a," << w.a << "\nb," << w.b << "\nc," << w.c << "\nd," << w.d << "\ndegree," << w.degree
         << "\nresolved," << (w.resolved ? 1 : 0) << "\nmax_step," << fmt(w.max_step) << "\nmax_deviation,"
         << fmt(w.max_deviation) << "\n";
    out << "degree " << w.degree << (w.resolved ? " (resolved)" : " (unresolved)") << "\n";
  } else if (model.manifold() == Manifold::sphere(2)) {
    const double cov = sphere_coverage(grid.coords);
    topo << "coverage," << fmt(cov) << "\n";
    out << "coverage " << fmt(cov) << "\n";
  }
  write_text(dir + "/topology.csv", topo.str());
  out << "wrote " << dir << "\n";
  return kExitOk;
}

const std::vector<std::string> kTrainKeys = {
    "manifold", "t_min",   "t_max", "walk_steps", "hidden", "encoder_layers", "decoder_layers", "activation",
    "likelihood", "lr",    "beta1", "beta2",      "adam_eps", "epochs",       "batch_size",     "seed",
    "data",     "split",   "binarize", "out",     "name",   "timing",         "log_every"};
const std::vector<std::string> kEvalKeys = {"samples", "seed", "data", "split", "binarize", "limit", "kl"};
const std::vector<std::string> kLatentKeys = {"data"};

}  // namespace

void RunConfig::validate() const {
  Manifold::parse(manifold);
  parse_activation(activation);
  parse_likelihood(likelihood);
  if (!(t_min > 0.0 && t_min < t_max)) throw ConfigError("need 0 < t_min < t_max");
  if (walk_steps < 1) throw ConfigError("walk_steps must be positive");
  if (hidden < 1 || encoder_layers < 1 || decoder_layers < 1) throw ConfigError("network sizes must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (split != "train" && split != "test") throw ConfigError("split must be train or test");
  if (binarize != "none" && binarize != "threshold" && binarize != "stochastic") {
    throw ConfigError("binarize must be none, threshold or stochastic");
  }
  if (samples < 1) throw ConfigError("samples must be positive");
  if (limit < 0) throw ConfigError("limit must be non-negative");
  if (kl != "asymptotic" && kl != "numeric") throw ConfigError("kl must be asymptotic or numeric");
  if (out.empty()) throw ConfigError("out must not be empty");
  if (name.find('/') != std::string::npos) throw ConfigError("name must not contain '/'");
  if (log_every < 0) throw ConfigError("log_every must be non-negative");
}

KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(number) + ": empty key");
    if (kv.count(key)) throw ConfigError("config key '" + key + "' given twice");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

void apply_key_values(RunConfig& c, const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    if (k == "manifold") c.manifold = v;
    else if (k == "t_min") c.t_min = parse_number<double>(k, v);
    else if (k == "t_max") c.t_max = parse_number<double>(k, v);
    else if (k == "walk_steps") c.walk_steps = parse_number<int>(k, v);
    else if (k == "hidden") c.hidden = parse_number<int>(k, v);
    else if (k == "encoder_layers") c.encoder_layers = parse_number<int>(k, v);
    else if (k == "decoder_layers") c.decoder_layers = parse_number<int>(k, v);
    else if (k == "activation") c.activation = v;
    else if (k == "likelihood") c.likelihood = v;
    else if (k == "lr") c.lr = parse_number<double>(k, v);
    else if (k == "beta1") c.beta1 = parse_number<double>(k, v);
    else if (k == "beta2") c.beta2 = parse_number<double>(k, v);
    else if (k == "adam_eps") c.adam_eps = parse_number<double>(k, v);
    else if (k == "epochs") c.epochs = parse_number<int>(k, v);
    else if (k == "batch_size") c.batch_size = parse_number<int>(k, v);
    else if (k == "seed") c.seed = parse_number<std::uint64_t>(k, v);
    else if (k == "data") c.data = v;
    else if (k == "split") c.split = v;
    else if (k == "binarize") c.binarize = v;
    else if (k == "samples") c.samples = parse_number<int>(k, v);
    else if (k == "limit") c.limit = parse_number<int>(k, v);
    else if (k == "kl") c.kl = v;
    else if (k == "out") c.out = v;
    else if (k == "name") c.name = v;
    else if (k == "timing") c.timing = parse_bool(k, v);
    else if (k == "log_every") c.log_every = parse_number<int>(k, v);
    else throw ConfigError("unknown config key '" + k + "'");
  }
}

std::string serialize(const RunConfig& c) {
  std::ostringstream o;
  o << "# effective configuration\n";
  o << "manifold = " << c.manifold << "\n";
  o << "t_min = " << fmt(c.t_min) << "\n";
  o << "t_max = " << fmt(c.t_max) << "\n";
  o << "walk_steps = " << c.walk_steps << "\n";
  o << "hidden = " << c.hidden << "\n";
  o << "encoder_layers = " << c.encoder_layers << "\n";
  o << "decoder_layers = " << c.decoder_layers << "\n";
  o << "activation = " << c.activation << "\n";
  o << "likelihood = " << c.likelihood << "\n";
  o << "lr = " << fmt(c.lr) << "\n";
  o << "beta1 = " << fmt(c.beta1) << "\n";
  o << "beta2 = " << fmt(c.beta2) << "\n";
  o << "adam_eps = " << fmt(c.adam_eps) << "\n";
  o << "epochs = " << c.epochs << "\n";
  o << "batch_size = " << c.batch_size << "\n";
  o << "seed = " << c.seed << "\n";
  o << "data = " << c.data << "\n";
  o << "split = " << c.split << "\n";
  o << "binarize = " << c.binarize << "\n";
  o << "samples = " << c.samples << "\n";
  o << "limit = " << c.limit << "\n";
  o << "kl = " << c.kl << "\n";
  o << "out = " << c.out << "\n";
  o << "name = " << c.name << "\n";
  o << "timing = " << (c.timing ? "true" : "false") << "\n";
  o << "log_every = " << c.log_every << "\n";
  return o.str();
}

std::string fresh_directory(const std::string& parent, const std::string& name) {
  fs::create_directories(parent);
  fs::path candidate = fs::path(parent) / name;
  for (int k = 1; fs::exists(candidate); ++k) candidate = fs::path(parent) / (name + "-" + std::to_string(k));
  if (!fs::create_directory(candidate)) throw IoError("cannot create " + candidate.string());
  return candidate.string();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion VAE with closed-manifold latent spaces"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a translated-picture dataset");
  std::string gen_mode = "simple", gen_out;
  int gen_cutoff = 1, gen_grid = kPictureSize;
  double gen_gamma = 1.0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--mode", gen_mode, "simple or random-fourier")->capture_default_str();
  gen->add_option("--cutoff", gen_cutoff, "Fourier cutoff N")->capture_default_str();
  gen->add_option("--gamma", gen_gamma, "Fourier decay in (0, 1]")->capture_default_str();
  gen->add_option("--seed", gen_seed, "coefficient seed")->capture_default_str();
  gen->add_option("--grid", gen_grid, "shifts per axis, divides 64")->capture_default_str();
  gen->add_option("--out", gen_out, "output file, or directory for dataset.bin")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a model into a fresh run directory");
  std::string train_config;
  tr->add_option("--config", train_config, "key = value file; flags override it");
  FlagSet train_flags(tr, kTrainKeys);

  // eval
  auto* ev = app.add_subcommand("eval", "importance-sampled log-likelihood and ELBO");
  std::string eval_run, eval_ckpt, eval_config, eval_out;
  ev->add_option("--run", eval_run, "run directory (checkpoint and config)");
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint file");
  ev->add_option("--config", eval_config, "key = value file; flags override it");
  ev->add_option("--out", eval_out, "CSV path (stdout when absent)");
  FlagSet eval_flags(ev, kEvalKeys);

  // kernel-check
  auto* kcmd = app.add_subcommand("kernel-check", "validate sampler, kernel and KL");
  std::string kc_manifold = "circle", kc_out;
  std::optional<double> kc_time;
  KernelCheckConfig kc;
  kcmd->add_option("--manifold", kc_manifold, "circle, sphere2 or flat-torus")->capture_default_str();
  kcmd->add_option("--t", kc_time, "diffusion time (0.25 on the circle, 0.01 otherwise)");
  kcmd->add_option("--steps", kc.steps, "walk steps N")->capture_default_str();
  kcmd->add_option("--samples", kc.samples, "walk samples")->capture_default_str();
  kcmd->add_option("--bins", kc.bins, "histogram bins")->capture_default_str();
  kcmd->add_option("--seed", kc.seed, "sampler seed")->capture_default_str();
  kcmd->add_option("--out", kc_out, "report CSV (stdout when absent)");

  // grad-check
  auto* gcmd = app.add_subcommand("grad-check", "finite-difference check of the full gradient");
  std::vector<std::string> gc_manifolds{"sphere2", "flat-torus", "embedded-torus", "rp2", "r2"};
  std::string gc_likelihood = "gaussian", gc_out;
  GradCheckConfig gc;
  gcmd->add_option("--manifold", gc_manifolds, "manifolds to check")->capture_default_str();
  gcmd->add_option("--likelihood", gc_likelihood, "gaussian or bernoulli")->capture_default_str();
  gcmd->add_option("--hidden", gc.hidden)->capture_default_str();
  gcmd->add_option("--data-dim", gc.data_dim)->capture_default_str();
  gcmd->add_option("--batch", gc.batch)->capture_default_str();
  gcmd->add_option("--seed", gc.seed)->capture_default_str();
  gcmd->add_option("--tolerance", gc.tolerance)->capture_default_str();
  gcmd->add_option("--out", gc_out, "report CSV (stdout when absent)");

  // latents
  auto* lat = app.add_subcommand("latents", "latent CSV, reconstruction grid and topology report");
  std::string lat_run, lat_ckpt, lat_out;
  int lat_res = 16;
  lat->add_option("--run", lat_run, "run directory");
  lat->add_option("--checkpoint", lat_ckpt, "checkpoint file");
  lat->add_option("--out", lat_out, "output directory (default <run>/latents)");
  lat->add_option("--res", lat_res, "reconstruction grid resolution")->capture_default_str();
  FlagSet lat_flags(lat, kLatentKeys);

  std::vector<const char*> argv{"dvae"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_mode, gen_cutoff, gen_gamma, gen_seed, gen_grid, gen_out, out);

    if (tr->parsed()) {
      RunConfig c;
      if (!train_config.empty()) apply_key_values(c, read_config_file(train_config));
      apply_key_values(c, train_flags.given());
      c.validate();
      return cmd_train(c, out, err);
    }

    if (ev->parsed()) {
      RunConfig c;
      c.split = "test";
      if (!eval_run.empty() && fs::exists(eval_run + "/config.txt")) {
        KeyValues base = read_config_file(eval_run + "/config.txt");
        base.erase("split");
        apply_key_values(c, base);
      }
      if (!eval_config.empty()) apply_key_values(c, read_config_file(eval_config));
      apply_key_values(c, eval_flags.given());
      c.validate();
      return cmd_eval(c, checkpoint_path(eval_run, eval_ckpt), eval_out, out);
    }

    if (kcmd->parsed()) {
      const Manifold m = Manifold::parse(kc_manifold);
      kc.time = kc_time.value_or(m == Manifold::sphere(1) ? 0.25 : 0.01);
      return cmd_kernel_check(kc_manifold, kc, kc_out, out);
    }

    if (gcmd->parsed()) {
      gc.likelihood = parse_likelihood(gc_likelihood);
      return cmd_grad_check(gc_manifolds, gc, gc_out, out);
    }

    if (lat->parsed()) {
      RunConfig c;
      if (!lat_run.empty() && fs::exists(lat_run + "/config.txt")) apply_key_values(c, read_config_file(lat_run + "/config.txt"));
      apply_key_values(c, lat_flags.given());
      c.validate();
      return cmd_latents(c, checkpoint_path(lat_run, lat_ckpt), lat_run, lat_out, lat_res, out);
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NonFinite& e) {
    err << "error: " << e.what() << "\n";
    return kExitAbort;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace dvae::cli
