#include "dvae/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "dvae/errors.hpp"

namespace dvae {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }
double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

std::vector<int> layer_sizes(int in, int hidden, int hidden_layers, int out) {
  std::vector<int> sizes{in};
  for (int i = 0; i < hidden_layers; ++i) sizes.push_back(hidden);
  sizes.push_back(out);
  return sizes;
}

std::vector<Activation> layer_activations(Activation hidden, int hidden_layers) {
  std::vector<Activation> acts(hidden_layers, hidden);
  acts.push_back(Activation::Identity);
  return acts;
}

// Gradient of reconstruction_error w.r.t. the logits.
Vec reconstruction_gradient(Likelihood l, const Vec& x, const Vec& logits) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double p = sigmoid(logits[i]);
    g[i] = l == Likelihood::Gaussian ? (p - x[i]) * p * (1.0 - p) : p - x[i];
  }
  return g;
}

double squared_error_mean(const Vec& x, const Vec& logits) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double r = x[i] - sigmoid(logits[i]);
    s += r * r;
  }
  return s / static_cast<double>(x.size());
}

double log_mean_exp(const std::vector<double>& v) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, x);
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s / static_cast<double>(v.size()));
}

KernelSeriesConfig evaluation_kernel_config(const DvaeModel& model, double time) {
  KernelSeriesConfig cfg;
  cfg.t_min = std::min({cfg.t_min, model.config().bounds.t_min, time});
  cfg.t_max = std::max({cfg.t_max, model.config().bounds.t_max, time});
  return cfg;
}

// Coarser quadrature for per-datapoint KL audits; still converged to ~1e-6 at training t.
KernelSeriesConfig audit_kernel_config(const DvaeModel& model) {
  KernelSeriesConfig cfg = evaluation_kernel_config(model, model.config().bounds.t_min);
  cfg.circle_grid = 2048;
  cfg.sphere_grid = 4000;
  return cfg;
}

}  // namespace

const char* likelihood_name(Likelihood l) { return l == Likelihood::Gaussian ? "gaussian" : "bernoulli"; }

Likelihood parse_likelihood(const std::string& s) {
  if (s == "gaussian") return Likelihood::Gaussian;
  if (s == "bernoulli") return Likelihood::Bernoulli;
  throw ConfigError("unknown likelihood '" + s + "'");
}

const char* kl_mode_name(KlMode k) {
  switch (k) {
    case KlMode::Asymptotic:
      return "asymptotic";
    case KlMode::Numeric:
      return "numeric";
    case KlMode::Gaussian:
      return "gaussian";
  }
  return "asymptotic";
}

KlMode parse_kl_mode(const std::string& s) {
  if (s == "asymptotic") return KlMode::Asymptotic;
  if (s == "numeric") return KlMode::Numeric;
  if (s == "gaussian") return KlMode::Gaussian;
  throw ConfigError("unknown kl mode '" + s + "'");
}

void ModelConfig::validate() const {
  if (data_dim < 1 || hidden < 1 || encoder_layers < 1 || decoder_layers < 1) {
    throw ConfigError("network sizes must be positive");
  }
  if (image_height * image_width != data_dim) throw ConfigError("image shape does not match data_dim");
  if (!(bounds.t_min > 0.0 && bounds.t_max > bounds.t_min)) throw ConfigError("need 0 < t_min < t_max");
  if (walk_steps < 1) throw ConfigError("walk_steps must be at least 1");
  if ((kl_mode == KlMode::Gaussian) != !manifold.is_closed()) {
    throw ConfigError("kl_mode gaussian goes with Euclidean latents and only with them");
  }
}

DvaeModel::DvaeModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  head_ = EncoderHead{config_.manifold, config_.bounds};
  Rng enc_rng = Rng::stream(config_.seed, 0xE1);
  Rng dec_rng = Rng::stream(config_.seed, 0xD1);
  encoder_ = Mlp(layer_sizes(config_.data_dim, config_.hidden, config_.encoder_layers, head_.raw_dim()),
                 layer_activations(config_.hidden_activation, config_.encoder_layers), enc_rng);
  decoder_ = Mlp(layer_sizes(decoder_input_dim(), config_.hidden, config_.decoder_layers, config_.data_dim),
                 layer_activations(config_.hidden_activation, config_.decoder_layers), dec_rng);
}

DvaeModel::DvaeModel(ModelConfig config, Mlp encoder, Mlp decoder)
    : config_(std::move(config)), encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
  config_.validate();
  head_ = EncoderHead{config_.manifold, config_.bounds};
  if (encoder_.in_dim() != config_.data_dim || encoder_.out_dim() != head_.raw_dim() ||
      decoder_.in_dim() != decoder_input_dim() || decoder_.out_dim() != config_.data_dim) {
    throw ShapeMismatch("networks do not match the model configuration");
  }
}

int DvaeModel::decoder_input_dim() const {
  const int n = config_.manifold.ambient_dim();
  if (config_.manifold.kind() == ManifoldKind::ProjectiveSphere) return n * (n + 1) / 2;
  return n;
}

Encoded DvaeModel::encode(const Mat& x) const {
  Encoded enc;
  enc.pass = encoder_.forward(x);
  enc.raw = enc.pass.output;
  if (!enc.raw.allFinite()) throw NonFinite("encoder output is not finite");
  const Manifold& m = config_.manifold;
  const Eigen::Index batch = x.cols();
  if (!m.is_closed()) {
    const int d = m.intrinsic_dim();
    enc.centers = enc.raw.topRows(d);
    enc.log_vars = enc.raw.bottomRows(d);
    return enc;
  }
  const int n = m.ambient_dim();
  enc.centers.resize(n, batch);
  enc.times.resize(batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    Vec a = enc.raw.col(b).head(n);
    for (int attempt = 0;; ++attempt) {
      try {
        enc.centers.col(b) = project(m, a);
        break;
      } catch (const SingularProjection&) {
        if (attempt >= kMaxResamples) throw;
        a[0] += 1e-6;
      }
    }
    enc.raw.col(b).head(n) = a;
    enc.times[b] = head_.time(enc.raw(n, b));
  }
  return enc;
}

Vec DvaeModel::decoder_features(const Vec& z) const {
  if (config_.manifold.kind() == ManifoldKind::ProjectiveSphere) return even_feature_map(z);
  return z;
}

Mat DvaeModel::decoder_features(const Mat& z) const {
  if (config_.manifold.kind() != ManifoldKind::ProjectiveSphere) return z;
  Mat f(decoder_input_dim(), z.cols());
  for (Eigen::Index b = 0; b < z.cols(); ++b) f.col(b) = even_feature_map(z.col(b));
  return f;
}

Mat DvaeModel::decode_logits(const Mat& z) const { return decoder_.predict(decoder_features(z)); }

Mat DvaeModel::decode(const Mat& z) const {
  return apply_activation(Activation::Sigmoid, decode_logits(z));
}

std::vector<std::span<double>> DvaeModel::parameter_blocks() {
  auto blocks = encoder_.parameter_blocks();
  for (auto b : decoder_.parameter_blocks()) blocks.push_back(b);
  return blocks;
}

double reconstruction_error(Likelihood l, const Vec& x, const Vec& logits) {
  if (x.size() != logits.size()) throw ShapeMismatch("reconstruction: data and decoder output differ");
  double s = 0.0;
  if (l == Likelihood::Gaussian) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double r = x[i] - sigmoid(logits[i]);
      s += r * r;
    }
    return 0.5 * s + 0.5 * static_cast<double>(x.size()) * kLog2Pi;
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) s += softplus(logits[i]) - x[i] * logits[i];
  return s;
}

double posterior_kl(const DvaeModel& model, const Encoded& enc, Eigen::Index column, KlMode mode) {
  const Manifold& m = model.manifold();
  if (!m.is_closed()) {
    return kl_gaussian(enc.centers.col(column), enc.log_vars.col(column).array().exp().matrix());
  }
  const PosteriorParams p{enc.centers.col(column), enc.times[column]};
  if (mode == KlMode::Numeric) return kl_numeric(m, p, audit_kernel_config(model));
  return kl_asymptotic(m, p);
}

BatchNoise draw_noise(const DvaeModel& model, const Encoded& enc, Rng& rng) {
  const Manifold& m = model.manifold();
  BatchNoise noise(static_cast<std::size_t>(enc.centers.cols()));
  for (Eigen::Index b = 0; b < enc.centers.cols(); ++b) {
    auto& nb = noise[static_cast<std::size_t>(b)];
    if (!m.is_closed()) {
      nb = rng.normal_vector(m.intrinsic_dim());
      continue;
    }
    random_walk_sample(m, PosteriorParams{enc.centers.col(b), enc.times[b]}, model.config().walk_steps, rng, &nb);
  }
  return noise;
}

namespace {

LossBreakdown loss_from_encoded(const DvaeModel& model, const Mat& x, const Encoded& enc,
                                const BatchNoise& noise, ModelGradients* grads) {
  const Manifold& m = model.manifold();
  const auto& cfg = model.config();
  const Eigen::Index batch = x.cols();
  if (static_cast<Eigen::Index>(noise.size()) != batch) throw ShapeMismatch("one noise block per datapoint");
  const double inv_b = 1.0 / static_cast<double>(batch);

  // Reparametrized latent samples.
  const Eigen::Index n = m.is_closed() ? m.ambient_dim() : m.intrinsic_dim();
  Mat ys(n, batch);
  std::vector<WalkResult> walks;
  Mat sigmas;
  if (m.is_closed()) {
    walks.reserve(static_cast<std::size_t>(batch));
    for (Eigen::Index b = 0; b < batch; ++b) {
      walks.push_back(random_walk_with_jacobians(m, enc.centers.col(b), enc.times[b], noise[static_cast<std::size_t>(b)]));
      ys.col(b) = walks.back().point;
    }
  } else {
    sigmas = (0.5 * enc.log_vars.array()).exp().matrix();
    for (Eigen::Index b = 0; b < batch; ++b) {
      const Mat& eps = noise[static_cast<std::size_t>(b)];
      if (eps.rows() != n || eps.cols() != 1) throw ShapeMismatch("Gaussian noise must be d x 1");
      ys.col(b) = enc.centers.col(b) + sigmas.col(b).cwiseProduct(eps.col(0));
    }
  }

  const Mat features = model.decoder_features(ys);
  const ForwardPass dec = model.decoder().forward(features);

  LossBreakdown out;
  Mat dlogits(cfg.data_dim, batch);
  Vec kl_values(batch);
  RunningMean kl_mean;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Vec xb = x.col(b);
    const Vec lb = dec.output.col(b);
    out.re += reconstruction_error(cfg.likelihood, xb, lb);
    out.mse += squared_error_mean(xb, lb);
    kl_values[b] = posterior_kl(model, enc, b, KlMode::Asymptotic);
    kl_mean.add(kl_values[b]);
    if (grads) dlogits.col(b) = reconstruction_gradient(cfg.likelihood, xb, lb) * inv_b;
  }
  out.re *= inv_b;
  out.mse *= inv_b;
  out.kl = kl_mean.mean;
  out.elbo = -(out.re + out.kl);
  if (!std::isfinite(out.elbo)) throw NonFinite("negative ELBO is not finite");
  if (!grads) return out;

  const BackwardPass dback = model.decoder().backward(dec, dlogits);
  grads->decoder = dback.grads;

  Mat upstream(model.head().raw_dim(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    Vec gy = dback.input_grad.col(b);
    if (m.kind() == ManifoldKind::ProjectiveSphere) gy = even_feature_jacobian(ys.col(b)).transpose() * gy;
    if (!m.is_closed()) {
      const Vec eps = noise[static_cast<std::size_t>(b)].col(0);
      const Vec mean = enc.centers.col(b);
      const Vec lv = enc.log_vars.col(b);
      upstream.col(b).head(n) = gy + mean * inv_b;
      upstream.col(b).tail(n) = (0.5 * gy.array() * eps.array() * sigmas.col(b).array() +
                                 0.5 * (lv.array().exp() - 1.0) * inv_b).matrix();
      continue;
    }
    const WalkResult& w = walks[static_cast<std::size_t>(b)];
    const double t = enc.times[b];
    const Vec a = enc.raw.col(b).head(n);
    const Vec z = enc.centers.col(b);
    const double sc = scalar_curvature(m, z);
    const double dkl_dt = -0.5 * m.intrinsic_dim() / t + 0.25 * sc;
    const Vec gz = w.d_center.transpose() * gy;
    const double gt = w.d_time.dot(gy) + dkl_dt * inv_b;
    upstream.col(b).head(n) = project_jacobian(m, a).transpose() * gz +
                              (0.25 * t * inv_b) * scalar_curvature_gradient(m, a);
    upstream(n, b) = gt * model.head().time_derivative(enc.raw(n, b));
  }
  grads->encoder = model.encoder().backward(enc.pass, upstream).grads;
  return out;
}

}  // namespace

LossBreakdown elbo_loss_with_noise(const DvaeModel& model, const Mat& x, const BatchNoise& noise,
                                   ModelGradients* grads) {
  if (x.cols() < 1) throw DomainError("elbo_loss needs a non-empty batch");
  const Encoded enc = model.encode(x);
  return loss_from_encoded(model, x, enc, noise, grads);
}

LossBreakdown elbo_loss(const DvaeModel& model, const Mat& x, Rng& rng, ModelGradients* grads,
                        BatchNoise* noise_out) {
  if (x.cols() < 1) throw DomainError("elbo_loss needs a non-empty batch");
  const Encoded enc = model.encode(x);
  BatchNoise noise = draw_noise(model, enc, rng);
  const LossBreakdown out = loss_from_encoded(model, x, enc, noise, grads);
  if (noise_out) *noise_out = std::move(noise);
  return out;
}

double importance_loglik_at(const DvaeModel& model, const Vec& x, const PosteriorParams& posterior,
                            int samples, Rng& rng) {
  if (samples < 1) throw DomainError("importance sampling needs L >= 1");
  const Manifold& m = model.manifold();
  const auto& cfg = model.config();
  const KernelSeriesConfig kcfg = evaluation_kernel_config(model, posterior.time);
  Mat ys(m.ambient_dim(), samples);
  for (int l = 0; l < samples; ++l) {
    if (m.is_closed()) {
      ys.col(l) = random_walk_sample(m, posterior, cfg.walk_steps, rng);
    } else {
      ys.col(l) = posterior.center + std::sqrt(posterior.time) * rng.normal_vector(m.ambient_dim());
    }
  }
  const Mat logits = model.decode_logits(ys);
  std::vector<double> logw(static_cast<std::size_t>(samples));
  for (int l = 0; l < samples; ++l) {
    const Vec y = ys.col(l);
    const double logq = log_heat_kernel_density(m, posterior.time, posterior.center, y, kcfg);
    logw[static_cast<std::size_t>(l)] =
        -reconstruction_error(cfg.likelihood, x, logits.col(l)) + prior_log_density(m, y) - logq;
  }
  return log_mean_exp(logw);
}

double importance_loglik(const DvaeModel& model, const Vec& x, int samples, Rng& rng) {
  if (samples < 1) throw DomainError("importance sampling needs L >= 1");
  const Encoded enc = model.encode(x);
  const Manifold& m = model.manifold();
  if (m.is_closed()) {
    return importance_loglik_at(model, x, PosteriorParams{enc.centers.col(0), enc.times[0]}, samples, rng);
  }
  const Vec mean = enc.centers.col(0);
  const Vec var = enc.log_vars.col(0).array().exp().matrix();
  const Vec sd = var.cwiseSqrt();
  Mat ys(mean.size(), samples);
  for (int l = 0; l < samples; ++l) ys.col(l) = mean + sd.cwiseProduct(rng.normal_vector(mean.size()));
  const Mat logits = model.decode_logits(ys);
  std::vector<double> logw(static_cast<std::size_t>(samples));
  for (int l = 0; l < samples; ++l) {
    const Vec y = ys.col(l);
    logw[static_cast<std::size_t>(l)] = -reconstruction_error(model.config().likelihood, x, logits.col(l)) +
                                        prior_log_density(m, y) - log_gaussian_diag(y, mean, var);
  }
  return log_mean_exp(logw);
}

EvalRow evaluate(const DvaeModel& model, const Eigen::MatrixXf& data, int samples, std::uint64_t seed,
                 KlMode kl_mode) {
  if (data.cols() < 1) throw DomainError("evaluate needs data");
  EvalRow row;
  row.manifold = model.manifold().name();
  row.seed = seed;
  row.samples = samples;
  row.count = static_cast<std::size_t>(data.cols());
  RunningMean kl_mean;
  const auto& cfg = model.config();
  double ll_sq = 0.0, elbo_sq = 0.0, gap_sum = 0.0, gap_sq = 0.0;
  constexpr Eigen::Index kChunk = 256;
  for (Eigen::Index start = 0; start < data.cols(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, data.cols() - start);
    const Mat xs = data.middleCols(start, len).cast<double>();
    const Encoded enc = model.encode(xs);
    for (Eigen::Index j = 0; j < len; ++j) {
      Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(start + j));
      const Vec x = xs.col(j);
      Encoded one;
      one.centers = enc.centers.col(j);
      if (model.manifold().is_closed()) {
        one.times = enc.times.segment(j, 1);
      } else {
        one.log_vars = enc.log_vars.col(j);
      }
      const BatchNoise noise = draw_noise(model, one, rng);
      Vec y;
      if (model.manifold().is_closed()) {
        y = random_walk(model.manifold(), one.centers.col(0), one.times[0], noise[0]);
      } else {
        y = one.centers.col(0) + (0.5 * one.log_vars.col(0).array()).exp().matrix().cwiseProduct(noise[0].col(0));
      }
      const Vec logits = model.decode_logits(y);
      const double re = reconstruction_error(cfg.likelihood, x, logits);
      const double kl = posterior_kl(model, one, 0, kl_mode);
      const double elbo = -(re + kl);
      double ll = 0.0;
      if (model.manifold().is_closed()) {
        ll = importance_loglik_at(model, x, PosteriorParams{one.centers.col(0), one.times[0]}, samples, rng);
      } else {
        ll = importance_loglik(model, x, samples, rng);
      }
      row.re += re;
      kl_mean.add(kl);
      row.elbo += elbo;
      row.mse += squared_error_mean(x, logits);
      row.ll += ll;
      ll_sq += ll * ll;
      elbo_sq += elbo * elbo;
      gap_sum += ll - elbo;
      gap_sq += (ll - elbo) * (ll - elbo);
    }
  }
  const double cnt = static_cast<double>(row.count);
  row.re /= cnt;
  row.kl = kl_mean.mean;
  row.elbo /= cnt;
  row.mse /= cnt;
  row.ll /= cnt;
  auto stderr_of = [cnt](double sum_sq, double mean) {
    if (cnt < 2) return 0.0;
    const double var = std::max(0.0, (sum_sq - cnt * mean * mean) / (cnt - 1.0));
    return std::sqrt(var / cnt);
  };
  row.ll_stderr = stderr_of(ll_sq, row.ll);
  row.elbo_stderr = stderr_of(elbo_sq, row.elbo);
  row.gap_stderr = stderr_of(gap_sq, gap_sum / cnt);
  return row;
}

}  // namespace dvae
