#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dvae/diffusion.hpp"
#include "dvae/manifolds.hpp"
#include "dvae/nets.hpp"
#include "dvae/rng.hpp"

namespace dvae {

enum class Likelihood { Gaussian, Bernoulli };
enum class KlMode { Asymptotic, Numeric, Gaussian };

const char* likelihood_name(Likelihood l);
Likelihood parse_likelihood(const std::string& s);
const char* kl_mode_name(KlMode k);
KlMode parse_kl_mode(const std::string& s);

struct ModelConfig {
  Manifold manifold = Manifold::flat_torus();
  int data_dim = 64 * 64;
  int image_height = 64;
  int image_width = 64;
  int hidden = 256;
  int encoder_layers = 3;
  int decoder_layers = 2;
  Activation hidden_activation = Activation::Relu;
  TimeBounds bounds;
  int walk_steps = 16;
  Likelihood likelihood = Likelihood::Gaussian;
  KlMode kl_mode = KlMode::Asymptotic;
  std::uint64_t seed = 1;

  /// Fills kl_mode from the manifold (gaussian iff Euclidean) and checks invariants.
  void validate() const;
};

/// Posterior parameters for a batch, plus what the backward pass needs.
struct Encoded {
  Mat raw;       // encoder output before the head
  Mat centers;   // n x B: z on the manifold, or the Gaussian mean
  Vec times;     // B: diffusion times (closed manifolds)
  Mat log_vars;  // d x B: Gaussian log-variances (Euclidean)
  ForwardPass pass;
};

struct LossBreakdown {
  double re = 0.0;
  double kl = 0.0;
  double elbo = 0.0;
  double mse = 0.0;
};

/// Weighted running mean. Adding a value equal to the current mean leaves it
/// bit-for-bit unchanged, so constant inputs average to exactly that constant.
struct RunningMean {
  double mean = 0.0;
  double weight = 0.0;

  void add(double v, double w = 1.0) {
    weight += w;
    mean += (v - mean) * (w / weight);
  }
};

struct ModelGradients {
  GradientSet encoder;
  GradientSet decoder;
};

/// Reparametrization noise for one batch: one n x N walk matrix per sample
/// (d x 1 for the Euclidean baseline).
using BatchNoise = std::vector<Mat>;

class DvaeModel {
 public:
  explicit DvaeModel(ModelConfig config);
  DvaeModel(ModelConfig config, Mlp encoder, Mlp decoder);

  const ModelConfig& config() const { return config_; }
  const Manifold& manifold() const { return config_.manifold; }
  const EncoderHead& head() const { return head_; }

  Mlp& encoder() { return encoder_; }
  const Mlp& encoder() const { return encoder_; }
  Mlp& decoder() { return decoder_; }
  const Mlp& decoder() const { return decoder_; }

  AdamState& optimizer() { return optimizer_; }
  const AdamState& optimizer() const { return optimizer_; }
  std::uint64_t epochs_trained() const { return epochs_trained_; }
  void set_epochs_trained(std::uint64_t n) { epochs_trained_ = n; }

  int decoder_input_dim() const;

  /// x is D x B. Raw ambient outputs that land on the singular set are nudged by
  /// 1e-6 in their first coordinate.
  Encoded encode(const Mat& x) const;

  /// Decoder input for a latent point: ambient coordinates, or even features on
  /// projective spaces.
  Vec decoder_features(const Vec& z) const;
  Mat decoder_features(const Mat& z) const;

  /// Per-pixel parameters in (0, 1) for latent points z (n x B).
  Mat decode(const Mat& z) const;
  /// Decoder logits for latent points z (n x B).
  Mat decode_logits(const Mat& z) const;

  std::vector<std::span<double>> parameter_blocks();

 private:
  ModelConfig config_;
  EncoderHead head_;
  Mlp encoder_;
  Mlp decoder_;
  AdamState optimizer_;
  std::uint64_t epochs_trained_ = 0;
};

/// -log p(x | logits) per column, Gaussian identity covariance on sigmoid means or Bernoulli.
double reconstruction_error(Likelihood l, const Vec& x, const Vec& logits);

/// Negative ELBO averaged over the batch with the given frozen noise; gradients of
/// the mean loss w.r.t. all encoder and decoder parameters when grads is non-null.
LossBreakdown elbo_loss_with_noise(const DvaeModel& model, const Mat& x, const BatchNoise& noise,
                                   ModelGradients* grads);

/// Draws one reparametrization per datapoint from rng, resampling noise that hits
/// the singular set. The noise used is returned through noise_out when non-null.
LossBreakdown elbo_loss(const DvaeModel& model, const Mat& x, Rng& rng, ModelGradients* grads,
                        BatchNoise* noise_out = nullptr);

BatchNoise draw_noise(const DvaeModel& model, const Encoded& enc, Rng& rng);

struct TrainConfig {
  int epochs = 300;
  int batch_size = 128;
  std::uint64_t seed = 1;
  AdamHyper adam;
  bool stochastic_binarize = false;
};

struct EpochMetrics {
  std::uint64_t epoch = 0;
  LossBreakdown loss;
  double wall_seconds = 0.0;
};

using EpochCallback = std::function<void(const DvaeModel&, const EpochMetrics&)>;

/// Minibatch Adam on the negative ELBO. data is D x count, pixels in [0, 1].
/// Deterministic given config.seed. Throws NonFinite if the loss stops being finite;
/// the model then still holds the parameters from the last completed epoch.
std::vector<EpochMetrics> train(DvaeModel& model, const Eigen::MatrixXf& data, const TrainConfig& config,
                                const EpochCallback& on_epoch = {});

/// Importance-sampled log-likelihood with L posterior samples from the walk sampler.
/// Returns -inf when every log-weight underflows.
double importance_loglik(const DvaeModel& model, const Vec& x, int samples, Rng& rng);

/// Same estimator with explicit posterior parameters (t may exceed training bounds).
double importance_loglik_at(const DvaeModel& model, const Vec& x, const PosteriorParams& posterior,
                            int samples, Rng& rng);

struct EvalRow {
  std::string manifold;
  double ll = 0.0;
  double elbo = 0.0;
  double kl = 0.0;
  double mse = 0.0;
  double re = 0.0;
  double ll_stderr = 0.0;
  double elbo_stderr = 0.0;
  double gap_stderr = 0.0;  // standard error of the per-datapoint ll - elbo
  std::size_t count = 0;
  std::uint64_t seed = 0;
  int samples = 100;
};

/// Dataset averages of LL, one-sample ELBO, KL and MSE/RE. Datapoint i uses the
/// rng substream (seed, i). kl_mode Numeric reports quadrature KL where available.
EvalRow evaluate(const DvaeModel& model, const Eigen::MatrixXf& data, int samples, std::uint64_t seed,
                 KlMode kl_mode = KlMode::Asymptotic);

/// Per-datapoint KL for given posterior parameters under the model's convention.
double posterior_kl(const DvaeModel& model, const Encoded& enc, Eigen::Index column, KlMode mode);

void save_checkpoint(const DvaeModel& model, const std::string& path);
DvaeModel load_checkpoint(const std::string& path);

}  // namespace dvae
