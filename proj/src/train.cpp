#include <chrono>
#include <cmath>
#include <numeric>

#include "dvae/errors.hpp"
#include "dvae/model.hpp"

namespace dvae {

namespace {

// Fisher-Yates with an explicit engine so the order does not depend on the standard library.
std::vector<Eigen::Index> shuffled_indices(Eigen::Index count, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(count));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kBatchStream = 0x4241544348ULL;

}  // namespace

std::vector<EpochMetrics> train(DvaeModel& model, const Eigen::MatrixXf& data, const TrainConfig& config,
                                const EpochCallback& on_epoch) {
  if (data.cols() < 1) throw DomainError("training needs a non-empty dataset");
  if (data.rows() != model.config().data_dim) throw ShapeMismatch("dataset rows differ from model data_dim");
  if (config.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (model.config().kl_mode == KlMode::Numeric) {
    throw ConfigError("numeric KL is an evaluation-time audit; train with the asymptotic KL");
  }
  std::vector<EpochMetrics> history;
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index count = data.cols();
  for (int e = 0; e < config.epochs; ++e) {
    const std::uint64_t epoch = model.epochs_trained();
    const Mlp encoder_backup = model.encoder();
    const Mlp decoder_backup = model.decoder();
    const AdamState optimizer_backup = model.optimizer();

    Rng shuffle_rng = Rng::stream(config.seed ^ kShuffleStream, epoch);
    const auto order = shuffled_indices(count, shuffle_rng);
    LossBreakdown sum;
    RunningMean kl_mean;
    std::uint64_t batch_index = 0;
    try {
      for (Eigen::Index first = 0; first < count; first += config.batch_size, ++batch_index) {
        const Eigen::Index len = std::min<Eigen::Index>(config.batch_size, count - first);
        Rng rng = Rng::stream(config.seed ^ kBatchStream, epoch * 1000003ULL + batch_index);
        Mat x(data.rows(), len);
        for (Eigen::Index j = 0; j < len; ++j) {
          x.col(j) = data.col(order[static_cast<std::size_t>(first + j)]).cast<double>();
        }
        if (config.stochastic_binarize) {
          for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.uniform() < x.data()[k] ? 1.0 : 0.0;
        }
        ModelGradients grads;
        const LossBreakdown loss = elbo_loss(model, x, rng, &grads);
        auto blocks = gradient_blocks(grads.encoder);
        for (auto b : gradient_blocks(grads.decoder)) blocks.push_back(b);
        for (const auto& b : blocks) {
          for (double g : b) {
            if (!std::isfinite(g)) throw NonFinite("gradient is not finite");
          }
        }
        adam_step(model.parameter_blocks(), blocks, model.optimizer(), config.adam);
        const double w = static_cast<double>(len);
        sum.re += w * loss.re;
        kl_mean.add(loss.kl, w);
        sum.mse += w * loss.mse;
      }
    } catch (const NonFinite&) {
      model.encoder() = encoder_backup;
      model.decoder() = decoder_backup;
      model.optimizer() = optimizer_backup;
      throw;
    }
    model.set_epochs_trained(epoch + 1);
    EpochMetrics m;
    m.epoch = epoch + 1;
    const double inv = 1.0 / static_cast<double>(count);
    m.loss.re = sum.re * inv;
    m.loss.kl = kl_mean.mean;
    m.loss.mse = sum.mse * inv;
    m.loss.elbo = -(m.loss.re + m.loss.kl);
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(m);
    if (on_epoch) on_epoch(model, m);
  }
  return history;
}

}  // namespace dvae
