#include "dvae/gradcheck.hpp"

#include <cmath>

namespace dvae {

GradCheckResult gradient_check(const Manifold& m, const GradCheckConfig& cfg) {
  ModelConfig mc;
  mc.manifold = m;
  mc.data_dim = cfg.data_dim;
  mc.image_height = 1;
  mc.image_width = cfg.data_dim;
  mc.hidden = cfg.hidden;
  mc.hidden_activation = cfg.activation;
  mc.likelihood = cfg.likelihood;
  mc.kl_mode = m.is_closed() ? KlMode::Asymptotic : KlMode::Gaussian;
  mc.seed = cfg.seed;
  // Wide time bounds so the time head is not saturated and its derivative is tested.
  mc.bounds = TimeBounds{1e-3, 5e-2};
  DvaeModel model(mc);

  Rng rng = Rng::stream(cfg.seed, 0x6C);
  Mat x(cfg.data_dim, cfg.batch);
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    x.data()[k] = cfg.likelihood == Likelihood::Bernoulli ? (rng.uniform() < 0.5 ? 1.0 : 0.0) : rng.uniform();
  }
  const BatchNoise noise = draw_noise(model, model.encode(x), rng);
  ModelGradients grads;
  elbo_loss_with_noise(model, x, noise, &grads);
  auto analytic = gradient_blocks(grads.encoder);
  for (auto b : gradient_blocks(grads.decoder)) analytic.push_back(b);

  auto blocks = model.parameter_blocks();
  double diff2 = 0.0, ref2 = 0.0, worst = 0.0;
  GradCheckResult res;
  res.manifold = m.name();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t k = 0; k < blocks[b].size(); ++k) {
      const double keep = blocks[b][k];
      blocks[b][k] = keep + cfg.step;
      const double up = -elbo_loss_with_noise(model, x, noise, nullptr).elbo;
      blocks[b][k] = keep - cfg.step;
      const double down = -elbo_loss_with_noise(model, x, noise, nullptr).elbo;
      blocks[b][k] = keep;
      const double fd = (up - down) / (2.0 * cfg.step);
      const double d = analytic[b][k] - fd;
      diff2 += d * d;
      ref2 += fd * fd;
      worst = std::max(worst, std::abs(d));
      ++res.parameters;
    }
  }
  res.rel_error = std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-300);
  res.worst_entry = worst;
  res.passed = res.rel_error < cfg.tolerance;
  return res;
}

}  // namespace dvae
