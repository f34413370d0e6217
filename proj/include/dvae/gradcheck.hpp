#pragma once

#include <cstdint>
#include <string>

#include "dvae/manifolds.hpp"
#include "dvae/model.hpp"

namespace dvae {

struct GradCheckResult {
  std::string manifold;
  std::size_t parameters = 0;
  double rel_error = 0.0;  // |analytic - fd| / |fd| over the full parameter vector
  double worst_entry = 0.0;
  bool passed = false;
};

struct GradCheckConfig {
  int hidden = 8;
  int data_dim = 16;
  int batch = 4;
  double step = 1e-6;
  double tolerance = 1e-4;
  Likelihood likelihood = Likelihood::Gaussian;
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 1;
};

/// Central differences of the frozen-noise negative ELBO against the pathwise gradient,
/// on a freshly initialised tiny model with random data in [0, 1].
GradCheckResult gradient_check(const Manifold& m, const GradCheckConfig& cfg = {});

}  // namespace dvae
