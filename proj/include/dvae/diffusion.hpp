#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "dvae/manifolds.hpp"
#include "dvae/rng.hpp"

namespace dvae {

/// Encoder output on a closed manifold: center point z and diffusion time t.
struct PosteriorParams {
  Vec center;
  double time = 0.0;
};

struct TimeBounds {
  double t_min = 1e-4;
  double t_max = 4e-3;

  bool contains(double t) const { return t >= t_min && t <= t_max; }
};

struct RandomWalkConfig {
  int steps = 16;
  std::uint64_t seed = 0;
};

/// Truncation and quadrature controls for exact heat-kernel series and numeric KL.
struct KernelSeriesConfig {
  int wrap_terms = 64;         // max image count per side for the wrapped Gaussian
  int spectral_terms = 4000;   // Legendre cutoff for the S^2 eigen-series
  int circle_grid = 4096;      // trapezoid nodes on [-pi, pi)
  int sphere_grid = 20000;     // Simpson intervals on [0, pi] in geodesic radius
  double t_min = 1e-4;
  double t_max = 1.0;

  /// Largest truncation tail over [t_min, t_max] for the series this config drives.
  double tail_bound() const;
  /// Throws DomainError when tail_bound() exceeds 1e-12.
  void validate() const;
};

/// Maximum number of noise redraws per walk step before giving up.
inline constexpr int kMaxResamples = 100;

/// Walk endpoint plus its pathwise derivatives with the noise held fixed.
struct WalkResult {
  Vec point;
  Mat d_center;  // d point / d z, n-by-n, z taken as an ambient vector
  Vec d_time;    // d point / d t
};

/// Approximate Brownian motion: N projected Gaussian steps of variance t/N.
/// noise is n-by-N, one ambient step per column. Throws SingularProjection.
Vec random_walk(const Manifold& m, const Vec& center, double time, const Mat& noise);

WalkResult random_walk_with_jacobians(const Manifold& m, const Vec& center, double time,
                                      const Mat& noise);

/// Draws noise from rng, redrawing a step whenever it hits the singular set.
/// The noise actually used is written to noise_out when non-null.
Vec random_walk_sample(const Manifold& m, const PosteriorParams& p, int steps, Rng& rng,
                       Mat* noise_out = nullptr);

WalkResult random_walk_sample_with_jacobians(const Manifold& m, const PosteriorParams& p,
                                             int steps, Rng& rng);

/// Wrapped-Gaussian circle kernel for angle difference delta, at most max_images
/// images per side. Switches to the Fourier form at large t.
double circle_kernel(double time, double delta, int max_images = 64);

/// S^2 heat kernel from its Legendre eigen-series, as a function of geodesic radius.
double sphere2_spectral_kernel(double time, double radius, int max_terms = 4000);

/// Small-time parametrix for S^d including the O(t) correction, as a function of radius.
double sphere_parametrix_kernel(int d, double time, double radius);

/// Heat-kernel density of Brownian motion at time t from z, w.r.t. Riemannian volume.
/// S^2 uses the eigen-series above t = 0.05 and the parametrix below.
double heat_kernel_density(const Manifold& m, double time, const Vec& z, const Vec& y,
                           const KernelSeriesConfig& cfg = {});

/// Same as heat_kernel_density but returns the log, staying finite where the
/// density would underflow (parametrix and Gaussian cases are evaluated in log space).
double log_heat_kernel_density(const Manifold& m, double time, const Vec& z, const Vec& y,
                               const KernelSeriesConfig& cfg = {});

/// -(d/2) log(2 pi t) - d/2 + log Vol + Sc t / 4.
double kl_asymptotic(const Manifold& m, const PosteriorParams& p);
double kl_asymptotic(const Manifold& m, double time, double scalar_curvature);

/// KL(Q^{t,z} || uniform) by deterministic quadrature; circle, S^2 and flat torus only.
double kl_numeric(const Manifold& m, const PosteriorParams& p, const KernelSeriesConfig& cfg = {});

/// Integral of the heat kernel over the manifold by the same quadrature as kl_numeric.
double kernel_mass(const Manifold& m, double time, const KernelSeriesConfig& cfg = {});

/// KL(N(mean, diag(var)) || N(0, I)).
double kl_gaussian(const Vec& mean, const Vec& var);

double log_gaussian_diag(const Vec& x, const Vec& mean, const Vec& var);

/// -log Vol for closed manifolds, standard normal log density on R^d.
double prior_log_density(const Manifold& m, const Vec& y);

}  // namespace dvae
