#include "dvae/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "dvae/errors.hpp"

namespace dvae {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLog2Pi = 1.8378770664093454836;

// Above this time the circle kernel is summed in Fourier form instead of images.
constexpr double kCircleFourierSwitch = 2.0;
// Above this time S^2 densities come from the eigen-series instead of the parametrix.
constexpr double kSphereSpectralSwitch = 0.05;
// Points this close to the cut locus are pulled back; the parametrix is singular at pi.
constexpr double kCutLocusMargin = 1e-6;

double log_sum_exp(const std::vector<double>& v) {
  const double top = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

int image_count(double time) {
  // exp(-(2 pi k - pi)^2 / (2t)) < 1e-18 beyond this k.
  const double reach = std::sqrt(2.0 * time * 41.5);
  return static_cast<int>(std::ceil((reach + kPi) / (2.0 * kPi))) + 1;
}

double circle_log_kernel(double time, double delta, int max_images) {
  delta = wrap_angle(delta);
  if (time > kCircleFourierSwitch) return std::log(circle_kernel(time, delta, max_images));
  const int k_max = std::min(image_count(time), max_images);
  std::vector<double> terms;
  terms.reserve(2 * k_max + 1);
  for (int k = -k_max; k <= k_max; ++k) {
    const double a = delta + 2.0 * kPi * k;
    terms.push_back(-a * a / (2.0 * time));
  }
  return log_sum_exp(terms) - 0.5 * (kLog2Pi + std::log(time));
}

// (3 - d + (d-1) r^2 + (d-3) r cot r) / r^2, with its Taylor series near r = 0.
double parametrix_bracket_over_r2(int d, double r) {
  if (r < 1e-3) {
    const double r2 = r * r;
    return (d - 1) - (d - 3) / 3.0 - (d - 3) * r2 / 45.0 - 2.0 * (d - 3) * r2 * r2 / 945.0;
  }
  return (3.0 - d + (d - 1) * r * r + (d - 3) * r / std::tan(r)) / (r * r);
}

// log(r / sin r) with its series near 0.
double log_r_over_sin(double r) {
  if (r < 1e-4) return r * r / 6.0;
  return std::log(r / std::sin(r));
}

double sphere_parametrix_log_kernel(int d, double time, double radius) {
  const double r = std::clamp(radius, 0.0, kPi - kCutLocusMargin);
  const double sc = static_cast<double>(d * (d - 1));
  const double correction = 1.0 + sc * time / (8.0 * d) * parametrix_bracket_over_r2(d, r);
  return -0.5 * d * (kLog2Pi + std::log(time)) - r * r / (2.0 * time) +
         0.5 * (d - 1) * log_r_over_sin(r) + std::log(correction);
}

double sphere_log_kernel(int d, double time, double radius, const KernelSeriesConfig& cfg) {
  if (d == 1) return circle_log_kernel(time, radius, cfg.wrap_terms);
  if (d == 2 && time >= kSphereSpectralSwitch) {
    return std::log(sphere2_spectral_kernel(time, radius, cfg.spectral_terms));
  }
  return sphere_parametrix_log_kernel(d, time, radius);
}

void check_time(double time, const KernelSeriesConfig& cfg) {
  if (!(time >= cfg.t_min && time <= cfg.t_max)) {
    throw DomainError("diffusion time " + std::to_string(time) + " outside [" +
                      std::to_string(cfg.t_min) + ", " + std::to_string(cfg.t_max) + "]");
  }
}

void check_on(const Manifold& m, const Vec& z) {
  if (!contains(m, z, 1e-6)) throw DomainError("point is not on " + m.name());
}

// Composite Simpson on [0, pi] of f(r) sin r, times the S^1 circumference 2 pi.
template <typename F>
double sphere2_radial_integral(F f, int intervals) {
  const int n = intervals + (intervals % 2);
  const double h = kPi / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double r = i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * f(r) * std::sin(r);
  }
  return 2.0 * kPi * s * h / 3.0;
}

std::vector<double> circle_grid_values(double time, const KernelSeriesConfig& cfg) {
  const int n = cfg.circle_grid;
  std::vector<double> q(n);
  for (int i = 0; i < n; ++i) q[i] = circle_kernel(time, -kPi + 2.0 * kPi * i / n, cfg.wrap_terms);
  return q;
}

double xlogx(double q) { return q > 0.0 ? q * std::log(q) : 0.0; }

}  // namespace

double KernelSeriesConfig::tail_bound() const {
  // Wrapped Gaussian: first omitted image at the largest time.
  const double a = 2.0 * kPi * (wrap_terms + 1) - kPi;
  const double image_tail = 2.0 * std::exp(-a * a / (2.0 * t_max)) / std::sqrt(2.0 * kPi * t_max);
  // Legendre series: first omitted term at the smallest time, |P_l| <= 1.
  const double l = spectral_terms + 1.0;
  const double spectral_tail = (2.0 * l + 1.0) / (4.0 * kPi) * std::exp(-l * (l + 1.0) * t_min / 2.0) /
                               (1.0 - std::exp(-l * t_min));
  return std::max(image_tail, spectral_tail);
}

void KernelSeriesConfig::validate() const {
  if (wrap_terms < 1 || spectral_terms < 1 || circle_grid < 8 || sphere_grid < 8) {
    throw DomainError("kernel series config has non-positive sizes");
  }
  if (!(t_min > 0.0 && t_max > t_min)) throw DomainError("kernel series config needs 0 < t_min < t_max");
  if (tail_bound() > 1e-12) throw DomainError("kernel series truncation tail exceeds 1e-12");
}

Vec random_walk(const Manifold& m, const Vec& center, double time, const Mat& noise) {
  if (noise.rows() != m.ambient_dim() || noise.cols() < 1) throw ShapeMismatch("walk noise shape");
  const double scale = std::sqrt(time / static_cast<double>(noise.cols()));
  Vec y = center;
  for (Eigen::Index k = 0; k < noise.cols(); ++k) y = project(m, y + scale * noise.col(k));
  return y;
}

WalkResult random_walk_with_jacobians(const Manifold& m, const Vec& center, double time,
                                      const Mat& noise) {
  if (noise.rows() != m.ambient_dim() || noise.cols() < 1) throw ShapeMismatch("walk noise shape");
  const double steps = static_cast<double>(noise.cols());
  const double scale = std::sqrt(time / steps);
  const double dscale_dt = time > 0.0 ? 0.5 / std::sqrt(time * steps) : 0.0;
  const Eigen::Index n = m.ambient_dim();
  WalkResult out{center, Mat::Identity(n, n), Vec::Zero(n)};
  for (Eigen::Index k = 0; k < noise.cols(); ++k) {
    const Vec x = out.point + scale * noise.col(k);
    const Mat j = project_jacobian(m, x);
    out.d_center = j * out.d_center;
    out.d_time = j * (out.d_time + dscale_dt * noise.col(k));
    out.point = project(m, x);
  }
  return out;
}

Vec random_walk_sample(const Manifold& m, const PosteriorParams& p, int steps, Rng& rng,
                       Mat* noise_out) {
  if (steps < 1) throw DomainError("random walk needs at least one step");
  const Eigen::Index n = m.ambient_dim();
  const double scale = std::sqrt(p.time / steps);
  Mat noise(n, steps);
  Vec y = p.center;
  int redraws = 0;
  for (int k = 0; k < steps; ++k) {
    for (;;) {
      const Vec eps = rng.normal_vector(n);
      try {
        y = project(m, y + scale * eps);
        noise.col(k) = eps;
        break;
      } catch (const SingularProjection&) {
        if (++redraws > kMaxResamples) throw ResampleExceeded("random walk hit the singular set too often");
      }
    }
  }
  if (noise_out) *noise_out = std::move(noise);
  return y;
}

WalkResult random_walk_sample_with_jacobians(const Manifold& m, const PosteriorParams& p,
                                             int steps, Rng& rng) {
  Mat noise;
  random_walk_sample(m, p, steps, rng, &noise);
  return random_walk_with_jacobians(m, p.center, p.time, noise);
}

double circle_kernel(double time, double delta, int max_images) {
  delta = wrap_angle(delta);
  if (time > kCircleFourierSwitch) {
    double s = 1.0;
    for (int k = 1;; ++k) {
      const double damp = std::exp(-0.5 * k * k * time);
      if (damp < 1e-18) break;
      s += 2.0 * damp * std::cos(k * delta);
    }
    return s / (2.0 * kPi);
  }
  const int k_max = std::min(image_count(time), max_images);
  double s = 0.0;
  for (int k = -k_max; k <= k_max; ++k) {
    const double a = delta + 2.0 * kPi * k;
    s += std::exp(-a * a / (2.0 * time));
  }
  return s / std::sqrt(2.0 * kPi * time);
}

double sphere2_spectral_kernel(double time, double radius, int max_terms) {
  const double x = std::cos(radius);
  double p_prev = 1.0;  // P_0
  double p_cur = x;     // P_1
  double s = 1.0;       // l = 0 term times 4 pi
  for (int l = 1; l <= max_terms; ++l) {
    const double damp = std::exp(-0.5 * l * (l + 1.0) * time);
    if ((2.0 * l + 1.0) * damp < 1e-18) break;
    s += (2.0 * l + 1.0) * damp * p_cur;
    const double p_next = ((2.0 * l + 1.0) * x * p_cur - l * p_prev) / (l + 1.0);
    p_prev = p_cur;
    p_cur = p_next;
  }
  return s / (4.0 * kPi);
}

double sphere_parametrix_kernel(int d, double time, double radius) {
  return std::exp(sphere_parametrix_log_kernel(d, time, radius));
}

double log_heat_kernel_density(const Manifold& m, double time, const Vec& z, const Vec& y,
                               const KernelSeriesConfig& cfg) {
  check_time(time, cfg);
  check_on(m, z);
  check_on(m, y);
  const int d = m.intrinsic_dim();
  switch (m.kind()) {
    case ManifoldKind::Sphere:
      return sphere_log_kernel(d, time, geodesic_distance(m, z, y), cfg);
    case ManifoldKind::ProjectiveSphere: {
      // |z.y| makes the value exactly even in y
      const double arc = std::acos(std::min(std::abs(z.dot(y)), 1.0));
      return log_sum_exp({sphere_log_kernel(d, time, arc, cfg), sphere_log_kernel(d, time, kPi - arc, cfg)});
    }
    case ManifoldKind::FlatTorus: {
      const Eigen::Vector2d a = torus_angles(m, z);
      const Eigen::Vector2d b = torus_angles(m, y);
      return circle_log_kernel(time, b[0] - a[0], cfg.wrap_terms) +
             circle_log_kernel(time, b[1] - a[1], cfg.wrap_terms);
    }
    case ManifoldKind::EmbeddedTorus: {
      const double r = geodesic_distance(m, z, y);
      return -(kLog2Pi + std::log(time)) - r * r / (2.0 * time);
    }
    case ManifoldKind::Euclidean:
      return -0.5 * d * (kLog2Pi + std::log(time)) - (z - y).squaredNorm() / (2.0 * time);
  }
  return -std::numeric_limits<double>::infinity();
}

double heat_kernel_density(const Manifold& m, double time, const Vec& z, const Vec& y,
                           const KernelSeriesConfig& cfg) {
  check_time(time, cfg);
  if (m.kind() == ManifoldKind::Sphere && m.intrinsic_dim() == 1) {
    check_on(m, z);
    check_on(m, y);
    return circle_kernel(time, geodesic_distance(m, z, y), cfg.wrap_terms);
  }
  if (m.kind() == ManifoldKind::Sphere && m.intrinsic_dim() == 2 && time >= kSphereSpectralSwitch) {
    check_on(m, z);
    check_on(m, y);
    return sphere2_spectral_kernel(time, geodesic_distance(m, z, y), cfg.spectral_terms);
  }
  // Underflow shows up as exactly 0.
  return std::exp(log_heat_kernel_density(m, time, z, y, cfg));
}

double kl_asymptotic(const Manifold& m, double time, double scalar_curvature) {
  if (!m.is_closed()) throw DomainError("asymptotic KL needs a closed manifold; use kl_gaussian");
  if (!(time > 0.0)) throw DomainError("diffusion time must be positive");
  const double d = m.intrinsic_dim();
  return -0.5 * d * (kLog2Pi + std::log(time)) - 0.5 * d + std::log(volume(m)) +
         0.25 * scalar_curvature * time;
}

double kl_asymptotic(const Manifold& m, const PosteriorParams& p) {
  if (!m.is_closed()) throw DomainError("asymptotic KL needs a closed manifold; use kl_gaussian");
  return kl_asymptotic(m, p.time, scalar_curvature(m, p.center));
}

double kl_numeric(const Manifold& m, const PosteriorParams& p, const KernelSeriesConfig& cfg) {
  check_time(p.time, cfg);
  check_on(m, p.center);
  // The kernel only depends on the displacement from the center, so the center drops out.
  if (m.kind() == ManifoldKind::Sphere && m.intrinsic_dim() == 1) {
    const auto q = circle_grid_values(p.time, cfg);
    double s = 0.0;
    for (double v : q) s += xlogx(v);
    return s * 2.0 * kPi / cfg.circle_grid + std::log(volume(m));
  }
  if (m.kind() == ManifoldKind::FlatTorus) {
    const auto q = circle_grid_values(p.time, cfg);
    const double h = 2.0 * kPi / cfg.circle_grid;
    // q(u, v) = q1(u) q1(v), so the double sum of q log q splits into 2 (sum q1)(sum q1 log q1).
    double mass = 0.0, ent = 0.0;
    for (double a : q) {
      mass += a;
      ent += xlogx(a);
    }
    return 2.0 * mass * ent * h * h + std::log(volume(m));
  }
  if (m.kind() == ManifoldKind::Sphere && m.intrinsic_dim() == 2) {
    const double entropy = sphere2_radial_integral(
        [&](double r) { return xlogx(sphere2_spectral_kernel(p.time, r, cfg.spectral_terms)); },
        cfg.sphere_grid);
    return entropy + std::log(volume(m));
  }
  throw UnsupportedManifold("numeric KL is only available on circle, sphere2 and flat-torus");
}

double kernel_mass(const Manifold& m, double time, const KernelSeriesConfig& cfg) {
  check_time(time, cfg);
  if (m.kind() == ManifoldKind::Sphere && m.intrinsic_dim() == 1) {
    double s = 0.0;
    for (double v : circle_grid_values(time, cfg)) s += v;
    return s * 2.0 * kPi / cfg.circle_grid;
  }
  if (m.kind() == ManifoldKind::FlatTorus) {
    double s = 0.0;
    for (double v : circle_grid_values(time, cfg)) s += v;
    const double line = s * 2.0 * kPi / cfg.circle_grid;
    return line * line;
  }
  if (m.kind() == ManifoldKind::Sphere && m.intrinsic_dim() == 2) {
    Vec pole(3);
    pole << 0.0, 0.0, 1.0;
    return sphere2_radial_integral(
        [&](double r) {
          Vec y(3);
          y << std::sin(r), 0.0, std::cos(r);
          return heat_kernel_density(m, time, pole, y, cfg);
        },
        cfg.sphere_grid);
  }
  throw UnsupportedManifold("kernel mass quadrature is only available on circle, sphere2 and flat-torus");
}

double kl_gaussian(const Vec& mean, const Vec& var) {
  if (mean.size() != var.size()) throw ShapeMismatch("kl_gaussian mean/var length differ");
  double s = 0.0;
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    if (!(var[i] > 0.0)) throw DomainError("kl_gaussian needs positive variances");
    s += var[i] + mean[i] * mean[i] - 1.0 - std::log(var[i]);
  }
  return 0.5 * s;
}

double log_gaussian_diag(const Vec& x, const Vec& mean, const Vec& var) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(var[i] > 0.0)) throw DomainError("Gaussian density needs positive variances");
    const double r = x[i] - mean[i];
    s += -0.5 * (kLog2Pi + std::log(var[i])) - 0.5 * r * r / var[i];
  }
  return s;
}

double prior_log_density(const Manifold& m, const Vec& y) {
  check_on(m, y);
  if (m.is_closed()) return -std::log(volume(m));
  return -0.5 * static_cast<double>(y.size()) * kLog2Pi - 0.5 * y.squaredNorm();
}

}  // namespace dvae
