#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <vector>

#include "dvae/diffusion.hpp"
#include "dvae/errors.hpp"
#include "dvae/manifolds.hpp"
#include "dvae/rng.hpp"

using namespace dvae;

namespace {

constexpr double kPi = std::numbers::pi;

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Independent wrapped-Gaussian oracle: plain image sum with a generous fixed count.
double wrapped_gaussian(double t, double delta) {
  double s = 0.0;
  for (int k = -200; k <= 200; ++k) {
    const double a = delta + 2.0 * kPi * k;
    s += std::exp(-a * a / (2.0 * t));
  }
  return s / std::sqrt(2.0 * kPi * t);
}

// Binned total variation between walk samples on the circle and the exact kernel.
double circle_tv(double t, int steps, int samples, std::uint64_t seed) {
  const Manifold m = Manifold::sphere(1);
  const int bins = 100;
  std::vector<double> hist(bins, 0.0);
  Rng rng(seed);
  const PosteriorParams p{vec({1.0, 0.0}), t};
  for (int k = 0; k < samples; ++k) {
    const Vec y = random_walk_sample(m, p, steps, rng);
    const double a = std::atan2(y[1], y[0]);
    hist[std::min(bins - 1, static_cast<int>((a + kPi) / (2 * kPi) * bins))] += 1.0 / samples;
  }
  double tv = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double lo = -kPi + 2 * kPi * b / bins, w = 2 * kPi / bins;
    double mass = 0.0;
    const int sub = 40;  // Simpson
    for (int i = 0; i <= sub; ++i) {
      const double c = (i == 0 || i == sub) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      mass += c * wrapped_gaussian(t, lo + w * i / sub);
    }
    mass *= w / sub / 3.0;
    tv += std::abs(hist[b] - mass);
  }
  return 0.5 * tv;
}

KernelSeriesConfig wide_config(double t_max) {
  KernelSeriesConfig cfg;
  cfg.t_max = t_max;
  return cfg;
}

Vec sphere_point(double colat, double lon) {
  return vec({std::sin(colat) * std::cos(lon), std::sin(colat) * std::sin(lon), std::cos(colat)});
}

}  // namespace

TEST_CASE("walk returns the center for vanishing time or noise") {
  Rng rng(1);
  for (const auto& m : {Manifold::sphere(2), Manifold::flat_torus(), Manifold::embedded_torus(),
                        Manifold::projective(3)}) {
    const Vec z = uniform_sample(m, rng);
    const Vec y = random_walk_sample(m, {z, 1e-300}, 16, rng);
    CHECK((y - z).norm() <= 1e-15);
    const Mat zero = Mat::Zero(m.ambient_dim(), 16);
    const Vec y0 = random_walk(m, z, 0.3, zero);
    CHECK((y0 - z).norm() <= 1e-15);
    const WalkResult w = random_walk_with_jacobians(m, z, 0.3, zero);
    CHECK(w.d_time.norm() == 0.0);
  }
}

TEST_CASE("walk with one step and tiny time has the tangent projector as dz") {
  const Manifold m = Manifold::sphere(2);
  const Vec z = sphere_point(1.0, 0.4);
  Rng rng(2);
  const WalkResult w = random_walk_sample_with_jacobians(m, {z, 1e-8}, 1, rng);
  const Mat tangent = Mat::Identity(3, 3) - z * z.transpose();
  CHECK((w.d_center - tangent).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("walk jacobians match central differences with frozen noise") {
  Rng rng(3);
  for (const auto& m : {Manifold::sphere(1), Manifold::sphere(2), Manifold::sphere(3), Manifold::flat_torus(),
                        Manifold::embedded_torus(), Manifold::projective(2)}) {
    for (int trial = 0; trial < 20; ++trial) {
      const Vec z = uniform_sample(m, rng);
      const double t = 0.001 + 0.05 * rng.uniform();
      const int steps = 1 + static_cast<int>(rng.next() % 16);
      Mat noise(m.ambient_dim(), steps);
      for (Eigen::Index k = 0; k < noise.size(); ++k) noise.data()[k] = rng.normal();
      const WalkResult w = random_walk_with_jacobians(m, z, t, noise);
      CHECK((w.point - random_walk(m, z, t, noise)).norm() == 0.0);
      const double h = 1e-6;
      Mat fd(m.ambient_dim(), m.ambient_dim());
      for (int k = 0; k < m.ambient_dim(); ++k) {
        Vec zp = z, zm = z;
        zp[k] += h;
        zm[k] -= h;
        fd.col(k) = (random_walk(m, zp, t, noise) - random_walk(m, zm, t, noise)) / (2 * h);
      }
      const double ht = 1e-6 * t;
      const Vec fdt = (random_walk(m, z, t + ht, noise) - random_walk(m, z, t - ht, noise)) / (2 * ht);
      INFO(m.name());
      CHECK((w.d_center - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
      CHECK((w.d_time - fdt).norm() <= 1e-5 * std::max(1.0, fdt.norm()));
    }
  }
}

TEST_CASE("walk is deterministic given the seed") {
  const Manifold m = Manifold::flat_torus();
  const Vec z = torus_point(m, 0.2, -1.0);
  Rng a(42), b(42);
  for (int k = 0; k < 10; ++k) {
    CHECK(random_walk_sample(m, {z, 0.01}, 16, a) == random_walk_sample(m, {z, 0.01}, 16, b));
  }
}

TEST_CASE("sampler matches the exact circle kernel") {
  CHECK(circle_tv(0.25, 16, 100000, 7) < 0.02);
}

TEST_CASE("sampler error shrinks as the step count doubles") {
  const double tv16 = circle_tv(0.5, 16, 200000, 9);
  const double tv32 = circle_tv(0.5, 32, 200000, 9);
  const double tv64 = circle_tv(0.5, 64, 200000, 9);
  INFO(tv16, " ", tv32, " ", tv64);
  CHECK(tv32 < tv16);
  CHECK(tv64 < tv32);
}

TEST_CASE("circle kernel values") {
  const Manifold m = Manifold::sphere(1);
  const KernelSeriesConfig cfg = wide_config(100.0);
  const Vec z = vec({1, 0});
  for (double a : {-3.0, 0.0, 1.0, 2.9}) {
    const Vec y = vec({std::cos(a), std::sin(a)});
    CHECK(std::abs(heat_kernel_density(m, 100.0, z, y, cfg) - 1.0 / (2 * kPi)) <= 1e-12);
  }
  CHECK(heat_kernel_density(m, 0.01, z, z, cfg) == doctest::Approx(1.0 / std::sqrt(2 * kPi * 0.01)).epsilon(1e-12));
  CHECK(heat_kernel_density(m, 0.01, z, z, cfg) == doctest::Approx(3.98942).epsilon(1e-6));
  for (double t : {0.01, 0.3, 1.0, 3.0, 10.0}) {
    for (double d : {-3.1, -1.0, 0.0, 0.5, 2.0, 3.14}) {
      CHECK(circle_kernel(t, d) == doctest::Approx(wrapped_gaussian(t, d)).epsilon(1e-12));
    }
  }
}

TEST_CASE("S^2 parametrix agrees with the spectral series at small time") {
  // beyond r = 0.7 the kernel drops under the rounding floor of the O(1) spectral terms
  for (double r = 0.0; r <= 0.7; r += 0.05) {
    const double spectral = sphere2_spectral_kernel(0.01, r);
    const double param = sphere_parametrix_kernel(2, 0.01, r);
    INFO(r, " ", param, " ", spectral);
    CHECK(std::abs(param - spectral) <= 1e-3 * spectral);
  }
  // r -> 0 limit is continuous
  CHECK(sphere_parametrix_kernel(2, 0.01, 0.0) == doctest::Approx(sphere_parametrix_kernel(2, 0.01, 1e-7)).epsilon(1e-10));
  CHECK(sphere_parametrix_kernel(3, 0.01, 0.0) == doctest::Approx(sphere_parametrix_kernel(3, 0.01, 1e-7)).epsilon(1e-10));
}

TEST_CASE("S^3 parametrix is the exact small-time kernel") {
  // On S^3 the kernel is e^{t/2} (2 pi t)^{-3/2} sum_k (r + 2 pi k)/sin r e^{-(r+2 pi k)^2/2t};
  // the parametrix with its O(t) bracket agrees to O(t^2).
  const double t = 0.01;
  for (double r : {0.1, 0.5, 1.0}) {
    double exact = 0.0;
    for (int k = -3; k <= 3; ++k) {
      const double a = r + 2 * kPi * k;
      exact += a / std::sin(r) * std::exp(-a * a / (2 * t));
    }
    exact *= std::exp(t / 2) / std::pow(2 * kPi * t, 1.5);
    CHECK(std::abs(sphere_parametrix_kernel(3, t, r) - exact) <= 1e-3 * exact);
  }
}

TEST_CASE("projective kernel is even in y") {
  const Manifold m = Manifold::projective(2);
  const Vec z = sphere_point(0.3, 0.1);
  const Vec y = sphere_point(1.2, -0.5);
  CHECK(heat_kernel_density(m, 0.5, z, y) == heat_kernel_density(m, 0.5, z, Vec(-y)));
  const double s = heat_kernel_density(Manifold::sphere(2), 0.5, z, y);
  const double a = heat_kernel_density(Manifold::sphere(2), 0.5, z, Vec(-y));
  CHECK(heat_kernel_density(m, 0.5, z, y) == doctest::Approx(s + a).epsilon(1e-14));
}

TEST_CASE("heat kernel errors") {
  const Manifold m = Manifold::sphere(2);
  CHECK_THROWS_AS(heat_kernel_density(m, 0.1, vec({0, 0, 1}), vec({0, 0, 1.5})), DomainError);
  CHECK_THROWS_AS(heat_kernel_density(m, 5.0, vec({0, 0, 1}), vec({0, 0, 1})), DomainError);
  CHECK_THROWS_AS(heat_kernel_density(m, 1e-6, vec({0, 0, 1}), vec({0, 0, 1})), DomainError);
  CHECK(heat_kernel_density(m, 1e-3, vec({0, 0, 1}), vec({0, 0, -1})) == 0.0);
  CHECK(std::isfinite(log_heat_kernel_density(m, 1e-3, vec({0, 0, 1}), vec({0, 0, -1}))));
}

TEST_CASE("heat kernel normalizes to one") {
  for (double t : {0.01, 0.1, 1.0}) {
    for (const auto& m : {Manifold::sphere(1), Manifold::sphere(2), Manifold::flat_torus()}) {
      INFO(m.name(), " t=", t);
      CHECK(std::abs(kernel_mass(m, t) - 1.0) <= 1e-3);
    }
  }
}

TEST_CASE("heat kernel is symmetric") {
  Rng rng(5);
  for (const auto& m : {Manifold::sphere(1), Manifold::sphere(2), Manifold::flat_torus(), Manifold::projective(2)}) {
    for (int k = 0; k < 100; ++k) {
      const Vec z = uniform_sample(m, rng), y = uniform_sample(m, rng);
      const double t = 0.05 + 0.9 * rng.uniform();
      const double a = heat_kernel_density(m, t, z, y), b = heat_kernel_density(m, t, y, z);
      CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, a));
    }
  }
}

TEST_CASE("Chapman-Kolmogorov on the circle") {
  const int n = 4096;
  for (auto [s, t] : {std::pair{0.05, 0.05}, std::pair{0.1, 0.2}}) {
    for (double d : {0.0, 0.7, 2.5}) {
      double conv = 0.0;
      for (int i = 0; i < n; ++i) {
        const double w = -kPi + 2 * kPi * i / n;
        conv += circle_kernel(s, w) * circle_kernel(t, d - w);
      }
      conv *= 2 * kPi / n;
      CHECK(std::abs(conv - circle_kernel(s + t, d)) <= 1e-6);
    }
  }
}

TEST_CASE("circle kernel solves the heat equation with the 1/2 convention") {
  const double t = 0.1, ht = 1e-5, hx = 1e-4;
  for (double d : {0.0, 0.3, 1.0, 2.0, 3.0}) {
    const double dt = (circle_kernel(t + ht, d) - circle_kernel(t - ht, d)) / (2 * ht);
    const double dxx =
        (circle_kernel(t, d + hx) - 2 * circle_kernel(t, d) + circle_kernel(t, d - hx)) / (hx * hx);
    CHECK(std::abs(dt - 0.5 * dxx) <= 1e-3);
  }
}

TEST_CASE("S^2 spectral kernel solves the heat equation") {
  // Radial Laplacian on S^2: f'' + cot(r) f'.
  const double t = 0.2, ht = 1e-5, h = 1e-4;
  for (double r : {0.3, 1.0, 2.0}) {
    auto f = [&](double rr) { return sphere2_spectral_kernel(t, rr); };
    const double dt = (sphere2_spectral_kernel(t + ht, r) - sphere2_spectral_kernel(t - ht, r)) / (2 * ht);
    const double lap = (f(r + h) - 2 * f(r) + f(r - h)) / (h * h) + (f(r + h) - f(r - h)) / (2 * h) / std::tan(r);
    CHECK(std::abs(dt - 0.5 * lap) <= 1e-3);
  }
}

TEST_CASE("asymptotic KL values") {
  const Manifold t2 = Manifold::flat_torus();
  const double t = 3.766e-3;
  const double expected = -std::log(2 * kPi * t) - 1 + std::log(4 * kPi * kPi);
  CHECK(kl_asymptotic(t2, {torus_point(t2, 0, 0), t}) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(std::round(kl_asymptotic(t2, {torus_point(t2, 0, 0), t}) * 100) / 100 == 6.42);
  const double s2 = kl_asymptotic(Manifold::sphere(2), {vec({0, 0, 1}), 0.01});
  CHECK(s2 == doctest::Approx(-std::log(2 * kPi * 0.01) - 1 + std::log(4 * kPi) + 0.005).epsilon(1e-14));
  CHECK(s2 == doctest::Approx(4.303).epsilon(2e-4));
  CHECK_THROWS_AS(kl_asymptotic(Manifold::euclidean(2), {vec({0, 0}), 0.01}), DomainError);
}

TEST_CASE("asymptotic KL diverges as t -> 0 and decreases on the flat torus") {
  const Manifold m = Manifold::flat_torus();
  const Vec z = torus_point(m, 1, 2);
  double prev = kl_asymptotic(m, {z, 1e-12});
  CHECK(prev > 25.0);
  for (double t = 2e-12; t < 1.0; t *= 1.7) {
    const double k = kl_asymptotic(m, {z, t});
    CHECK(k < prev);
    prev = k;
  }
  // The curvature term vanishes at t -> 0.
  CHECK(kl_asymptotic(m, 1e-9, 2.0) - kl_asymptotic(m, 1e-9, 0.0) == doctest::Approx(5e-10).epsilon(1e-6));
}

TEST_CASE("numeric KL") {
  const KernelSeriesConfig wide = wide_config(100.0);
  CHECK(std::abs(kl_numeric(Manifold::sphere(1), {vec({1, 0}), 100.0}, wide)) <= 1e-9);
  const Manifold t2 = Manifold::flat_torus();
  const PosteriorParams pt{torus_point(t2, 0.4, 0.2), 0.01};
  CHECK(std::abs(kl_numeric(t2, pt) - kl_asymptotic(t2, pt)) < 1e-6);
  const Manifold s2 = Manifold::sphere(2);
  const PosteriorParams ps{vec({0, 0, 1}), 0.01};
  const double num = kl_numeric(s2, ps);
  CHECK(std::abs(num - kl_asymptotic(s2, ps)) <= 0.01 * std::abs(num));
  CHECK_THROWS_AS(kl_numeric(Manifold::sphere(3), {vec({0, 0, 0, 1}), 0.01}), UnsupportedManifold);
}

TEST_CASE("numeric KL is converged under grid doubling") {
  KernelSeriesConfig a, b;
  b.circle_grid = 2 * a.circle_grid;
  b.sphere_grid = 2 * a.sphere_grid;
  for (double t : {1e-3, 1e-2, 0.5}) {
    CHECK(std::abs(kl_numeric(Manifold::sphere(1), {vec({1, 0}), t}, a) -
                   kl_numeric(Manifold::sphere(1), {vec({1, 0}), t}, b)) <= 1e-6);
    CHECK(std::abs(kl_numeric(Manifold::sphere(2), {vec({0, 0, 1}), t}, a) -
                   kl_numeric(Manifold::sphere(2), {vec({0, 0, 1}), t}, b)) <= 1e-6);
  }
}

TEST_CASE("S^2 KL error shrinks faster than linearly") {
  const Manifold s2 = Manifold::sphere(2);
  const Vec z = vec({0, 0, 1});
  auto err = [&](double t) { return std::abs(kl_numeric(s2, {z, t}) - kl_asymptotic(s2, {z, t})); };
  for (double t : {0.02, 0.01, 0.004}) {
    INFO("t=", t, " err=", err(t), " err/2=", err(t / 2));
    CHECK(err(t) / err(t / 2) >= 3.0);
  }
}

TEST_CASE("Gaussian KL") {
  CHECK(kl_gaussian(Vec::Zero(3), Vec::Ones(3)) == 0.0);
  CHECK(kl_gaussian(vec({1}), vec({1})) == 0.5);
  CHECK_THROWS_AS(kl_gaussian(vec({0}), vec({0})), DomainError);

  Rng rng(31);
  const Vec mean = vec({0.7, -0.3});
  const Vec var = vec({0.4, 1.9});
  const int n = 1000000;
  double sum = 0.0, sum2 = 0.0;
  for (int k = 0; k < n; ++k) {
    Vec x(2);
    for (int i = 0; i < 2; ++i) x[i] = mean[i] + std::sqrt(var[i]) * rng.normal();
    const double r = log_gaussian_diag(x, mean, var) - log_gaussian_diag(x, Vec::Zero(2), Vec::Ones(2));
    sum += r;
    sum2 += r * r;
  }
  const double mc = sum / n;
  const double se = std::sqrt((sum2 / n - mc * mc) / n);
  CHECK(std::abs(mc - kl_gaussian(mean, var)) <= 3 * se);
}

TEST_CASE("prior log densities") {
  CHECK(prior_log_density(Manifold::sphere(2), vec({0, 0, 1})) == doctest::Approx(-2.5310242).epsilon(1e-7));
  CHECK(prior_log_density(Manifold::flat_torus(), vec({1, 0, 0, 1})) == doctest::Approx(-3.6757541).epsilon(1e-7));
  CHECK(prior_log_density(Manifold::euclidean(2), vec({0, 0})) == doctest::Approx(-std::log(2 * kPi)).epsilon(1e-14));
  CHECK_THROWS_AS(prior_log_density(Manifold::sphere(2), vec({0, 0, 2})), DomainError);
}

TEST_CASE("series configuration guards its truncation tail") {
  KernelSeriesConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.tail_bound() < 1e-12);
  cfg.wrap_terms = 0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  KernelSeriesConfig short_series;
  short_series.spectral_terms = 20;
  CHECK_THROWS_AS(short_series.validate(), DomainError);
}

TEST_CASE("resampling on the singular set") {
  // A walk that starts from a point where the first step is singular must redraw, not crash.
  const Manifold m = Manifold::sphere(1);
  Rng rng(8);
  Mat noise;
  const Vec y = random_walk_sample(m, {vec({1, 0}), 1e-3}, 4, rng, &noise);
  CHECK(noise.rows() == 2);
  CHECK(noise.cols() == 4);
  CHECK((random_walk(m, vec({1, 0}), 1e-3, noise) - y).norm() == 0.0);
}
