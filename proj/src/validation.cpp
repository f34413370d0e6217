#include "dvae/validation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dvae/errors.hpp"

namespace dvae {
namespace {

constexpr double kPi = std::numbers::pi;

Vec sphere_point(double colat, double lon) {
  Vec p(3);
  p << std::sin(colat) * std::cos(lon), std::sin(colat) * std::sin(lon), std::cos(colat);
  return p;
}

bool supported(const Manifold& m) {
  return m == Manifold::sphere(1) || m == Manifold::sphere(2) || m == Manifold::flat_torus();
}

// Simpson integral of f over [a, b] with an even number of intervals.
template <typename F>
double simpson(F f, double a, double b, int intervals) {
  const double h = (b - a) / intervals;
  double s = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + h * i);
  return s * h / 3.0;
}

KernelSeriesConfig series_for(double time) {
  KernelSeriesConfig cfg;
  cfg.t_max = std::max(cfg.t_max, 2.0 * time);
  cfg.t_min = std::min(cfg.t_min, 0.5 * time);
  return cfg;
}

}  // namespace

double walk_total_variation(const Manifold& m, double time, int steps, int samples, int bins,
                            std::uint64_t seed) {
  if (!supported(m)) throw UnsupportedManifold("walk_total_variation: " + m.name());
  if (samples < 1 || bins < 1) throw ConfigError("walk_total_variation needs samples and bins");
  const bool radial = m.kind() == ManifoldKind::Sphere && m.intrinsic_dim() == 2;
  const double lo = radial ? 0.0 : -kPi;
  const double width = (radial ? kPi : 2.0 * kPi) / bins;
  Vec start = Vec::Unit(2, 0);
  if (radial) start = sphere_point(0.0, 0.0);
  if (m.kind() == ManifoldKind::FlatTorus) start = torus_point(m, 0.0, 0.0);

  std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
  Rng rng(seed);
  const PosteriorParams p{start, time};
  for (int k = 0; k < samples; ++k) {
    const Vec y = random_walk_sample(m, p, steps, rng);
    const double x = radial ? std::acos(std::clamp(y[2], -1.0, 1.0)) : std::atan2(y[1], y[0]);
    const int b = std::clamp(static_cast<int>((x - lo) / width), 0, bins - 1);
    hist[static_cast<std::size_t>(b)] += 1.0 / samples;
  }

  const KernelSeriesConfig cfg = series_for(time);
  auto density = [&](double x) {
    if (radial) {
      return 2.0 * kPi * std::sin(x) * heat_kernel_density(m, time, start, sphere_point(x, 0.0), cfg);
    }
    return circle_kernel(time, x, cfg.wrap_terms);
  };
  double tv = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double a = lo + width * b;
    tv += std::abs(hist[static_cast<std::size_t>(b)] - simpson(density, a, a + width, 40));
  }
  return 0.5 * tv;
}

double heat_equation_residual(const Manifold& m, double time) {
  if (!supported(m)) throw UnsupportedManifold("heat_equation_residual: " + m.name());
  const KernelSeriesConfig cfg = series_for(time);
  const double ht = 1e-3 * time, h = 1e-4;
  double worst = 0.0;
  if (m.kind() == ManifoldKind::FlatTorus) {
    const Vec z = torus_point(m, 0.0, 0.0);
    auto f = [&](double t, double u, double v) { return heat_kernel_density(m, t, z, torus_point(m, u, v), cfg); };
    const double scale = f(time, 0.0, 0.0) / time;
    for (auto [u, v] : {std::pair{0.0, 0.0}, std::pair{0.05, -0.1}, std::pair{0.3, 1.0}}) {
      const double dt = (f(time + ht, u, v) - f(time - ht, u, v)) / (2 * ht);
      const double c = f(time, u, v);
      const double lap = (f(time, u + h, v) - 2 * c + f(time, u - h, v) + f(time, u, v + h) - 2 * c + f(time, u, v - h)) / (h * h);
      worst = std::max(worst, std::abs(dt - 0.5 * lap));
    }
    return worst / scale;
  }
  const bool sphere2 = m.intrinsic_dim() == 2;
  auto f = [&](double t, double r) {
    return sphere2 ? heat_kernel_density(m, t, sphere_point(0.0, 0.0), sphere_point(r, 0.0), cfg)
                   : circle_kernel(t, r, cfg.wrap_terms);
  };
  const double scale = f(time, 0.0) / time;
  for (double r : {0.05, 0.1, 0.3, 1.0, 2.0}) {
    const double dt = (f(time + ht, r) - f(time - ht, r)) / (2 * ht);
    double lap = (f(time, r + h) - 2 * f(time, r) + f(time, r - h)) / (h * h);
    if (sphere2) lap += (f(time, r + h) - f(time, r - h)) / (2 * h) / std::tan(r);
    worst = std::max(worst, std::abs(dt - 0.5 * lap));
  }
  return worst / scale;
}

double chapman_kolmogorov_residual(double s, double t) {
  const int n = 4096;
  double worst = 0.0;
  for (double d : {0.0, 0.7, 2.5}) {
    double conv = 0.0;
    for (int i = 0; i < n; ++i) {
      const double w = -kPi + 2 * kPi * i / n;
      conv += circle_kernel(s, w) * circle_kernel(t, d - w);
    }
    conv *= 2 * kPi / n;
    worst = std::max(worst, std::abs(conv - circle_kernel(s + t, d)));
  }
  return worst;
}

double kernel_asymmetry(const Manifold& m, double time, int pairs, std::uint64_t seed) {
  const KernelSeriesConfig cfg = series_for(time);
  Rng rng(seed);
  double worst = 0.0;
  for (int k = 0; k < pairs; ++k) {
    const Vec z = uniform_sample(m, rng), y = uniform_sample(m, rng);
    const double a = heat_kernel_density(m, time, z, y, cfg), b = heat_kernel_density(m, time, y, z, cfg);
    worst = std::max(worst, std::abs(a - b) / std::max(1.0, a));
  }
  return worst;
}

std::vector<CheckRow> kernel_check(const Manifold& m, const KernelCheckConfig& c) {
  if (!supported(m)) throw UnsupportedManifold("kernel-check supports circle, sphere2 and flat-torus, not " + m.name());
  if (!(c.time > 0.0 && c.time <= 1.0)) throw ConfigError("kernel-check time must lie in (0, 1]");
  if (c.steps < 1 || c.samples < 1 || c.bins < 1) throw ConfigError("kernel-check needs positive steps, samples and bins");
  const std::string name = m.name();
  std::vector<CheckRow> rows;
  auto add = [&](const std::string& check, double value, double tol) {
    rows.push_back({check, name, c.time, value, tol, std::isfinite(value) && value <= tol});
  };

  add("walk_tv", walk_total_variation(m, c.time, c.steps, c.samples, c.bins, c.seed), 0.02);

  const KernelSeriesConfig cfg = series_for(c.time);
  Rng rng(c.seed);
  const Vec z = uniform_sample(m, rng);
  const double num = kl_numeric(m, {z, c.time}, cfg);
  const double asym = kl_asymptotic(m, {z, c.time});
  if (m == Manifold::sphere(2)) {
    add("kl_relative_error", std::abs(num - asym) / std::abs(num), 0.01);
  } else {
    add("kl_abs_error", std::abs(num - asym), 1e-6);
  }
  add("normalization", std::abs(kernel_mass(m, c.time, cfg) - 1.0), 1e-3);
  add("symmetry", kernel_asymmetry(m, c.time, 100, c.seed), 1e-9);
  add("heat_equation", heat_equation_residual(m, c.time), 1e-3);
  if (m == Manifold::sphere(1)) add("chapman_kolmogorov", chapman_kolmogorov_residual(0.5 * c.time, 0.5 * c.time), 1e-6);
  return rows;
}

void write_check_report(const std::vector<CheckRow>& rows, std::ostream& out) {
  out << "check,manifold,t,value,tolerance,pass\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.9g,%.9g,%.9g,%d\n", r.check.c_str(), r.manifold.c_str(), r.time, r.value,
                  r.tolerance, r.passed ? 1 : 0);
    out << buf;
  }
}

}  // namespace dvae
