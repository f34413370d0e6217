#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "dvae/diffusion.hpp"
#include "dvae/manifolds.hpp"

namespace dvae {

/// One line of a kernel-check report.
struct CheckRow {
  std::string check;
  std::string manifold;
  double time = 0.0;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct KernelCheckConfig {
  double time = 0.25;
  int steps = 16;
  int samples = 100000;
  int bins = 100;
  std::uint64_t seed = 1;
};

/// Binned total variation between walk endpoints and the exact kernel, started at a
/// fixed point. Circle: angle histogram. Flat torus: first-angle marginal, which is
/// itself a circle walk. S^2: geodesic-radius histogram against 2 pi sin r p_t(r).
double walk_total_variation(const Manifold& m, double time, int steps, int samples, int bins,
                            std::uint64_t seed);

/// Largest |d/dt p - 1/2 Laplacian p| over a few sample displacements, by finite differences,
/// in units of p_t(0) / t (the size of either side near the peak).
double heat_equation_residual(const Manifold& m, double time);

/// Largest |int p_s(x - w) p_t(w) dw - p_{s+t}(x)| on the circle.
double chapman_kolmogorov_residual(double s, double t);

/// Largest relative asymmetry |p(z, y) - p(y, z)| / max(1, p) over random pairs.
double kernel_asymmetry(const Manifold& m, double time, int pairs, std::uint64_t seed);

/// Sampler, KL, normalization, symmetry and PDE checks for circle, sphere2 or flat-torus.
std::vector<CheckRow> kernel_check(const Manifold& m, const KernelCheckConfig& cfg);

/// CSV with header check,manifold,t,value,tolerance,pass.
void write_check_report(const std::vector<CheckRow>& rows, std::ostream& out);

}  // namespace dvae
