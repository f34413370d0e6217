#include <tuple>
#include "dvae/manifolds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dvae/errors.hpp"

namespace dvae {

namespace {

constexpr double kPi = std::numbers::pi;

void check_dim(const Manifold& m, const Vec& x) {
  if (x.size() != m.ambient_dim()) {
    throw ShapeMismatch("expected ambient vector of length " + std::to_string(m.ambient_dim()) +
                        ", got " + std::to_string(x.size()));
  }
}

// Radial projection onto the unit sphere in the span of x's coordinates.
Vec normalize_or_throw(const Vec& x) {
  const double n = x.norm();
  if (!(n >= kSingularThreshold)) throw SingularProjection("projection at the origin is undefined");
  return x / n;
}

Mat radial_jacobian(const Vec& x) {
  const double n = x.norm();
  if (!(n >= kSingularThreshold)) throw SingularProjection("projection at the origin is undefined");
  const Vec u = x / n;
  return (Mat::Identity(x.size(), x.size()) - u * u.transpose()) / n;
}

struct TubeFrame {
  double rho;          // distance from the revolution axis
  Eigen::Vector3d c;   // nearest point on the core circle
  Eigen::Vector3d w;   // x - c
  double wn;           // |x - c|
};

TubeFrame tube_frame(const Manifold& m, const Vec& x) {
  TubeFrame f;
  f.rho = std::hypot(x[0], x[1]);
  if (!(f.rho >= kSingularThreshold)) {
    throw SingularProjection("embedded torus projection undefined on the revolution axis");
  }
  const double big = m.major_radius();
  f.c = Eigen::Vector3d(big * x[0] / f.rho, big * x[1] / f.rho, 0.0);
  f.w = Eigen::Vector3d(x[0], x[1], x[2]) - f.c;
  f.wn = f.w.norm();
  if (!(f.wn >= kSingularThreshold)) {
    throw SingularProjection("embedded torus projection undefined on the core circle");
  }
  return f;
}

double sphere_volume(int d) {
  const double h = 0.5 * (d + 1);
  return 2.0 * std::pow(kPi, h) / std::tgamma(h);
}

// Unsigned angular separation, symmetric in its arguments.
double circle_gap(double a, double b) {
  const double g = std::fmod(std::abs(a - b), 2.0 * kPi);
  return std::min(g, 2.0 * kPi - g);
}

double sphere_arc(const Vec& z, const Vec& y) {
  return std::acos(std::clamp(z.dot(y), -1.0, 1.0));
}

void require_on(const Manifold& m, const Vec& z, const char* what) {
  if (!contains(m, z, 1e-6)) throw DomainError(std::string(what) + ": point is not on " + m.name());
}

}  // namespace

Manifold Manifold::sphere(int d) {
  if (d < 1 || d > 3) throw DomainError("sphere dimension must be 1, 2 or 3");
  return Manifold(ManifoldKind::Sphere, d, d + 1);
}

Manifold Manifold::flat_torus() { return Manifold(ManifoldKind::FlatTorus, 2, 4); }

Manifold Manifold::embedded_torus(double major_radius, double minor_radius) {
  if (!(minor_radius > 0.0 && major_radius > minor_radius)) {
    throw DomainError("embedded torus needs R > r > 0");
  }
  return Manifold(ManifoldKind::EmbeddedTorus, 2, 3, major_radius, minor_radius);
}

Manifold Manifold::projective(int d) {
  if (d < 2 || d > 3) throw DomainError("projective space dimension must be 2 or 3");
  return Manifold(ManifoldKind::ProjectiveSphere, d, d + 1);
}

Manifold Manifold::euclidean(int d) {
  if (d < 2 || d > 3) throw DomainError("euclidean latent dimension must be 2 or 3");
  return Manifold(ManifoldKind::Euclidean, d, d);
}

Manifold Manifold::parse(const std::string& name) {
  if (name == "circle" || name == "sphere1") return sphere(1);
  if (name == "sphere2") return sphere(2);
  if (name == "sphere3") return sphere(3);
  if (name == "flat-torus") return flat_torus();
  if (name == "embedded-torus") return embedded_torus();
  if (name == "rp2") return projective(2);
  if (name == "rp3") return projective(3);
  if (name == "r2") return euclidean(2);
  if (name == "r3") return euclidean(3);
  throw ConfigError("unknown manifold '" + name + "'");
}

std::string Manifold::name() const {
  switch (kind_) {
    case ManifoldKind::Sphere:
      return dim_ == 1 ? "circle" : "sphere" + std::to_string(dim_);
    case ManifoldKind::FlatTorus:
      return "flat-torus";
    case ManifoldKind::EmbeddedTorus:
      return "embedded-torus";
    case ManifoldKind::ProjectiveSphere:
      return "rp" + std::to_string(dim_);
    case ManifoldKind::Euclidean:
      return "r" + std::to_string(dim_);
  }
  return "unknown";
}

double wrap_angle(double a) {
  double w = std::fmod(a + kPi, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  return w - kPi;
}

Vec project(const Manifold& m, const Vec& x) {
  check_dim(m, x);
  switch (m.kind()) {
    case ManifoldKind::Sphere:
    case ManifoldKind::ProjectiveSphere:
      return normalize_or_throw(x);
    case ManifoldKind::FlatTorus: {
      Vec out(4);
      out.head<2>() = normalize_or_throw(x.head<2>());
      out.tail<2>() = normalize_or_throw(x.tail<2>());
      return out;
    }
    case ManifoldKind::EmbeddedTorus: {
      const TubeFrame f = tube_frame(m, x);
      return f.c + m.minor_radius() * f.w / f.wn;
    }
    case ManifoldKind::Euclidean:
      return x;
  }
  return x;
}

Mat project_jacobian(const Manifold& m, const Vec& x) {
  check_dim(m, x);
  switch (m.kind()) {
    case ManifoldKind::Sphere:
    case ManifoldKind::ProjectiveSphere:
      return radial_jacobian(x);
    case ManifoldKind::FlatTorus: {
      Mat j = Mat::Zero(4, 4);
      j.topLeftCorner<2, 2>() = radial_jacobian(x.head<2>());
      j.bottomRightCorner<2, 2>() = radial_jacobian(x.tail<2>());
      return j;
    }
    case ManifoldKind::EmbeddedTorus: {
      // P = c + r w/|w| with c = R (x1, x2, 0)/rho and w = x - c.
      const TubeFrame f = tube_frame(m, x);
      const Eigen::Vector2d u(x[0] / f.rho, x[1] / f.rho);
      Eigen::Matrix3d dc = Eigen::Matrix3d::Zero();
      dc.topLeftCorner<2, 2>() =
          m.major_radius() * (Eigen::Matrix2d::Identity() - u * u.transpose()) / f.rho;
      const Eigen::Vector3d wh = f.w / f.wn;
      const Eigen::Matrix3d dnormal = (Eigen::Matrix3d::Identity() - wh * wh.transpose()) / f.wn;
      const Eigen::Matrix3d j = dc + m.minor_radius() * dnormal * (Eigen::Matrix3d::Identity() - dc);
      return j;
    }
    case ManifoldKind::Euclidean:
      return Mat::Identity(x.size(), x.size());
  }
  return Mat::Identity(x.size(), x.size());
}

bool contains(const Manifold& m, const Vec& x, double tol) {
  if (x.size() != m.ambient_dim() || !x.allFinite()) return false;
  switch (m.kind()) {
    case ManifoldKind::Sphere:
    case ManifoldKind::ProjectiveSphere:
      return std::abs(x.norm() - 1.0) <= tol;
    case ManifoldKind::FlatTorus:
      return std::abs(x.head<2>().norm() - 1.0) <= tol && std::abs(x.tail<2>().norm() - 1.0) <= tol;
    case ManifoldKind::EmbeddedTorus: {
      const double rho = std::hypot(x[0], x[1]);
      return std::abs(std::hypot(rho - m.major_radius(), x[2]) - m.minor_radius()) <= tol;
    }
    case ManifoldKind::Euclidean:
      return true;
  }
  return false;
}

Eigen::Vector2d torus_angles(const Manifold& m, const Vec& z) {
  check_dim(m, z);
  if (m.kind() == ManifoldKind::FlatTorus) {
    return {std::atan2(z[1], z[0]), std::atan2(z[3], z[2])};
  }
  if (m.kind() == ManifoldKind::EmbeddedTorus) {
    const double rho = std::hypot(z[0], z[1]);
    return {std::atan2(z[2], rho - m.major_radius()), std::atan2(z[1], z[0])};
  }
  throw UnsupportedManifold("torus angles requested on " + m.name());
}

Vec torus_point(const Manifold& m, double first, double second) {
  if (m.kind() == ManifoldKind::FlatTorus) {
    Vec z(4);
    z << std::cos(first), std::sin(first), std::cos(second), std::sin(second);
    return z;
  }
  if (m.kind() == ManifoldKind::EmbeddedTorus) {
    const double ring = m.major_radius() + m.minor_radius() * std::cos(first);
    Vec z(3);
    z << ring * std::cos(second), ring * std::sin(second), m.minor_radius() * std::sin(first);
    return z;
  }
  throw UnsupportedManifold("torus point requested on " + m.name());
}

double geodesic_distance(const Manifold& m, const Vec& z, const Vec& y) {
  require_on(m, z, "geodesic_distance");
  require_on(m, y, "geodesic_distance");
  switch (m.kind()) {
    case ManifoldKind::Sphere:
      return sphere_arc(z, y);
    case ManifoldKind::ProjectiveSphere: {
      const double arc = sphere_arc(z, y);
      return std::min(arc, kPi - arc);
    }
    case ManifoldKind::FlatTorus: {
      const Eigen::Vector2d a = torus_angles(m, z);
      const Eigen::Vector2d b = torus_angles(m, y);
      return std::hypot(circle_gap(a[0], b[0]), circle_gap(a[1], b[1]));
    }
    case ManifoldKind::EmbeddedTorus: {
      Eigen::Vector2d a = torus_angles(m, z);
      Eigen::Vector2d b = torus_angles(m, y);
      // canonical order keeps the midpoint rule exactly symmetric
      if (std::tie(a[0], a[1]) > std::tie(b[0], b[1])) std::swap(a, b);
      const double dpol = wrap_angle(b[0] - a[0]);
      const double dtor = wrap_angle(b[1] - a[1]);
      const double mid = a[0] + 0.5 * dpol;
      const double ring = m.major_radius() + m.minor_radius() * std::cos(mid);
      return std::hypot(m.minor_radius() * dpol, ring * dtor);
    }
    case ManifoldKind::Euclidean:
      return (z - y).norm();
  }
  return 0.0;
}

Vec uniform_sample(const Manifold& m, Rng& rng) {
  switch (m.kind()) {
    case ManifoldKind::Sphere:
    case ManifoldKind::ProjectiveSphere:
      for (;;) {
        const Vec g = rng.normal_vector(m.ambient_dim());
        if (g.norm() >= kSingularThreshold) return g / g.norm();
      }
    case ManifoldKind::FlatTorus: {
      const double u = 2.0 * kPi * rng.uniform() - kPi;
      const double v = 2.0 * kPi * rng.uniform() - kPi;
      return torus_point(m, u, v);
    }
    case ManifoldKind::EmbeddedTorus: {
      // Area element is r (R + r cos a) da db: accept a with probability (R + r cos a)/(R + r).
      const double big = m.major_radius();
      const double small = m.minor_radius();
      double a = 0.0;
      for (;;) {
        a = 2.0 * kPi * rng.uniform() - kPi;
        if (rng.uniform() * (big + small) <= big + small * std::cos(a)) break;
      }
      const double b = 2.0 * kPi * rng.uniform() - kPi;
      return torus_point(m, a, b);
    }
    case ManifoldKind::Euclidean:
      return rng.normal_vector(m.ambient_dim());
  }
  return {};
}

double volume(const Manifold& m) {
  switch (m.kind()) {
    case ManifoldKind::Sphere:
      return sphere_volume(m.intrinsic_dim());
    case ManifoldKind::ProjectiveSphere:
      return 0.5 * sphere_volume(m.intrinsic_dim());
    case ManifoldKind::FlatTorus:
      return 4.0 * kPi * kPi;
    case ManifoldKind::EmbeddedTorus:
      return 4.0 * kPi * kPi * m.major_radius() * m.minor_radius();
    case ManifoldKind::Euclidean:
      throw DomainError("R^d has infinite volume");
  }
  return 0.0;
}

double scalar_curvature(const Manifold& m, const Vec& z) {
  require_on(m, z, "scalar_curvature");
  const int d = m.intrinsic_dim();
  switch (m.kind()) {
    case ManifoldKind::Sphere:
    case ManifoldKind::ProjectiveSphere:
      return static_cast<double>(d * (d - 1));
    case ManifoldKind::FlatTorus:
    case ManifoldKind::Euclidean:
      return 0.0;
    case ManifoldKind::EmbeddedTorus: {
      const double a = torus_angles(m, z)[0];
      const double small = m.minor_radius();
      return 2.0 * std::cos(a) / (small * (m.major_radius() + small * std::cos(a)));
    }
  }
  return 0.0;
}

Vec scalar_curvature_gradient(const Manifold& m, const Vec& z) {
  check_dim(m, z);
  Vec g = Vec::Zero(m.ambient_dim());
  if (m.kind() != ManifoldKind::EmbeddedTorus) return g;
  // The poloidal angle is constant along normal lines, so Sc(P(x)) depends on x only
  // through a = atan2(x3, rho - R).
  const double big = m.major_radius();
  const double small = m.minor_radius();
  const double rho = std::hypot(z[0], z[1]);
  if (!(rho >= kSingularThreshold)) throw SingularProjection("curvature gradient on the axis");
  const double p = rho - big;
  const double q2 = p * p + z[2] * z[2];
  if (!(q2 >= kSingularThreshold * kSingularThreshold)) {
    throw SingularProjection("curvature gradient on the core circle");
  }
  const double a = std::atan2(z[2], p);
  const double ring = big + small * std::cos(a);
  const double dsc_da = -2.0 * big * std::sin(a) / (small * ring * ring);
  const double da_drho = -z[2] / q2;
  g[0] = dsc_da * da_drho * z[0] / rho;
  g[1] = dsc_da * da_drho * z[1] / rho;
  g[2] = dsc_da * p / q2;
  return g;
}

}  // namespace dvae
