#pragma once

#include <string>

#include <Eigen/Core>

#include "dvae/rng.hpp"

namespace dvae {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ManifoldKind { Sphere, FlatTorus, EmbeddedTorus, ProjectiveSphere, Euclidean };

/// A closed submanifold of Euclidean space (or R^d for the Gaussian baseline).
///
/// Points are always carried in ambient coordinates. Spheres have radius 1.
/// The flat torus is the product of two unit circles in R^4, coordinates
/// (cos u, sin u, cos v, sin v). The embedded torus revolves around the third
/// axis: x = ((R + r cos a) cos b, (R + r cos a) sin b, r sin a), with poloidal
/// angle a and toroidal angle b. Projective spaces live on the unit sphere;
/// antipodal identification is handled by the even decoder and the symmetrized
/// kernel, never by canonicalizing coordinates.
class Manifold {
 public:
  static Manifold sphere(int d);
  static Manifold flat_torus();
  static Manifold embedded_torus(double major_radius = 1.0, double minor_radius = 0.5);
  static Manifold projective(int d);
  static Manifold euclidean(int d);

  /// Parses the names produced by name(): "circle", "sphere2", "sphere3",
  /// "flat-torus", "embedded-torus", "rp2", "rp3", "r2", "r3".
  static Manifold parse(const std::string& name);

  ManifoldKind kind() const { return kind_; }
  int intrinsic_dim() const { return dim_; }
  int ambient_dim() const { return ambient_; }
  double major_radius() const { return major_; }
  double minor_radius() const { return minor_; }
  bool is_closed() const { return kind_ != ManifoldKind::Euclidean; }
  std::string name() const;

  friend bool operator==(const Manifold&, const Manifold&) = default;

 private:
  Manifold(ManifoldKind kind, int dim, int ambient, double major = 0.0, double minor = 0.0)
      : kind_(kind), dim_(dim), ambient_(ambient), major_(major), minor_(minor) {}

  ManifoldKind kind_;
  int dim_;
  int ambient_;
  double major_;
  double minor_;
};

/// Norm below which the closest-point map is treated as singular.
inline constexpr double kSingularThreshold = 1e-9;

/// Closest point on m. Throws SingularProjection near the singular set.
Vec project(const Manifold& m, const Vec& x);

/// dP/dx at x, an n-by-n matrix. Same singular set as project().
Mat project_jacobian(const Manifold& m, const Vec& x);

bool contains(const Manifold& m, const Vec& x, double tol);

/// Geodesic distance. Exact on spheres, flat torus, projective spaces and R^d.
/// On the embedded torus this is the local-metric approximation
/// sqrt(r^2 da^2 + (R + r cos a_mid)^2 db^2), only meaningful for nearby points.
double geodesic_distance(const Manifold& m, const Vec& z, const Vec& y);

/// Sample from the normalized volume measure (standard Gaussian for R^d).
Vec uniform_sample(const Manifold& m, Rng& rng);

double volume(const Manifold& m);
double scalar_curvature(const Manifold& m, const Vec& z);

/// Ambient gradient of scalar_curvature along the closest-point map,
/// i.e. d/dx Sc(P(x)) evaluated at x = z. Zero except on the embedded torus.
Vec scalar_curvature_gradient(const Manifold& m, const Vec& z);

/// Torus angles: (u, v) for the flat torus, (poloidal, toroidal) for the embedded torus.
Eigen::Vector2d torus_angles(const Manifold& m, const Vec& z);
Vec torus_point(const Manifold& m, double first, double second);

/// Wraps an angle into [-pi, pi).
double wrap_angle(double a);

}  // namespace dvae
