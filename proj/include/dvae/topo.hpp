#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dvae/data.hpp"
#include "dvae/manifolds.hpp"
#include "dvae/model.hpp"

namespace dvae {

/// Encoded translation grid. Column i * grid + j holds the latent point of shift (i, j),
/// i horizontal and j vertical.
struct LatentGrid {
  Manifold manifold = Manifold::flat_torus();
  int grid = 0;
  Mat coords;  // n x grid^2 ambient coordinates
  Vec times;   // grid^2 diffusion times (empty when not recorded)
};

LatentGrid encode_grid(const DvaeModel& model, const TranslationDataset& data);

/// Winding numbers of the two latent angles around the two shift loops:
/// [[u along horizontal, u along vertical], [v along horizontal, v along vertical]].
struct WindingMatrix {
  int a = 0;
  int b = 0;
  int c = 0;
  int d = 0;
  int degree = 0;
  bool resolved = false;
  double max_step = 0.0;       // largest wrapped step between neighbours
  double max_deviation = 0.0;  // largest distance of a loop winding from its rounded value
};

/// Flat-torus grids only (ShapeMismatch otherwise). Never throws for coarse maps;
/// resolved is false when a step exceeds pi/2 or a loop winding sits more than
/// 0.25 from an integer.
WindingMatrix torus_degree(const LatentGrid& grid);

/// Same computation from an explicit angle table, u and v each grid x grid, indexed (i, j).
WindingMatrix torus_degree(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v);

/// Ring-scheme HEALPix pixel of a unit vector, 0 <= index < 12 nside^2.
std::int64_t healpix_ring_index(int nside, const Eigen::Vector3d& p);

/// Fraction of the 12 nside^2 equal-area cells holding at least one point (3 x count).
double sphere_coverage(const Mat& points, int nside = 4);

/// Palette of the latent exports. Hue follows the horizontal shift, value darkens
/// along the vertical shift, saturation alternates on a checkerboard.
struct ShiftPalette {
  static constexpr double kValueTop = 1.0;
  static constexpr double kValueDrop = 0.5;
  static constexpr double kSaturationEven = 0.8;
  static constexpr double kSaturationOdd = 0.55;

  static std::string color(int i, int j, int grid);
};

std::string hsv_hex(double hue, double saturation, double value);

/// CSV with a commented palette header, then index,i,j,x0..x{n-1},t,color.
void export_latents(const LatentGrid& grid, std::ostream& out);

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB
};

/// Decoded images on a res x res latent grid, tiled row by row. Tori use their two
/// angles, S^2 and RP^2 an equirectangular colatitude/longitude grid, the circle res^2
/// points along the loop, R^2 the square [-3, 3]^2. UnsupportedManifold when d >= 3.
RgbImage reconstruction_grid(const DvaeModel& model, int res);

/// Latent points used by reconstruction_grid, n x res^2.
Mat latent_grid_points(const Manifold& m, int res);

void write_ppm(const RgbImage& img, std::ostream& out);

}  // namespace dvae
