#include "dvae/topo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dvae/errors.hpp"

namespace dvae {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kStepGuard = kPi / 2.0;
constexpr double kDeviationGuard = 0.25;

struct LoopWinding {
  double mean = 0.0;
  double max_step = 0.0;
  double max_deviation = 0.0;
};

// Winding of angle table a around the loops that vary the first index (along_rows)
// or the second index, averaged over the other index.
LoopWinding loop_winding(const Eigen::MatrixXd& a, bool vary_first) {
  const Eigen::Index g = a.rows();
  LoopWinding w;
  std::vector<double> per_loop;
  for (Eigen::Index fixed = 0; fixed < g; ++fixed) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < g; ++k) {
      const Eigen::Index next = (k + 1) % g;
      const double from = vary_first ? a(k, fixed) : a(fixed, k);
      const double to = vary_first ? a(next, fixed) : a(fixed, next);
      const double step = wrap_angle(to - from);
      w.max_step = std::max(w.max_step, std::abs(step));
      total += step;
    }
    per_loop.push_back(total / (2.0 * kPi));
  }
  for (double p : per_loop) {
    w.mean += p;
    w.max_deviation = std::max(w.max_deviation, std::abs(p - std::round(p)));
  }
  w.mean /= static_cast<double>(per_loop.size());
  return w;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

LatentGrid encode_grid(const DvaeModel& model, const TranslationDataset& data) {
  if (data.count() != static_cast<Eigen::Index>(data.grid) * data.grid) {
    throw ShapeMismatch("dataset is not a complete translation grid");
  }
  LatentGrid g;
  g.manifold = model.manifold();
  g.grid = data.grid;
  g.coords.resize(model.manifold().ambient_dim(), data.count());
  g.times.resize(data.count());
  constexpr Eigen::Index kChunk = 256;
  for (Eigen::Index first = 0; first < data.count(); first += kChunk) {
    const Eigen::Index len = std::min(kChunk, data.count() - first);
    const Encoded enc = model.encode(data.pixels.middleCols(first, len).cast<double>());
    g.coords.middleCols(first, len) = enc.centers;
    if (enc.times.size() == len) {
      g.times.segment(first, len) = enc.times;
    } else {
      g.times.segment(first, len).setZero();
    }
  }
  return g;
}

WindingMatrix torus_degree(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) {
  if (u.rows() != u.cols() || v.rows() != u.rows() || v.cols() != u.cols() || u.rows() < 1) {
    throw ShapeMismatch("winding tables must be square and of equal size");
  }
  const LoopWinding uh = loop_winding(u, true);
  const LoopWinding uv = loop_winding(u, false);
  const LoopWinding vh = loop_winding(v, true);
  const LoopWinding vv = loop_winding(v, false);
  WindingMatrix w;
  w.a = static_cast<int>(std::lround(uh.mean));
  w.b = static_cast<int>(std::lround(uv.mean));
  w.c = static_cast<int>(std::lround(vh.mean));
  w.d = static_cast<int>(std::lround(vv.mean));
  w.degree = w.a * w.d - w.b * w.c;
  w.max_step = std::max({uh.max_step, uv.max_step, vh.max_step, vv.max_step});
  w.max_deviation = std::max({uh.max_deviation, uv.max_deviation, vh.max_deviation, vv.max_deviation});
  w.resolved = w.max_step <= kStepGuard && w.max_deviation <= kDeviationGuard;
  return w;
}

WindingMatrix torus_degree(const LatentGrid& grid) {
  if (grid.manifold.kind() != ManifoldKind::FlatTorus) throw ShapeMismatch("degree needs a flat-torus grid");
  const int g = grid.grid;
  if (g < 1 || grid.coords.cols() != static_cast<Eigen::Index>(g) * g) {
    throw ShapeMismatch("latent grid is incomplete");
  }
  Eigen::MatrixXd u(g, g), v(g, g);
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      const Vec z = grid.coords.col(static_cast<Eigen::Index>(i) * g + j);
      u(i, j) = std::atan2(z[1], z[0]);
      v(i, j) = std::atan2(z[3], z[2]);
    }
  }
  return torus_degree(u, v);
}

std::int64_t healpix_ring_index(int nside, const Eigen::Vector3d& p) {
  if (nside < 1) throw DomainError("nside must be positive");
  const double norm = p.norm();
  if (!(std::abs(norm - 1.0) <= 1e-6)) throw DomainError("coverage points must lie on the unit sphere");
  const double z = std::clamp(p.z() / norm, -1.0, 1.0);
  double phi = std::atan2(p.y(), p.x());
  if (phi < 0.0) phi += 2.0 * kPi;
  const double za = std::abs(z);
  const double tt = std::fmod(phi / (0.5 * kPi), 4.0);
  const std::int64_t ns = nside;
  const std::int64_t npix = 12 * ns * ns;
  if (za <= 2.0 / 3.0) {
    const double t1 = ns * (0.5 + tt);
    const double t2 = ns * z * 0.75;
    const auto jp = static_cast<std::int64_t>(t1 - t2);
    const auto jm = static_cast<std::int64_t>(t1 + t2);
    const std::int64_t ir = ns + 1 + jp - jm;
    const std::int64_t kshift = 1 - (ir & 1);
    std::int64_t ip = (jp + jm - ns + kshift + 1) / 2;
    ip = ((ip % (4 * ns)) + 4 * ns) % (4 * ns);
    return 2 * ns * (ns - 1) + (ir - 1) * 4 * ns + ip;
  }
  const double tp = tt - std::floor(tt);
  const double tmp = ns * std::sqrt(3.0 * (1.0 - za));
  const auto jp = static_cast<std::int64_t>(tp * tmp);
  const auto jm = static_cast<std::int64_t>((1.0 - tp) * tmp);
  const std::int64_t ir = jp + jm + 1;
  std::int64_t ip = static_cast<std::int64_t>(tt * static_cast<double>(ir));
  ip = ip % (4 * ir);
  return z > 0.0 ? 2 * ir * (ir - 1) + ip : npix - 2 * ir * (ir + 1) + ip;
}

double sphere_coverage(const Mat& points, int nside) {
  if (nside < 1) throw DomainError("nside must be positive");
  if (points.cols() == 0) return 0.0;
  if (points.rows() != 3) throw DomainError("coverage needs points on S^2");
  const std::int64_t cells = 12LL * nside * nside;
  std::vector<bool> hit(static_cast<std::size_t>(cells), false);
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    hit[static_cast<std::size_t>(healpix_ring_index(nside, points.col(k)))] = true;
  }
  return static_cast<double>(std::count(hit.begin(), hit.end(), true)) / static_cast<double>(cells);
}

std::string hsv_hex(double hue, double saturation, double value) {
  hue -= std::floor(hue);
  const double h6 = hue * 6.0;
  const int sector = static_cast<int>(h6) % 6;
  const double f = h6 - std::floor(h6);
  const double p = value * (1.0 - saturation);
  const double q = value * (1.0 - saturation * f);
  const double t = value * (1.0 - saturation * (1.0 - f));
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = value, g = t, b = p; break;
    case 1: r = q, g = value, b = p; break;
    case 2: r = p, g = value, b = t; break;
    case 3: r = p, g = q, b = value; break;
    case 4: r = t, g = p, b = value; break;
    default: r = value, g = p, b = q; break;
  }
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", to_byte(r), to_byte(g), to_byte(b));
  return buf;
}

std::string ShiftPalette::color(int i, int j, int grid) {
  const int gi = ((i % grid) + grid) % grid;
  const int gj = ((j % grid) + grid) % grid;
  const double hue = static_cast<double>(gi) / grid;
  const double value = kValueTop - kValueDrop * static_cast<double>(gj) / grid;
  const double sat = (gi + gj) % 2 == 0 ? kSaturationEven : kSaturationOdd;
  return hsv_hex(hue, sat, value);
}

void export_latents(const LatentGrid& grid, std::ostream& out) {
  out << "# palette hsv: hue=i/G value=" << ShiftPalette::kValueTop << "-" << ShiftPalette::kValueDrop
      << "*j/G saturation=" << ShiftPalette::kSaturationEven << "(i+j even)," << ShiftPalette::kSaturationOdd
      << "(odd) G=" << grid.grid << "\n";
  out << "index,i,j";
  for (Eigen::Index k = 0; k < grid.coords.rows(); ++k) out << ",x" << k;
  out << ",t,color\n";
  char buf[64];
  for (Eigen::Index idx = 0; idx < grid.coords.cols(); ++idx) {
    const int i = static_cast<int>(idx / grid.grid);
    const int j = static_cast<int>(idx % grid.grid);
    out << idx << "," << i << "," << j;
    for (Eigen::Index k = 0; k < grid.coords.rows(); ++k) {
      std::snprintf(buf, sizeof(buf), ",%.17g", grid.coords(k, idx));
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.17g", grid.times.size() > idx ? grid.times[idx] : 0.0);
    out << buf << "," << ShiftPalette::color(i, j, grid.grid) << "\n";
  }
}

Mat latent_grid_points(const Manifold& m, int res) {
  if (res < 1) throw DomainError("grid resolution must be positive");
  const int n = m.ambient_dim();
  Mat pts(n, static_cast<Eigen::Index>(res) * res);
  for (int row = 0; row < res; ++row) {
    for (int col = 0; col < res; ++col) {
      const Eigen::Index k = static_cast<Eigen::Index>(row) * res + col;
      const double a = -kPi + 2.0 * kPi * row / res;
      const double b = -kPi + 2.0 * kPi * col / res;
      switch (m.kind()) {
        case ManifoldKind::FlatTorus:
          // columns follow u, rows follow v
          pts.col(k) = torus_point(m, b, a);
          break;
        case ManifoldKind::EmbeddedTorus:
          pts.col(k) = torus_point(m, a, b);
          break;
        case ManifoldKind::Sphere:
        case ManifoldKind::ProjectiveSphere:
          if (m.intrinsic_dim() == 1) {
            const double angle = -kPi + 2.0 * kPi * static_cast<double>(k) / (static_cast<double>(res) * res);
            pts.col(k) << std::cos(angle), std::sin(angle);
          } else if (m.intrinsic_dim() == 2) {
            const double colat = kPi * (row + 0.5) / res;
            pts.col(k) << std::sin(colat) * std::cos(b), std::sin(colat) * std::sin(b), std::cos(colat);
          } else {
            throw UnsupportedManifold("reconstruction grids need a latent space of dimension at most 2");
          }
          break;
        case ManifoldKind::Euclidean:
          if (m.intrinsic_dim() != 2) {
            throw UnsupportedManifold("reconstruction grids need a latent space of dimension at most 2");
          }
          pts.col(k) << -3.0 + 6.0 * (col + 0.5) / res, 3.0 - 6.0 * (row + 0.5) / res;
          break;
      }
    }
  }
  return pts;
}

RgbImage reconstruction_grid(const DvaeModel& model, int res) {
  const Mat pts = latent_grid_points(model.manifold(), res);
  const int h = model.config().image_height;
  const int w = model.config().image_width;
  if (static_cast<long>(h) * w != model.config().data_dim) throw ShapeMismatch("image shape differs from data_dim");
  const Mat images = model.decode(pts);
  RgbImage img;
  img.width = w * res;
  img.height = h * res;
  img.pixels.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);
  for (int row = 0; row < res; ++row) {
    for (int col = 0; col < res; ++col) {
      const Eigen::Index k = static_cast<Eigen::Index>(row) * res + col;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::uint8_t v = to_byte(images(y * w + x, k));
          const std::size_t at = (static_cast<std::size_t>(row * h + y) * img.width + col * w + x) * 3;
          img.pixels[at] = img.pixels[at + 1] = img.pixels[at + 2] = v;
        }
      }
    }
  }
  return img;
}

void write_ppm(const RgbImage& img, std::ostream& out) {
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

}  // namespace dvae
