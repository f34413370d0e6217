#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dvae {

inline constexpr int kPictureSize = 64;

enum class PictureMode { Simple, RandomFourier };

/// Periodic picture on [-pi, pi)^2. Simple is cos(theta) + cos(phi); RandomFourier is
/// Re sum_{k,l=-N..N} gamma^(|k|+|l|-1) a_kl exp(i(k theta + l phi)) with a_kl drawn
/// from the seed (real and imaginary parts i.i.d. standard normal).
struct PictureSpec {
  PictureMode mode = PictureMode::Simple;
  int cutoff = 1;
  double gamma = 1.0;
  std::uint64_t seed = 0;
};

/// Coefficients in (k, l) row-major order, k and l from -cutoff to cutoff.
std::vector<std::complex<double>> fourier_coefficients(const PictureSpec& spec);

/// 64 x 64 samples in native range. Row index is theta, column index is phi,
/// both on the grid -pi + 2 pi i / 64.
Eigen::MatrixXd gen_picture(const PictureSpec& spec);

/// Cyclic roll: out(r, c) = img(r - down, c - right), indices mod size.
Eigen::MatrixXd roll(const Eigen::MatrixXd& img, int down, int right);

/// Affine map of native pixel values onto [0, 1].
struct PixelScale {
  double offset = 0.0;
  double span = 1.0;

  double apply(double v) const { return (v - offset) / span; }
  double unapply(double v) const { return v * span + offset; }
};

struct Shift {
  std::uint32_t i = 0;  // horizontal (column) shift index
  std::uint32_t j = 0;  // vertical (row) shift index
};

/// Translated copies of one periodic picture; record i * grid + j holds shift (i, j),
/// the base picture rolled right by i * 64/grid and down by j * 64/grid pixels.
struct TranslationDataset {
  int grid = kPictureSize;
  int height = kPictureSize;
  int width = kPictureSize;
  Eigen::MatrixXf pixels;  // (height * width) x count, row-major pixels per column
  std::vector<Shift> shifts;
  PixelScale scale;
  std::string metadata;  // JSON describing how the set was produced

  Eigen::Index count() const { return pixels.cols(); }
};

/// Flattens an image row-major into a column vector.
Eigen::VectorXd flatten_image(const Eigen::MatrixXd& img);
Eigen::MatrixXd unflatten_image(const Eigen::VectorXd& v, int height, int width);

TranslationDataset translate_dataset(const Eigen::MatrixXd& picture, int grid = kPictureSize,
                                     const PictureSpec* spec = nullptr);

void write_dataset(const TranslationDataset& ds, const std::string& path);
TranslationDataset read_dataset(const std::string& path);

struct MnistSet {
  int rows = 28;
  int cols = 28;
  Eigen::MatrixXf pixels;  // 784 x count in [0, 1]
  std::vector<std::uint8_t> labels;
  std::string split;

  Eigen::Index count() const { return pixels.cols(); }
};

MnistSet load_mnist(const std::string& images_path, const std::string& labels_path);

/// Writes IDX files; pixels are rounded to bytes after scaling by 255.
void write_mnist(const MnistSet& set, const std::string& images_path, const std::string& labels_path);

enum class BinarizeMode { Stochastic, Threshold };

Eigen::MatrixXf binarize(const Eigen::MatrixXf& pixels, std::uint64_t seed, BinarizeMode mode);
MnistSet binarize(const MnistSet& set, std::uint64_t seed, BinarizeMode mode);

}  // namespace dvae
