#include "dvae/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "json.hpp"

#include "dvae/binary_io.hpp"
#include "dvae/errors.hpp"
#include "dvae/rng.hpp"

namespace dvae {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr char kDatasetMagic[8] = {'D', 'V', 'A', 'E', 'D', 'S', '1', '\0'};
constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

double grid_angle(int i) { return -kPi + 2.0 * kPi * i / kPictureSize; }

int positive_mod(int a, int n) { return ((a % n) + n) % n; }

}  // namespace

std::vector<std::complex<double>> fourier_coefficients(const PictureSpec& spec) {
  if (spec.cutoff < 1) throw ConfigError("Fourier cutoff must be at least 1");
  Rng rng(spec.seed);
  const int side = 2 * spec.cutoff + 1;
  std::vector<std::complex<double>> a(static_cast<std::size_t>(side * side));
  for (auto& c : a) {
    const double re = rng.normal();
    const double im = rng.normal();
    c = {re, im};
  }
  return a;
}

Eigen::MatrixXd gen_picture(const PictureSpec& spec) {
  Eigen::MatrixXd img(kPictureSize, kPictureSize);
  if (spec.mode == PictureMode::Simple) {
    for (int r = 0; r < kPictureSize; ++r) {
      for (int c = 0; c < kPictureSize; ++c) img(r, c) = std::cos(grid_angle(r)) + std::cos(grid_angle(c));
    }
    return img;
  }
  if (!(spec.gamma > 0.0 && spec.gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  const auto coeffs = fourier_coefficients(spec);
  const int n = spec.cutoff;
  const int side = 2 * n + 1;
  for (int r = 0; r < kPictureSize; ++r) {
    const double theta = grid_angle(r);
    for (int c = 0; c < kPictureSize; ++c) {
      const double phi = grid_angle(c);
      double v = 0.0;
      for (int k = -n; k <= n; ++k) {
        for (int l = -n; l <= n; ++l) {
          const double w = std::pow(spec.gamma, std::abs(k) + std::abs(l) - 1);
          const auto a = coeffs[static_cast<std::size_t>((k + n) * side + (l + n))];
          v += w * (a * std::polar(1.0, k * theta + l * phi)).real();
        }
      }
      img(r, c) = v;
    }
  }
  return img;
}

Eigen::MatrixXd roll(const Eigen::MatrixXd& img, int down, int right) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  Eigen::MatrixXd out(h, w);
  for (int r = 0; r < h; ++r) {
    const int src_r = positive_mod(r - down, h);
    for (int c = 0; c < w; ++c) out(r, c) = img(src_r, positive_mod(c - right, w));
  }
  return out;
}

Eigen::VectorXd flatten_image(const Eigen::MatrixXd& img) {
  Eigen::VectorXd v(img.size());
  for (Eigen::Index r = 0; r < img.rows(); ++r) {
    for (Eigen::Index c = 0; c < img.cols(); ++c) v[r * img.cols() + c] = img(r, c);
  }
  return v;
}

Eigen::MatrixXd unflatten_image(const Eigen::VectorXd& v, int height, int width) {
  if (v.size() != static_cast<Eigen::Index>(height) * width) throw ShapeMismatch("image vector length");
  Eigen::MatrixXd img(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) img(r, c) = v[r * width + c];
  }
  return img;
}

TranslationDataset translate_dataset(const Eigen::MatrixXd& picture, int grid, const PictureSpec* spec) {
  if (picture.rows() != kPictureSize || picture.cols() != kPictureSize) {
    throw ShapeMismatch("translation datasets are built from 64 x 64 pictures");
  }
  if (grid < 1 || kPictureSize % grid != 0) throw BadGrid("grid size must divide 64");
  TranslationDataset ds;
  ds.grid = grid;
  const double lo = picture.minCoeff();
  const double hi = picture.maxCoeff();
  ds.scale = PixelScale{lo, hi > lo ? hi - lo : 1.0};
  const int step = kPictureSize / grid;
  const Eigen::Index count = static_cast<Eigen::Index>(grid) * grid;
  ds.pixels.resize(kPictureSize * kPictureSize, count);
  ds.shifts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      const Eigen::MatrixXd shifted = roll(picture, j * step, i * step);
      const Eigen::VectorXd flat = flatten_image(shifted);
      const Eigen::Index rec = static_cast<Eigen::Index>(i) * grid + j;
      for (Eigen::Index p = 0; p < flat.size(); ++p) ds.pixels(p, rec) = static_cast<float>(ds.scale.apply(flat[p]));
      ds.shifts.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
    }
  }
  nlohmann::json meta{{"grid", grid}, {"scale_offset", ds.scale.offset}, {"scale_span", ds.scale.span}};
  if (spec) {
    meta["mode"] = spec->mode == PictureMode::Simple ? "simple" : "random-fourier";
    meta["seed"] = spec->seed;
    meta["gamma"] = spec->gamma;
    meta["cutoff"] = spec->cutoff;
  }
  ds.metadata = meta.dump();
  return ds;
}

void write_dataset(const TranslationDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open dataset for writing: " + path);
  out.write(kDatasetMagic, sizeof(kDatasetMagic));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.count()));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.height));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.width));
  for (Eigen::Index i = 0; i < ds.pixels.size(); ++i) io::write_le<float>(out, ds.pixels.data()[i]);
  for (const auto& s : ds.shifts) {
    io::write_le<std::uint32_t>(out, s.i);
    io::write_le<std::uint32_t>(out, s.j);
  }
  io::write_string(out, ds.metadata);
  if (!out) throw IoError("failed writing dataset: " + path);
}

TranslationDataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path);
  char magic[sizeof(kDatasetMagic)];
  if (!in.read(magic, sizeof(magic))) throw TruncatedFile("dataset header truncated: " + path);
  if (std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0) throw BadMagic("not a DVAEDS1 dataset: " + path);
  TranslationDataset ds;
  const auto count = io::read_le<std::uint32_t>(in);
  ds.height = static_cast<int>(io::read_le<std::uint32_t>(in));
  ds.width = static_cast<int>(io::read_le<std::uint32_t>(in));
  if (ds.height < 1 || ds.width < 1 || ds.height > 4096 || ds.width > 4096) {
    throw FormatError("dataset has implausible image size");
  }
  ds.pixels.resize(static_cast<Eigen::Index>(ds.height) * ds.width, count);
  for (Eigen::Index i = 0; i < ds.pixels.size(); ++i) ds.pixels.data()[i] = io::read_le<float>(in);
  ds.shifts.resize(count);
  for (auto& s : ds.shifts) {
    s.i = io::read_le<std::uint32_t>(in);
    s.j = io::read_le<std::uint32_t>(in);
  }
  ds.metadata = io::read_string(in);
  const auto meta = nlohmann::json::parse(ds.metadata, nullptr, false);
  if (!meta.is_discarded() && meta.is_object()) {
    ds.grid = meta.value("grid", ds.grid);
    ds.scale.offset = meta.value("scale_offset", 0.0);
    ds.scale.span = meta.value("scale_span", 1.0);
  }
  return ds;
}

MnistSet load_mnist(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot open IDX images: " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("cannot open IDX labels: " + labels_path);
  if (io::read_be<std::uint32_t>(img) != kIdxImages) throw BadMagic("bad IDX image magic: " + images_path);
  const auto count = io::read_be<std::uint32_t>(img);
  MnistSet set;
  set.rows = static_cast<int>(io::read_be<std::uint32_t>(img));
  set.cols = static_cast<int>(io::read_be<std::uint32_t>(img));
  if (set.rows < 1 || set.cols < 1 || set.rows > 1024 || set.cols > 1024) {
    throw FormatError("IDX image size is implausible");
  }
  if (io::read_be<std::uint32_t>(lab) != kIdxLabels) throw BadMagic("bad IDX label magic: " + labels_path);
  const auto label_count = io::read_be<std::uint32_t>(lab);
  if (label_count != count) throw CountMismatch("IDX image and label counts differ");
  const std::size_t per = static_cast<std::size_t>(set.rows) * set.cols;
  std::vector<unsigned char> bytes(per * count);
  if (!img.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw TruncatedFile("IDX image data truncated: " + images_path);
  }
  set.labels.resize(count);
  if (!lab.read(reinterpret_cast<char*>(set.labels.data()), count)) {
    throw TruncatedFile("IDX label data truncated: " + labels_path);
  }
  for (auto l : set.labels) {
    if (l > 9) throw FormatError("IDX label outside 0..9");
  }
  set.pixels.resize(static_cast<Eigen::Index>(per), count);
  for (std::size_t k = 0; k < bytes.size(); ++k) set.pixels.data()[k] = static_cast<float>(bytes[k]) / 255.0f;
  set.split = count == 10000 ? "test" : (count == 60000 ? "train" : "custom");
  return set;
}

void write_mnist(const MnistSet& set, const std::string& images_path, const std::string& labels_path) {
  std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
  std::ofstream lab(labels_path, std::ios::binary | std::ios::trunc);
  if (!img || !lab) throw IoError("cannot open IDX output files");
  const auto count = static_cast<std::uint32_t>(set.count());
  io::write_be<std::uint32_t>(img, kIdxImages);
  io::write_be<std::uint32_t>(img, count);
  io::write_be<std::uint32_t>(img, static_cast<std::uint32_t>(set.rows));
  io::write_be<std::uint32_t>(img, static_cast<std::uint32_t>(set.cols));
  for (Eigen::Index k = 0; k < set.pixels.size(); ++k) {
    const float v = std::clamp(set.pixels.data()[k], 0.0f, 1.0f);
    img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
  }
  io::write_be<std::uint32_t>(lab, kIdxLabels);
  io::write_be<std::uint32_t>(lab, count);
  for (auto l : set.labels) lab.put(static_cast<char>(l));
  if (!img || !lab) throw IoError("failed writing IDX files");
}

Eigen::MatrixXf binarize(const Eigen::MatrixXf& pixels, std::uint64_t seed, BinarizeMode mode) {
  Eigen::MatrixXf out(pixels.rows(), pixels.cols());
  Rng rng(seed);
  for (Eigen::Index k = 0; k < pixels.size(); ++k) {
    const float p = pixels.data()[k];
    if (mode == BinarizeMode::Threshold) {
      out.data()[k] = p >= 0.5f ? 1.0f : 0.0f;
    } else {
      out.data()[k] = rng.uniform() < static_cast<double>(p) ? 1.0f : 0.0f;
    }
  }
  return out;
}

MnistSet binarize(const MnistSet& set, std::uint64_t seed, BinarizeMode mode) {
  MnistSet out = set;
  out.pixels = binarize(set.pixels, seed, mode);
  return out;
}

}  // namespace dvae
