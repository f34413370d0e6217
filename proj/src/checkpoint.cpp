#include <fstream>

#include "dvae/binary_io.hpp"
#include "dvae/errors.hpp"
#include "dvae/model.hpp"

namespace dvae {

namespace {

constexpr char kMagic[] = "DVAE-CKPT";
constexpr std::uint32_t kVersion = 1;

void write_mat(std::ostream& out, const Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) io::write_le<double>(out, m.data()[i]);
}

void read_mat(std::istream& in, Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = io::read_le<double>(in);
}

void write_net(std::ostream& out, const Mlp& net) {
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_dim()));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_dim()));
    io::write_string(out, activation_name(l.activation));
  }
  for (const auto& l : net.layers()) {
    write_mat(out, l.weights);
    write_mat(out, l.bias);
  }
}

Mlp read_net(std::istream& in) {
  const auto count = io::read_le<std::uint32_t>(in);
  if (count == 0 || count > 64) throw FormatError("checkpoint: implausible layer count");
  std::vector<DenseLayer> layers(count);
  for (auto& l : layers) {
    const auto out_dim = io::read_le<std::uint32_t>(in);
    const auto in_dim = io::read_le<std::uint32_t>(in);
    if (out_dim == 0 || in_dim == 0 || out_dim > (1u << 20) || in_dim > (1u << 20)) {
      throw FormatError("checkpoint: implausible layer shape");
    }
    l.activation = parse_activation(io::read_string(in, 64));
    l.weights.resize(out_dim, in_dim);
    l.bias.resize(out_dim);
  }
  for (auto& l : layers) {
    read_mat(in, l.weights);
    Mat b(l.bias.size(), 1);
    read_mat(in, b);
    l.bias = b.col(0);
  }
  return Mlp(std::move(layers));
}

}  // namespace

void save_checkpoint(const DvaeModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  const auto& c = model.config();
  out.write(kMagic, sizeof(kMagic) - 1);
  io::write_le<std::uint32_t>(out, kVersion);
  io::write_string(out, c.manifold.name());
  io::write_le<double>(out, c.manifold.major_radius());
  io::write_le<double>(out, c.manifold.minor_radius());
  for (int v : {c.data_dim, c.image_height, c.image_width, c.hidden, c.encoder_layers, c.decoder_layers,
                c.walk_steps}) {
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  io::write_string(out, activation_name(c.hidden_activation));
  io::write_string(out, likelihood_name(c.likelihood));
  io::write_string(out, kl_mode_name(c.kl_mode));
  io::write_le<double>(out, c.bounds.t_min);
  io::write_le<double>(out, c.bounds.t_max);
  io::write_le<std::uint64_t>(out, c.seed);
  write_net(out, model.encoder());
  write_net(out, model.decoder());
  const AdamState& opt = model.optimizer();
  io::write_le<std::int64_t>(out, opt.step);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(opt.first.size()));
  for (std::size_t b = 0; b < opt.first.size(); ++b) {
    io::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(opt.first[b].size()));
    write_mat(out, opt.first[b]);
    write_mat(out, opt.second[b]);
  }
  io::write_le<std::uint64_t>(out, c.seed);
  io::write_le<std::uint64_t>(out, model.epochs_trained());
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

DvaeModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof(kMagic) - 1];
  if (!in.read(magic, sizeof(magic)) || std::string(magic, sizeof(magic)) != kMagic) {
    throw FormatError("not a checkpoint file: " + path);
  }
  if (io::read_le<std::uint32_t>(in) != kVersion) throw FormatError("unsupported checkpoint version");
  ModelConfig c;
  const std::string name = io::read_string(in, 64);
  const double big = io::read_le<double>(in);
  const double small = io::read_le<double>(in);
  c.manifold = name == "embedded-torus" ? Manifold::embedded_torus(big, small) : Manifold::parse(name);
  int* fields[] = {&c.data_dim, &c.image_height, &c.image_width, &c.hidden, &c.encoder_layers,
                   &c.decoder_layers, &c.walk_steps};
  for (int* f : fields) *f = static_cast<int>(io::read_le<std::uint32_t>(in));
  c.hidden_activation = parse_activation(io::read_string(in, 64));
  c.likelihood = parse_likelihood(io::read_string(in, 64));
  c.kl_mode = parse_kl_mode(io::read_string(in, 64));
  c.bounds.t_min = io::read_le<double>(in);
  c.bounds.t_max = io::read_le<double>(in);
  c.seed = io::read_le<std::uint64_t>(in);
  Mlp encoder = read_net(in);
  Mlp decoder = read_net(in);
  DvaeModel model(c, std::move(encoder), std::move(decoder));
  AdamState& opt = model.optimizer();
  opt.step = io::read_le<std::int64_t>(in);
  const auto blocks = io::read_le<std::uint32_t>(in);
  if (blocks > 1024) throw FormatError("checkpoint: implausible optimizer block count");
  for (std::uint32_t b = 0; b < blocks; ++b) {
    const auto len = io::read_le<std::uint64_t>(in);
    if (len > (1ULL << 28)) throw FormatError("checkpoint: implausible optimizer block");
    Mat first(static_cast<Eigen::Index>(len), 1), second(static_cast<Eigen::Index>(len), 1);
    read_mat(in, first);
    read_mat(in, second);
    opt.first.push_back(first.col(0));
    opt.second.push_back(second.col(0));
  }
  io::read_le<std::uint64_t>(in);  // rng seed, same as the config seed
  model.set_epochs_trained(io::read_le<std::uint64_t>(in));
  return model;
}

}  // namespace dvae
