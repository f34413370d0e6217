#include "dvae/nets.hpp"

#include <cmath>
#include <string>

#include "dvae/errors.hpp"

namespace dvae {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Relu:
      return "relu";
    case Activation::Tanh:
      return "tanh";
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::Identity:
      return "identity";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + name + "'");
}

Mat apply_activation(Activation a, const Mat& pre) {
  switch (a) {
    case Activation::Relu:
      return pre.cwiseMax(0.0);
    case Activation::Tanh:
      return pre.array().tanh().matrix();
    case Activation::Sigmoid:
      return (1.0 / (1.0 + (-pre.array()).exp())).matrix();
    case Activation::Identity:
      return pre;
  }
  return pre;
}

namespace {

// Multiplies upstream by the activation derivative in place.
void scale_by_derivative(Activation a, const Mat& pre, Mat& grad) {
  switch (a) {
    case Activation::Relu:
      grad.array() *= (pre.array() > 0.0).cast<double>();
      return;
    case Activation::Tanh: {
      const auto th = pre.array().tanh();
      grad.array() *= 1.0 - th * th;
      return;
    }
    case Activation::Sigmoid: {
      const Eigen::ArrayXXd s = 1.0 / (1.0 + (-pre.array()).exp());
      grad.array() *= s * (1.0 - s);
      return;
    }
    case Activation::Identity:
      return;
  }
}

}  // namespace

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.weights.rows()) throw ShapeMismatch("layer bias does not match weights");
    if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) throw ShapeMismatch("adjacent layer sizes differ");
  }
}

Mlp::Mlp(const std::vector<int>& sizes, const std::vector<Activation>& activations, Rng& rng) {
  if (sizes.size() != activations.size() + 1) throw ShapeMismatch("need one activation per layer");
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t i = 0; i < activations.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[i]));
    DenseLayer l{Mat(sizes[i + 1], sizes[i]), Vec(sizes[i + 1]), activations[i]};
    for (Eigen::Index c = 0; c < l.weights.cols(); ++c) {
      for (Eigen::Index r = 0; r < l.weights.rows(); ++r) l.weights(r, c) = bound * unit(rng.engine());
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = bound * unit(rng.engine());
    layers_.push_back(std::move(l));
  }
}

Eigen::Index Mlp::in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
Eigen::Index Mlp::out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

ForwardPass Mlp::forward(const Mat& x) const {
  if (x.rows() != in_dim()) throw ShapeMismatch("network input has wrong length");
  ForwardPass pass;
  pass.inputs.reserve(layers_.size());
  pass.pre.reserve(layers_.size());
  Mat h = x;
  for (const auto& l : layers_) {
    Mat pre = l.weights * h;
    pre.colwise() += l.bias;
    pass.inputs.push_back(std::move(h));
    h = apply_activation(l.activation, pre);
    pass.pre.push_back(std::move(pre));
  }
  pass.output = std::move(h);
  return pass;
}

Mat Mlp::predict(const Mat& x) const {
  if (x.rows() != in_dim()) throw ShapeMismatch("network input has wrong length");
  Mat h = x;
  for (const auto& l : layers_) {
    Mat pre = l.weights * h;
    pre.colwise() += l.bias;
    h = apply_activation(l.activation, pre);
  }
  return h;
}

BackwardPass Mlp::backward(const ForwardPass& pass, const Mat& upstream) const {
  if (pass.pre.size() != layers_.size()) throw ShapeMismatch("cache does not belong to this network");
  if (upstream.rows() != out_dim() || upstream.cols() != pass.output.cols()) {
    throw ShapeMismatch("upstream gradient shape does not match network output");
  }
  BackwardPass out;
  out.grads.resize(layers_.size());
  Mat delta = upstream;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    scale_by_derivative(l.activation, pass.pre[k], delta);
    out.grads[k].weights.noalias() = delta * pass.inputs[k].transpose();
    out.grads[k].bias = delta.rowwise().sum();
    Mat below;
    below.noalias() = l.weights.transpose() * delta;
    delta = std::move(below);
  }
  out.input_grad = std::move(delta);
  return out;
}

GradientSet Mlp::zero_gradients() const {
  GradientSet g;
  for (const auto& l : layers_) {
    g.push_back({Mat::Zero(l.weights.rows(), l.weights.cols()), Vec::Zero(l.bias.size())});
  }
  return g;
}

std::vector<std::span<double>> Mlp::parameter_blocks() {
  std::vector<std::span<double>> blocks;
  for (auto& l : layers_) {
    blocks.emplace_back(l.weights.data(), static_cast<std::size_t>(l.weights.size()));
    blocks.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return blocks;
}

std::vector<std::span<const double>> gradient_blocks(const GradientSet& g) {
  std::vector<std::span<const double>> blocks;
  for (const auto& l : g) {
    blocks.emplace_back(l.weights.data(), static_cast<std::size_t>(l.weights.size()));
    blocks.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return blocks;
}

void accumulate(GradientSet& into, const GradientSet& g) {
  if (into.size() != g.size()) throw ShapeMismatch("gradient sets differ in layer count");
  for (std::size_t i = 0; i < g.size(); ++i) {
    into[i].weights += g[i].weights;
    into[i].bias += g[i].bias;
  }
}

int EncoderHead::raw_dim() const {
  if (manifold.is_closed()) return manifold.ambient_dim() + 1;
  return 2 * manifold.intrinsic_dim();
}

double EncoderHead::time(double s) const {
  return bounds.t_min + (bounds.t_max - bounds.t_min) * 0.5 * (std::tanh(s) + 1.0);
}

double EncoderHead::time_derivative(double s) const {
  const double th = std::tanh(s);
  return (bounds.t_max - bounds.t_min) * 0.5 * (1.0 - th * th);
}

Vec even_feature_map(const Vec& z) {
  if (z.size() < 2 || z.size() > 4 || !(std::abs(z.norm() - 1.0) <= 1e-6)) {
    throw DomainError("even feature map expects a point on S^1, S^2 or S^3");
  }
  const Eigen::Index n = z.size();
  Vec f(n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) f[k++] = z[i] * z[j];
  }
  return f;
}

Mat even_feature_jacobian(const Vec& z) {
  const Eigen::Index n = z.size();
  Mat jac = Mat::Zero(n * (n + 1) / 2, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j, ++k) {
      jac(k, i) += z[j];
      jac(k, j) += z[i];
    }
  }
  return jac;
}

void adam_step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads, AdamState& state,
               const AdamHyper& hyper) {
  if (params.size() != grads.size()) throw ShapeMismatch("Adam: parameter and gradient block counts differ");
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.push_back(Vec::Zero(static_cast<Eigen::Index>(p.size())));
      state.second.push_back(Vec::Zero(static_cast<Eigen::Index>(p.size())));
    }
  }
  if (state.first.size() != params.size()) throw ShapeMismatch("Adam: state does not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || static_cast<Eigen::Index>(params[b].size()) != state.first[b].size()) {
      throw ShapeMismatch("Adam: block sizes differ");
    }
    Eigen::Map<Vec> p(params[b].data(), static_cast<Eigen::Index>(params[b].size()));
    Eigen::Map<const Vec> g(grads[b].data(), static_cast<Eigen::Index>(grads[b].size()));
    Vec& m = state.first[b];
    Vec& v = state.second[b];
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g.cwiseAbs2();
    p.array() -= hyper.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + hyper.eps);
  }
}

}  // namespace dvae
