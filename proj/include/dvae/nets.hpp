#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "dvae/diffusion.hpp"
#include "dvae/manifolds.hpp"
#include "dvae/rng.hpp"

namespace dvae {

enum class Activation { Relu, Tanh, Sigmoid, Identity };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct DenseLayer {
  Mat weights;  // out x in
  Vec bias;     // out
  Activation activation = Activation::Identity;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
};

struct LayerGrad {
  Mat weights;
  Vec bias;
};

using GradientSet = std::vector<LayerGrad>;

/// Inputs and pre-activations of every layer, enough to run the backward pass.
struct ForwardPass {
  std::vector<Mat> inputs;
  std::vector<Mat> pre;
  Mat output;
};

struct BackwardPass {
  GradientSet grads;
  Mat input_grad;
};

/// Dense feed-forward network. Batches are column-major: one sample per column.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  /// sizes has one more entry than activations. Weights and biases are drawn
  /// uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Mlp(const std::vector<int>& sizes, const std::vector<Activation>& activations, Rng& rng);

  ForwardPass forward(const Mat& x) const;
  Mat predict(const Mat& x) const;
  BackwardPass backward(const ForwardPass& pass, const Mat& upstream) const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  Eigen::Index in_dim() const;
  Eigen::Index out_dim() const;
  std::size_t parameter_count() const;

  GradientSet zero_gradients() const;
  std::vector<std::span<double>> parameter_blocks();

 private:
  std::vector<DenseLayer> layers_;
};

Mat apply_activation(Activation a, const Mat& pre);

std::vector<std::span<const double>> gradient_blocks(const GradientSet& g);
void accumulate(GradientSet& into, const GradientSet& g);

/// Maps the encoder's last linear layer onto posterior parameters.
///
/// Closed manifolds: the first n outputs are projected onto the manifold and the
/// last output s becomes t = t_min + (t_max - t_min) (tanh(s) + 1) / 2.
/// Euclidean: the outputs are a mean and a log-variance, d each.
struct EncoderHead {
  Manifold manifold = Manifold::sphere(2);
  TimeBounds bounds;

  int raw_dim() const;
  double time(double s) const;
  double time_derivative(double s) const;
};

/// Veronese features z_i z_j (i <= j) of a sphere point; even in z.
Vec even_feature_map(const Vec& z);
/// Jacobian of even_feature_map, (n(n+1)/2) x n.
Mat even_feature_jacobian(const Vec& z);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long step = 0;
  std::vector<Vec> first;
  std::vector<Vec> second;
};

/// One bias-corrected Adam update. State buffers are created on first use.
void adam_step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<const double>>& grads, AdamState& state,
               const AdamHyper& hyper);

}  // namespace dvae
