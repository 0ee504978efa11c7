#pragma once

#include "lastomo/rng.hpp"

#include <Eigen/Dense>

#include <string>
#include <string_view>
#include <vector>

namespace lastomo {

// Activations of a batch: one sample per row, features flattened row-major
// in (height, width, channel) order.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Shape {
  int h = 1;
  int w = 1;
  int c = 1;
  bool flat = false;

  static Shape grid(int h, int w, int c) { return {h, w, c, false}; }
  static Shape vector(int n) { return {1, 1, n, true}; }
  int size() const { return h * w * c; }
  std::string str() const;  // "40x40x2" or "2592"
  bool operator==(const Shape&) const = default;
};

// Single-sample tensor, channel-last.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(s), data(s.size(), fill) {}
  double& at(int r, int c, int ch) { return data[(r * shape.w + c) * shape.c + ch]; }
  double at(int r, int c, int ch) const { return data[(r * shape.w + c) * shape.c + ch]; }
};

enum class LayerKind { InputReshape, Conv, MaxPool, AvgPool, Flatten, Dense };
enum class Activation { Linear, Relu, LeakyRelu };

enum class Arch { PiCnn, DCnn, HCnn };
std::string_view to_string(Arch a);
Arch parse_arch(std::string_view s);
std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);
std::string_view to_string(LayerKind k);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Dense;
  int kh = 0;  // kernel / pooling window
  int kw = 0;
  int filters = 0;
  int stride_h = 1;
  int stride_w = 1;
  int padding = 0;
  int units = 0;  // dense
  Activation activation = Activation::Linear;
  double leaky_slope = 0.01;
  Shape in;
  Shape out;

  bool has_params() const { return kind == LayerKind::Conv || kind == LayerKind::Dense; }
  // Rows x cols of the weight matrix as the layer tables print it.
  std::string weight_str() const;
};

// The first layer is always the InputReshape describing how the 2 x 32
// measurements become the network input; it carries no computation here.
struct NetworkSpec {
  Arch arch = Arch::PiCnn;
  Shape measurements = Shape::grid(32, 1, 2);
  std::vector<LayerSpec> layers;

  Shape input() const { return layers.front().out; }
  Shape output() const { return layers.back().out; }
};

// Fills in/out shapes and validates the chain. Throws DimensionError.
NetworkSpec chain_shapes(NetworkSpec spec);

struct ArchOptions {
  Activation output_activation = Activation::Linear;
  double leaky_slope = 0.01;
  int n_beams = 32;
  int roi_dim = 40;
  int n_cells = 1964;
};

NetworkSpec make_spec(Arch arch, const ArchOptions& opt = {});

struct LayerParams {
  Eigen::MatrixXd W;  // conv: (kh*kw*cin) x filters; dense: units x in
  Eigen::VectorXd b;
};

struct ModelParams {
  NetworkSpec spec;
  std::vector<LayerParams> layers;  // parallel to spec.layers
  // Optional per-channel input standardization (x - mean) / std.
  bool standardize = false;
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_std;
  // Optional fixed per-output offset added after the last layer.
  Eigen::VectorXd output_offset;

  std::size_t n_parameters() const;
};

// He-normal weights, zero biases.
ModelParams init_params(const NetworkSpec& spec, Rng& rng);

// Core kernels, single sample. Weights use the LayerParams layout.
Tensor conv2d(const Tensor& input, const Eigen::MatrixXd& W, const Eigen::VectorXd& b, int kh,
              int kw, int stride, Activation act, double leaky_slope = 0.01);
Tensor maxpool(const Tensor& input, int window, int stride);
Tensor avgpool(const Tensor& input, int window, int stride);
Eigen::VectorXd dense(const Eigen::VectorXd& input, const Eigen::MatrixXd& W,
                      const Eigen::VectorXd& b, Activation act, double leaky_slope = 0.01);

struct Gradients {
  std::vector<LayerParams> layers;
  Batch input;  // dLoss/dInput (after standardization)
};

// Forward/backward over a batch, keeping the intermediates backward needs.
class Network {
 public:
  explicit Network(const ModelParams& params) : params_(&params) {}

  // x: B x input().size(), already standardized. Returns B x output().size().
  const Batch& forward(const Batch& x);

  // Back-propagates dLoss/dOutput through the cached forward pass.
  Gradients backward(const Batch& d_output);

 private:
  const ModelParams* params_;
  std::vector<Batch> acts_;                   // acts_[l] is the input of layer l
  std::vector<Batch> cols_;                   // im2col per conv layer
  std::vector<std::vector<int>> argmax_;      // per max-pool layer
};

}  // namespace lastomo
