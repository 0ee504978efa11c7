#include "lastomo/network.hpp"

#include "kernels.hpp"
#include "lastomo/errors.hpp"

#include <cmath>
#include <random>

namespace lastomo {

std::string Shape::str() const {
  if (flat) return std::to_string(size());
  return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

std::string_view to_string(Arch a) {
  switch (a) {
    case Arch::PiCnn: return "pi-cnn";
    case Arch::DCnn: return "d-cnn";
    case Arch::HCnn: return "h-cnn";
  }
  return "?";
}

Arch parse_arch(std::string_view s) {
  if (s == "pi-cnn") return Arch::PiCnn;
  if (s == "d-cnn") return Arch::DCnn;
  if (s == "h-cnn") return Arch::HCnn;
  throw ConfigError("unknown architecture '" + std::string(s) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky-relu";
  }
  return "?";
}

Activation parse_activation(std::string_view s) {
  if (s == "linear") return Activation::Linear;
  if (s == "relu") return Activation::Relu;
  if (s == "leaky-relu") return Activation::LeakyRelu;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::InputReshape: return "input-reshape";
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

std::string LayerSpec::weight_str() const {
  switch (kind) {
    case LayerKind::Conv:
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      return std::to_string(kh) + "x" + std::to_string(kw);
    case LayerKind::Dense:
      return std::to_string(units) + "x" + std::to_string(in.size());
    default:
      return "-";
  }
}

NetworkSpec chain_shapes(NetworkSpec spec) {
  if (spec.layers.empty() || spec.layers.front().kind != LayerKind::InputReshape) {
    throw DimensionError("a network must start with an input-reshape layer");
  }
  spec.layers.front().in = spec.measurements;
  for (std::size_t l = 1; l < spec.layers.size(); ++l) {
    LayerSpec& ly = spec.layers[l];
    ly.in = spec.layers[l - 1].out;
    switch (ly.kind) {
      case LayerKind::InputReshape:
        throw DimensionError("input-reshape is only valid as the first layer");
      case LayerKind::Conv:
        if (ly.in.flat) throw DimensionError(ly.name + ": convolution needs a grid input");
        if (ly.padding != 0) throw DimensionError(ly.name + ": only valid padding is supported");
        ly.out = kernels::conv_out_shape(ly.in, ly.kh, ly.kw, ly.stride_h, ly.stride_w, ly.filters);
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        if (ly.in.flat) throw DimensionError(ly.name + ": pooling needs a grid input");
        ly.out = kernels::pool_out_shape(ly.in, ly.kh, ly.kw, ly.stride_h, ly.stride_w);
        break;
      case LayerKind::Flatten:
        ly.out = Shape::vector(ly.in.size());
        break;
      case LayerKind::Dense:
        if (!ly.in.flat) throw DimensionError(ly.name + ": dense layer needs a flat input");
        if (ly.units < 1) throw DimensionError(ly.name + ": dense layer needs units");
        ly.out = Shape::vector(ly.units);
        break;
    }
  }
  return spec;
}

namespace {

LayerSpec conv(std::string name, int filters, Activation act, double slope) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::Conv;
  l.kh = l.kw = 2;
  l.filters = filters;
  l.activation = act;
  l.leaky_slope = slope;
  return l;
}

LayerSpec pool(std::string name, LayerKind kind, int stride) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = kind;
  l.kh = l.kw = 2;
  l.stride_h = l.stride_w = stride;
  return l;
}

LayerSpec fc(std::string name, int units, Activation act, double slope = 0.01) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::Dense;
  l.units = units;
  l.activation = act;
  l.leaky_slope = slope;
  return l;
}

LayerSpec flatten() {
  LayerSpec l;
  l.name = "flatten";
  l.kind = LayerKind::Flatten;
  return l;
}

}  // namespace

NetworkSpec make_spec(Arch arch, const ArchOptions& opt) {
  constexpr int kAngles = 4;
  if (opt.n_beams % kAngles != 0) throw DimensionError("beam count must be a multiple of 4");
  NetworkSpec spec;
  spec.arch = arch;
  spec.measurements = Shape::grid(opt.n_beams, 1, 2);

  LayerSpec input;
  input.kind = LayerKind::InputReshape;
  const auto relu = Activation::Relu;
  switch (arch) {
    case Arch::PiCnn:
      input.name = "PI";
      input.out = Shape::grid(opt.roi_dim, opt.roi_dim, 2);
      spec.layers = {input,
                     conv("Conv1", 16, relu, opt.leaky_slope),
                     pool("MP1", LayerKind::MaxPool, 2),
                     conv("Conv2", 32, relu, opt.leaky_slope),
                     pool("MP2", LayerKind::MaxPool, 2),
                     flatten(),
                     fc("FC1", 1024, relu),
                     fc("FC2", 1024, relu),
                     fc("FC3", opt.n_cells, opt.output_activation)};
      break;
    case Arch::DCnn:
      input.name = "reshape";
      input.out = Shape::grid(opt.n_beams / kAngles, kAngles, 2);
      spec.layers = {input,
                     conv("Conv1", 16, relu, opt.leaky_slope),
                     conv("Conv2", 32, relu, opt.leaky_slope),
                     flatten(),
                     fc("FC1", 1024, relu),
                     fc("FC2", 1024, relu),
                     fc("FC3", opt.n_cells, opt.output_activation)};
      break;
    case Arch::HCnn: {
      input.name = "reshape";
      input.out = Shape::grid(opt.n_beams / kAngles, kAngles, 2);
      const auto leaky = Activation::LeakyRelu;
      spec.layers = {input,
                     conv("Conv1", 8, leaky, opt.leaky_slope),
                     pool("AP", LayerKind::AvgPool, 1),
                     conv("Conv2", 14, leaky, opt.leaky_slope),
                     flatten(),
                     fc("FC", opt.n_cells, opt.output_activation, opt.leaky_slope)};
      break;
    }
  }
  return chain_shapes(std::move(spec));
}

std::size_t ModelParams::n_parameters() const {
  std::size_t n = 0;
  for (const auto& p : layers) n += p.W.size() + p.b.size();
  return n;
}

ModelParams init_params(const NetworkSpec& spec, Rng& rng) {
  ModelParams m;
  m.spec = spec;
  m.layers.resize(spec.layers.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& ly = spec.layers[l];
    LayerParams& p = m.layers[l];
    int fan_in = 0;
    if (ly.kind == LayerKind::Conv) {
      fan_in = ly.kh * ly.kw * ly.in.c;
      p.W.resize(fan_in, ly.filters);
      p.b = Eigen::VectorXd::Zero(ly.filters);
    } else if (ly.kind == LayerKind::Dense) {
      fan_in = ly.in.size();
      p.W.resize(ly.units, fan_in);
      p.b = Eigen::VectorXd::Zero(ly.units);
    } else {
      continue;
    }
    const double std = std::sqrt(2.0 / fan_in);
    for (Eigen::Index k = 0; k < p.W.size(); ++k) p.W.data()[k] = std * normal(rng);
  }
  return m;
}

const Batch& Network::forward(const Batch& x) {
  const auto& spec = params_->spec;
  const std::size_t n = spec.layers.size();
  if (x.cols() != spec.input().size()) {
    throw DimensionError("network input has " + std::to_string(x.cols()) + " features, " +
                         std::string(to_string(spec.arch)) + " expects " +
                         std::to_string(spec.input().size()));
  }
  acts_.resize(n + 1);
  cols_.resize(n);
  argmax_.resize(n);
  acts_[0] = x;
  for (std::size_t l = 0; l < n; ++l) {
    const LayerSpec& ly = spec.layers[l];
    const LayerParams& p = params_->layers[l];
    switch (ly.kind) {
      case LayerKind::InputReshape:
      case LayerKind::Flatten:
        acts_[l + 1] = acts_[l];
        break;
      case LayerKind::Conv:
        kernels::conv_forward(acts_[l], ly.in, ly, p, cols_[l], acts_[l + 1]);
        break;
      case LayerKind::MaxPool:
        kernels::maxpool_forward(acts_[l], ly, acts_[l + 1], argmax_[l]);
        break;
      case LayerKind::AvgPool:
        kernels::avgpool_forward(acts_[l], ly, acts_[l + 1]);
        break;
      case LayerKind::Dense:
        kernels::dense_forward(acts_[l], ly, p, acts_[l + 1]);
        break;
    }
  }
  if (params_->output_offset.size() != 0) acts_[n].rowwise() += params_->output_offset.transpose();
  return acts_[n];
}

Gradients Network::backward(const Batch& d_output) {
  const auto& spec = params_->spec;
  const std::size_t n = spec.layers.size();
  if (acts_.size() != n + 1) throw NumericError("backward called before forward");
  if (d_output.rows() != acts_[n].rows() || d_output.cols() != acts_[n].cols()) {
    throw DimensionError("output gradient shape does not match the forward pass");
  }
  if (!d_output.allFinite()) throw NumericError("non-finite gradient reached the output layer");

  Gradients g;
  g.layers.resize(n);
  Batch d = d_output;
  Batch dx;
  for (std::size_t l = n; l-- > 0;) {
    const LayerSpec& ly = spec.layers[l];
    const LayerParams& p = params_->layers[l];
    switch (ly.kind) {
      case LayerKind::InputReshape:
      case LayerKind::Flatten:
        continue;
      case LayerKind::Conv:
        kernels::conv_backward(d, acts_[l + 1], cols_[l], ly, p, g.layers[l], &dx);
        break;
      case LayerKind::MaxPool:
        kernels::maxpool_backward(d, ly, argmax_[l], dx);
        break;
      case LayerKind::AvgPool:
        kernels::avgpool_backward(d, ly, dx);
        break;
      case LayerKind::Dense:
        kernels::dense_backward(d, acts_[l + 1], acts_[l], ly, p, g.layers[l], &dx);
        break;
    }
    d.swap(dx);
  }
  g.input = std::move(d);
  return g;
}

}  // namespace lastomo
