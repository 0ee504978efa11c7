#include "lastomo/training.hpp"

#include "lastomo/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lastomo {

void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(c.l2_penalty >= 0.0)) throw ConfigError("L2 penalty must be non-negative");
  if (!(c.learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (c.epochs < 0) throw ConfigError("epoch count must be non-negative");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw ConfigError("Adam moment factors must lie in [0, 1)");
  }
  if (!(c.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

double loss_l2(const Batch& predictions, const Batch& targets) {
  if (predictions.rows() == 0) throw DimensionError("loss of an empty batch");
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
    throw DimensionError("prediction and target batches differ in shape");
  }
  double sum = 0.0;
  for (Eigen::Index b = 0; b < predictions.rows(); ++b) {
    sum += (predictions.row(b) - targets.row(b)).norm();
  }
  return sum / static_cast<double>(predictions.rows());
}

Batch loss_l2_grad(const Batch& predictions, const Batch& targets) {
  if (predictions.rows() == 0) throw DimensionError("loss of an empty batch");
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
    throw DimensionError("prediction and target batches differ in shape");
  }
  Batch g = predictions - targets;
  const double inv_b = 1.0 / static_cast<double>(g.rows());
  for (Eigen::Index b = 0; b < g.rows(); ++b) {
    const double n = g.row(b).norm();
    if (n > 0.0) {
      g.row(b) *= inv_b / n;
    } else {
      g.row(b).setZero();
    }
  }
  return g;
}

double weight_penalty(const ModelParams& params, double penalty) {
  double s = 0.0;
  for (const auto& p : params.layers) s += p.W.squaredNorm();
  return penalty * s;
}

void add_weight_decay(Gradients& grads, const ModelParams& params, double penalty) {
  if (penalty == 0.0) return;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (params.layers[l].W.size() == 0) continue;
    grads.layers[l].W += (2.0 * penalty) * params.layers[l].W;
  }
}

AdamState make_adam_state(const ModelParams& params) {
  AdamState s;
  for (const auto& p : params.layers) {
    s.m.push_back({Eigen::MatrixXd::Zero(p.W.rows(), p.W.cols()), Eigen::VectorXd::Zero(p.b.size())});
    s.v.push_back(s.m.back());
  }
  return s;
}

namespace {

template <typename Param, typename Grad, typename Moment>
void adam_update(Param& theta, const Grad& g, Moment& m, Moment& v, const TrainConfig& c,
                 double bc1, double bc2) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
  theta.array() -= c.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.epsilon);
}

}  // namespace

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               const TrainConfig& config) {
  if (state.m.size() != params.layers.size()) throw DimensionError("Adam state shape mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    LayerParams& p = params.layers[l];
    if (p.W.size() == 0) continue;
    const LayerParams& g = grads.layers[l];
    adam_update(p.W, g.W, state.m[l].W, state.v[l].W, config, bc1, bc2);
    adam_update(p.b, g.b, state.m[l].b, state.v[l].b, config, bc1, bc2);
  }
}

Batch prepare_inputs(const NetworkSpec& spec, const Batch& a1, const Batch& a2,
                     const PseudoInverse* pinv) {
  const int n_beams = spec.measurements.h;
  if (a1.rows() != a2.rows() || a1.cols() != n_beams || a2.cols() != n_beams) {
    throw DimensionError("expected two measurement blocks of " + std::to_string(n_beams) +
                         " columns with matching rows");
  }
  const Shape in = spec.input();
  Batch x(a1.rows(), in.size());
  const Batch* src[2] = {&a1, &a2};
  if (spec.arch == Arch::PiCnn) {
    if (!pinv) throw ConfigError("pi-cnn inference requires the RoI pseudo-inverse");
    if (pinv->matrix.rows() != in.h * in.w || pinv->matrix.cols() != n_beams) {
      throw DimensionError("pseudo-inverse shape does not match the pi-cnn input");
    }
    for (int ch = 0; ch < 2; ++ch) {
      const Batch c = *src[ch] * pinv->matrix.transpose();
      for (Eigen::Index b = 0; b < x.rows(); ++b) {
        for (Eigen::Index k = 0; k < c.cols(); ++k) x(b, k * 2 + ch) = c(b, k);
      }
    }
    return x;
  }
  // Row = offset rank within an angle, column = angle index.
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    for (int k = 0; k < in.h; ++k) {
      for (int a = 0; a < in.w; ++a) {
        for (int ch = 0; ch < 2; ++ch) x(b, (k * in.w + a) * 2 + ch) = (*src[ch])(b, a * in.h + k);
      }
    }
  }
  return x;
}

void standardize_inputs(const ModelParams& params, Batch& x) {
  if (!params.standardize) return;
  const int nc = static_cast<int>(params.input_mean.size());
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      const int ch = static_cast<int>(f % nc);
      x(b, f) = (x(b, f) - params.input_mean(ch)) / params.input_std(ch);
    }
  }
}

namespace {

Batch gather(const Batch& m, const std::vector<int>& order, std::size_t begin, std::size_t end) {
  Batch out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t k = begin; k < end; ++k) out.row(k - begin) = m.row(order[k]);
  return out;
}

void fit_standardization(ModelParams& model, const TrainingSet& data, const PseudoInverse* pinv) {
  const int nc = model.spec.input().c;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(nc);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(nc);
  double count = 0.0;
  constexpr Eigen::Index kChunk = 512;
  for (Eigen::Index start = 0; start < data.a1.rows(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, data.a1.rows() - start);
    const Batch x = prepare_inputs(model.spec, data.a1.middleRows(start, n),
                                   data.a2.middleRows(start, n), pinv);
    for (Eigen::Index b = 0; b < x.rows(); ++b) {
      for (Eigen::Index f = 0; f < x.cols(); ++f) {
        sum(f % nc) += x(b, f);
        sq(f % nc) += x(b, f) * x(b, f);
      }
    }
    count += static_cast<double>(x.rows() * (x.cols() / nc));
  }
  model.standardize = true;
  model.input_mean = sum / count;
  model.input_std = (sq / count - model.input_mean.cwiseProduct(model.input_mean))
                        .cwiseMax(0.0)
                        .cwiseSqrt()
                        .unaryExpr([](double s) { return s > 0.0 ? s : 1.0; });
}

}  // namespace

TrainResult train(const TrainingSet& data, const NetworkSpec& spec, const TrainConfig& config,
                  const PseudoInverse* pinv, const EpochCallback& on_epoch) {
  validate(config);
  const Eigen::Index n = data.a1.rows();
  if (n == 0) throw ConfigError("training set is empty");
  if (data.a2.rows() != n || data.targets.rows() != n) {
    throw DimensionError("training set blocks differ in row count");
  }
  if (data.targets.cols() != spec.output().size()) {
    throw DimensionError("targets do not match the network output size");
  }
  if (spec.arch == Arch::PiCnn && !pinv) {
    throw ConfigError("pi-cnn training requires the RoI pseudo-inverse");
  }

  TrainResult result;
  Rng init_rng(derive_seed(config.seed, "init"));
  result.model = init_params(spec, init_rng);
  ModelParams& model = result.model;
  if (config.standardize_inputs) fit_standardization(model, data, pinv);
  if (config.center_targets) model.output_offset = data.targets.colwise().mean().transpose();

  AdamState adam = make_adam_state(model);
  Network net(model);
  std::vector<int> order(static_cast<std::size_t>(n));
  const auto t_start = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      Batch x = prepare_inputs(spec, gather(data.a1, order, begin, end),
                               gather(data.a2, order, begin, end), pinv);
      standardize_inputs(model, x);
      const Batch targets = gather(data.targets, order, begin, end);
      const Batch& pred = net.forward(x);
      const double loss = loss_l2(pred, targets);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "training diverged: non-finite loss at epoch " << epoch << ", samples " << begin
           << ".." << end;
        throw NumericError(os.str());
      }
      loss_sum += loss * static_cast<double>(end - begin);
      Gradients g = net.backward(loss_l2_grad(pred, targets));
      add_weight_decay(g, model, config.l2_penalty);
      adam_step(model, g, adam, config);
    }

    EpochStat stat;
    stat.epoch = epoch;
    stat.mean_loss = loss_sum / static_cast<double>(n);
    stat.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.history.push_back(stat);
    if (on_epoch) on_epoch(stat);
  }
  return result;
}

Batch infer_batch(const ModelParams& model, const Batch& a1, const Batch& a2,
                  const PseudoInverse* pinv) {
  Batch x = prepare_inputs(model.spec, a1, a2, pinv);
  standardize_inputs(model, x);
  Network net(model);
  return net.forward(x);
}

Eigen::VectorXd infer(const ModelParams& model, const Eigen::VectorXd& a1,
                      const Eigen::VectorXd& a2, const PseudoInverse* pinv) {
  const Batch b1 = a1.transpose();
  const Batch b2 = a2.transpose();
  return infer_batch(model, b1, b2, pinv).row(0).transpose();
}

}  // namespace lastomo
