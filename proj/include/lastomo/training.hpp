#pragma once

#include "lastomo/network.hpp"
#include "lastomo/pi_layer.hpp"

#include <functional>
#include <vector>

namespace lastomo {

struct TrainConfig {
  int batch_size = 128;
  double learning_rate = 1e-3;
  double l2_penalty = 1e-4;
  int epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool deterministic = true;
  bool standardize_inputs = false;
  bool center_targets = false;  // offset outputs by the training-set mean target
  Activation output_activation = Activation::Linear;
  double leaky_slope = 0.01;
};

void validate(const TrainConfig& c);

// Mean over the batch of the unsquared Euclidean residual norms.
double loss_l2(const Batch& predictions, const Batch& targets);

// d(loss_l2)/d(predictions); rows with zero residual get zero gradient.
Batch loss_l2_grad(const Batch& predictions, const Batch& targets);

// penalty * sum of squared weights (biases excluded).
double weight_penalty(const ModelParams& params, double penalty);
void add_weight_decay(Gradients& grads, const ModelParams& params, double penalty);

struct AdamState {
  std::vector<LayerParams> m;
  std::vector<LayerParams> v;
  long step = 0;
};

AdamState make_adam_state(const ModelParams& params);

// Bias-corrected Adam update; L2 penalty must already be in grads.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               const TrainConfig& config);

// Measurement rows (B x n_beams) for both transitions -> network input rows.
// PI-CNN needs the RoI pseudo-inverse; the reshape networks ignore it.
Batch prepare_inputs(const NetworkSpec& spec, const Batch& a1, const Batch& a2,
                     const PseudoInverse* pinv);

// Applies the model's stored standardization in place (no-op if disabled).
void standardize_inputs(const ModelParams& params, Batch& x);

struct TrainingSet {
  Batch a1;       // N x n_beams
  Batch a2;
  Batch targets;  // N x n_cells
};

struct EpochStat {
  int epoch = 0;
  double mean_loss = 0.0;  // epoch mean of the data loss
  double wall_time_s = 0.0;
};

struct TrainResult {
  ModelParams model;
  std::vector<EpochStat> history;
};

using EpochCallback = std::function<void(const EpochStat&)>;

TrainResult train(const TrainingSet& data, const NetworkSpec& spec, const TrainConfig& config,
                  const PseudoInverse* pinv, const EpochCallback& on_epoch = {});

// Hierarchical temperature for each measurement row.
Batch infer_batch(const ModelParams& model, const Batch& a1, const Batch& a2,
                  const PseudoInverse* pinv);

Eigen::VectorXd infer(const ModelParams& model, const Eigen::VectorXd& a1,
                      const Eigen::VectorXd& a2, const PseudoInverse* pinv);

}  // namespace lastomo
