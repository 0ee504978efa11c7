#include "lastomo/pipeline.hpp"

#include "lastomo/errors.hpp"

namespace lastomo {

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  validate(config_);
  mesh_ = SensingMesh::build(config_.mesh);
  beams_ = build_beams(config_.beams, mesh_);
  sensitivity_ = build_sensitivity(beams_, mesh_);
  pinv_ = roi_pseudo_inverse(sensitivity_, config_.rcond);
  forward_.mesh = &mesh_;
  forward_.sensitivity = &sensitivity_;
  forward_.lines = config_.lines;
  forward_.pressure_atm = config_.pressure_atm;
}

ArchOptions Pipeline::arch_options() const {
  ArchOptions o;
  o.output_activation = config_.train.output_activation;
  o.leaky_slope = config_.train.leaky_slope;
  o.n_beams = beams_.size();
  o.roi_dim = mesh_.roi_dim();
  o.n_cells = mesh_.n_cells();
  return o;
}

EvalContext Pipeline::eval_context() const {
  EvalContext ctx;
  ctx.mesh = &mesh_;
  ctx.pinv = &pinv_;
  ctx.params = config_.phantom;
  ctx.peak_radius_px = mesh_.roi_dim();
  return ctx;
}

Dataset Pipeline::generate_dataset(std::uint64_t seed) const {
  return build_dataset(seed, config_.counts, config_.phantom, forward_);
}

TrainConfig Pipeline::train_config(Arch arch) const {
  TrainConfig tc = config_.train;
  tc.seed = derive_seed(config_.seed, "train", config_.train.seed, static_cast<std::uint64_t>(arch));
  return tc;
}

TrainResult Pipeline::train_model(Arch arch, const std::vector<const Sample*>& samples,
                                  const EpochCallback& on_epoch) const {
  const NetworkSpec spec = make_spec(arch, arch_options());
  return train(to_training_set(samples), spec, train_config(arch), &pinv_, on_epoch);
}

TrainingSet to_training_set(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw ConfigError("no samples for training");
  TrainingSet s;
  const auto n = static_cast<Eigen::Index>(samples.size());
  s.a1.resize(n, samples.front()->a1.size());
  s.a2.resize(n, samples.front()->a2.size());
  s.targets.resize(n, samples.front()->t.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    s.a1.row(k) = samples[k]->a1.transpose();
    s.a2.row(k) = samples[k]->a2.transpose();
    s.targets.row(k) = samples[k]->t.transpose();
  }
  return s;
}

}  // namespace lastomo
