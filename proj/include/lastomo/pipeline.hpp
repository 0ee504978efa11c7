#pragma once

#include "lastomo/config.hpp"
#include "lastomo/evaluation.hpp"
#include "lastomo/geometry.hpp"
#include "lastomo/phantom.hpp"
#include "lastomo/pi_layer.hpp"
#include "lastomo/training.hpp"

#include <memory>
#include <vector>

namespace lastomo {

// Mesh, beams, L and the RoI pseudo-inverse for one config, built once.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);
  Pipeline(const Pipeline&) = delete;  // forward_ points into this object
  Pipeline& operator=(const Pipeline&) = delete;

  const PipelineConfig& config() const { return config_; }
  const SensingMesh& mesh() const { return mesh_; }
  const BeamSet& beams() const { return beams_; }
  const SensitivityMatrix& sensitivity() const { return sensitivity_; }
  const PseudoInverse& pinv() const { return pinv_; }
  const ForwardModel& forward_model() const { return forward_; }
  std::uint64_t fingerprint() const { return sensitivity_.geometry_fingerprint; }

  ArchOptions arch_options() const;
  TrainConfig train_config(Arch arch) const;  // with the derived seed
  EvalContext eval_context() const;

  Dataset generate_dataset(std::uint64_t seed) const;
  Dataset generate_dataset() const { return generate_dataset(config_.seed); }

  // Trains one architecture on the given samples. The training stream is
  // derived from the master seed, train.seed and the architecture.
  TrainResult train_model(Arch arch, const std::vector<const Sample*>& samples,
                          const EpochCallback& on_epoch = {}) const;

 private:
  PipelineConfig config_;
  SensingMesh mesh_;
  BeamSet beams_;
  SensitivityMatrix sensitivity_;
  PseudoInverse pinv_;
  ForwardModel forward_;
};

TrainingSet to_training_set(const std::vector<const Sample*>& samples);

}  // namespace lastomo
