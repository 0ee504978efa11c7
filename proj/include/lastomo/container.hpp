#pragma once

#include "lastomo/config.hpp"
#include "lastomo/geometry.hpp"
#include "lastomo/network.hpp"
#include "lastomo/phantom.hpp"
#include "lastomo/pi_layer.hpp"
#include "lastomo/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lastomo {

// Layout (all integers and floats little-endian):
//   8 bytes  magic "LASTOMO\0"
//   u32      format version
//   u32      kind
//   u64      metadata length, then UTF-8 JSON
//   u64      tensor count, then per tensor:
//            u32 name length, name, u32 rank, rank x u64 dims, f64 data (row-major)
inline constexpr std::uint32_t kContainerVersion = 1;

enum class ContainerKind : std::uint32_t { Dataset = 1, Checkpoint = 2, Matrix = 3 };
std::string_view to_string(ContainerKind k);

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  std::uint64_t numel() const;
};

struct Container {
  ContainerKind kind = ContainerKind::Matrix;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor& get(const std::string& name) const;
  const NamedTensor* find(const std::string& name) const;
  void add(std::string name, std::vector<std::uint64_t> dims, std::vector<double> data);
  void add(std::string name, const Eigen::Ref<const Eigen::MatrixXd>& m);
  Eigen::MatrixXd matrix(const std::string& name) const;
  Eigen::VectorXd vector(const std::string& name) const;
};

std::string serialize(const Container& c);
// Throws FormatError naming the byte offset on corrupt input, and on a kind
// or version mismatch.
Container deserialize(const std::string& bytes, std::optional<ContainerKind> expect = std::nullopt);

void save_container(const Container& c, const std::filesystem::path& path);
Container load_container(const std::filesystem::path& path,
                         std::optional<ContainerKind> expect = std::nullopt);

// Self-describing dataset. The metadata records the master seed, the
// generation config and the SNR-to-sigma rule.
Container dataset_to_container(const Dataset& ds, const PipelineConfig& config);
Dataset dataset_from_container(const Container& c);

Container checkpoint_to_container(const ModelParams& model, const ArchOptions& arch,
                                  const TrainConfig& train, std::uint64_t geometry_fingerprint);
struct Checkpoint {
  ModelParams model;
  ArchOptions arch;
  TrainConfig train;
  std::uint64_t geometry_fingerprint = 0;
};
Checkpoint checkpoint_from_container(const Container& c);

Container matrix_to_container(const SensitivityMatrix& s, const PseudoInverse* pinv);
SensitivityMatrix matrix_from_container(const Container& c);

}  // namespace lastomo
