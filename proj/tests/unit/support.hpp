#pragma once

#include "lastomo/config.hpp"
#include "lastomo/pipeline.hpp"

#include <filesystem>
#include <string>

namespace lastomo::test {

inline std::filesystem::path source_dir() { return LASTOMO_SOURCE_DIR; }

inline const PipelineConfig& paper_config() {
  static const PipelineConfig c = load_config(source_dir() / "configs" / "paper.json");
  return c;
}

inline const Pipeline& paper_pipeline() {
  static const Pipeline p(paper_config());
  return p;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lastomo_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace lastomo::test
