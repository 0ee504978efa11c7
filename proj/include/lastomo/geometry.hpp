#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lastomo {

// Octagonal sensing region: a square with four 45-degree corner cuts. The
// central square (the RoI) is meshed finely, the rest of the octagon coarsely.
struct MeshConfig {
  double bounding_side_mm = 345.6;
  double roi_side_mm = 144.0;
  double fine_cell_mm = 3.6;
  double coarse_cell_mm = 14.4;
  double corner_cut_mm = 100.8;  // leg of each corner triangle
  int expected_background_cells = 364;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Hierarchical mesh. Frame: origin at the bottom-left of the bounding square,
// x to the right, y upward. Grids are addressed with row 0 at the top.
//
// Global cell index j: [0, n_roi) are RoI cells in row-major order, then
// [n_roi, n_cells) are background cells in row-major coarse-grid order.
class SensingMesh {
 public:
  static SensingMesh build(const MeshConfig& config = {});

  const MeshConfig& config() const { return config_; }

  int fine_dim() const { return fine_dim_; }      // H_F = W_F
  int roi_dim() const { return roi_dim_; }        // H_RoI = W_RoI
  int coarse_dim() const { return coarse_dim_; }  // coarse cells per side
  int patch_dim() const { return patch_dim_; }    // fine pixels per coarse cell side
  int roi_offset() const { return roi_offset_; }  // first RoI fine row/col
  int roi_coarse_offset() const { return roi_offset_ / patch_dim_; }

  int n_roi() const { return roi_dim_ * roi_dim_; }
  int n_background() const { return static_cast<int>(background_cells_.size()); }
  int n_cells() const { return n_roi() + n_background(); }
  int n_exterior_pixels() const { return n_exterior_pixels_; }

  double fine_cell_mm() const { return config_.fine_cell_mm; }
  double coarse_cell_mm() const { return config_.coarse_cell_mm; }
  double side_mm() const { return config_.bounding_side_mm; }
  double roi_lo_mm() const { return roi_offset_ * config_.fine_cell_mm; }
  double roi_hi_mm() const { return (roi_offset_ + roi_dim_) * config_.fine_cell_mm; }
  Point2 center() const { return {side_mm() / 2.0, side_mm() / 2.0}; }

  // Global index of RoI cell at local (row, col), both in [0, roi_dim).
  int roi_index(int row, int col) const { return row * roi_dim_ + col; }

  // Global index of a coarse cell, or -1 if it is an RoI block or exterior.
  int background_index(int coarse_row, int coarse_col) const {
    return background_map_[coarse_row * coarse_dim_ + coarse_col];
  }
  // Coarse (row, col) of background cell k in [0, n_background).
  std::array<int, 2> background_cell(int k) const { return background_cells_[k]; }

  // Global cell owning fine pixel (row, col), or -1 for exterior pixels.
  int pixel_owner(int row, int col) const { return pixel_owner_[row * fine_dim_ + col]; }
  bool is_exterior_pixel(int row, int col) const { return pixel_owner(row, col) < 0; }

  bool coarse_in_region(int coarse_row, int coarse_col) const {
    return region_mask_[coarse_row * coarse_dim_ + coarse_col];
  }
  bool coarse_in_roi(int coarse_row, int coarse_col) const;

  // Cell containing point p (mm), or nullopt outside the union of mesh cells.
  std::optional<int> cell_at(Point2 p) const;
  bool contains(Point2 p) const { return cell_at(p).has_value(); }

  // Hash of the mesh configuration, for caching derived quantities.
  std::uint64_t fingerprint() const;

 private:
  MeshConfig config_;
  int fine_dim_ = 0;
  int roi_dim_ = 0;
  int coarse_dim_ = 0;
  int patch_dim_ = 0;
  int roi_offset_ = 0;
  int n_exterior_pixels_ = 0;
  std::vector<bool> region_mask_;           // coarse grid, true if inside octagon
  std::vector<int> background_map_;         // coarse grid -> global j or -1
  std::vector<std::array<int, 2>> background_cells_;
  std::vector<int> pixel_owner_;            // fine grid -> global j or -1
};

struct BeamConfig {
  std::vector<double> angles_deg = {0.0, 45.0, 90.0, 135.0};
  int beams_per_angle = 8;
  double spacing_mm = 18.0;
};

// A straight laser path: point(t) = origin + t * direction, |direction| = 1.
// offset_mm is the signed distance of the line from the region center along
// the normal (-sin, cos).
struct Beam {
  int index = 0;
  int angle_index = 0;
  int offset_rank = 0;
  double angle_deg = 0.0;
  double offset_mm = 0.0;
  Point2 direction;
  Point2 origin;
};

struct BeamSet {
  BeamConfig config;
  std::vector<Beam> beams;  // index = angle_index * beams_per_angle + offset_rank

  int size() const { return static_cast<int>(beams.size()); }
  int n_angles() const { return static_cast<int>(config.angles_deg.size()); }
  int beams_per_angle() const { return config.beams_per_angle; }
};

BeamSet build_beams(const BeamConfig& config, Point2 center);
inline BeamSet build_beams(const BeamConfig& config, const SensingMesh& mesh) {
  return build_beams(config, mesh.center());
}

struct Segment {
  Point2 entry;
  Point2 exit;
  double t_entry = 0.0;
  double t_exit = 0.0;
  double length_mm = 0.0;  // in-mesh length; 0 for a miss

  bool empty() const { return length_mm <= 0.0; }
};

// Extent of a beam inside the union of mesh cells (staircase boundary),
// found by walking the coarse grid.
Segment clip_beam(const Beam& beam, const SensingMesh& mesh);

struct Chord {
  int cell = 0;          // global j
  double t_entry = 0.0;  // along the beam, mm
  double length_mm = 0.0;
};

// Per-cell chord lengths of one beam, ordered by entry parameter. The RoI is
// walked on the fine grid, the background on the coarse grid.
std::vector<Chord> traverse_chords(const Beam& beam, const SensingMesh& mesh);

// Chord-length matrix L (cm), partitioned as [L_roi | L_bg].
struct SensitivityMatrix {
  Eigen::MatrixXd L;                // n_beams x n_cells, cm
  int n_roi = 0;
  Eigen::VectorXd clipped_length_cm;  // per beam
  std::uint64_t geometry_fingerprint = 0;

  int n_beams() const { return static_cast<int>(L.rows()); }
  int n_cells() const { return static_cast<int>(L.cols()); }
  auto roi() const { return L.leftCols(n_roi); }
  auto background() const { return L.rightCols(L.cols() - n_roi); }
};

SensitivityMatrix build_sensitivity(const BeamSet& beams, const SensingMesh& mesh);

std::string sensitivity_to_csv(const SensitivityMatrix& s);

}  // namespace lastomo
