#pragma once

#include "lastomo/geometry.hpp"
#include "lastomo/rng.hpp"
#include "lastomo/spectroscopy.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace lastomo {

using Image = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One Gaussian inhomogeneity. Coordinates are 1-based fine-pixel units with x
// along image rows and y along image columns.
struct GaussianBlob {
  double x_c = 0.0;
  double y_c = 0.0;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double scale = 1.0;       // lambda
  double temp_amp = 0.0;    // u, K
  double conc_amp = 0.0;    // v, mole fraction

  double density(double x, double y) const;  // bivariate normal pdf
  double peak_density() const;               // pdf at the center
};

struct PhantomParams {
  double t_min = 300.0;
  double t_peak_lo = 600.0;
  double t_peak_hi = 900.0;
  double x_min = 0.01;
  double x_peak_lo = 0.10;
  double x_peak_hi = 0.12;
  double center_lo = 34.0;
  double center_hi = 65.0;
  double sigma_lo = 10.0;
  double sigma_hi = 25.0;
  double scale_lo = 0.7;
  double scale_hi = 1.0;
};

void validate(const PhantomParams& p);

enum class FieldKind { Temperature, Concentration };

// Field value at continuous pixel coordinates (x, y).
double field_value(const std::vector<GaussianBlob>& blobs, const PhantomParams& params,
                   FieldKind kind, double x, double y);

// dim x dim image; entry (r, c) is the field at x = r + 1, y = c + 1.
Image gaussian_field(const std::vector<GaussianBlob>& blobs, const PhantomParams& params,
                     FieldKind kind, int dim);

// Fine image -> hierarchical vector: RoI cells copy their pixel, background
// cells average their patch, exterior pixels are ignored.
Eigen::VectorXd rasterize(const Image& field, const SensingMesh& mesh);

// Everything needed to turn a phantom into measurements.
struct ForwardModel {
  const SensingMesh* mesh = nullptr;
  const SensitivityMatrix* sensitivity = nullptr;
  std::array<TransitionLine, 2> lines;
  double pressure_atm = 1.0;
};

struct Sample {
  std::int64_t index = 0;  // generation index within its dataset
  std::uint64_t seed = 0;
  std::vector<GaussianBlob> blobs;
  Eigen::VectorXd a1;  // noise-free absorbances, transition 1
  Eigen::VectorXd a2;
  Eigen::VectorXd t;   // hierarchical temperature, K
};

// Rebuild fields and measurements from blob metadata.
Sample render_sample(std::vector<GaussianBlob> blobs, const PhantomParams& params,
                     const ForwardModel& model);

std::vector<GaussianBlob> draw_blobs(Rng& rng, const PhantomParams& params, int n_blobs);

Sample draw_sample(std::uint64_t seed, const PhantomParams& params, int n_blobs,
                   const ForwardModel& model);

struct DatasetCounts {
  int n_single = 4500;
  int n_double = 6400;
  int n_train = 10000;
  int n_test = 900;
};

enum class Split : std::uint8_t { Train = 0, Test = 1 };

struct Dataset {
  std::uint64_t master_seed = 0;
  DatasetCounts counts;
  PhantomParams params;
  std::vector<Sample> samples;  // in generation order
  std::vector<Split> split;     // parallel to samples

  std::vector<const Sample*> subset(Split which) const;
};

// Samples [0, n_single) have one blob, the rest two. The train/test split is
// a seeded permutation of the generation indices.
Dataset build_dataset(std::uint64_t master_seed, const DatasetCounts& counts,
                      const PhantomParams& params, const ForwardModel& model);

}  // namespace lastomo
