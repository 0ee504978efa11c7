#pragma once

#include "lastomo/geometry.hpp"
#include "lastomo/phantom.hpp"
#include "lastomo/pi_layer.hpp"
#include "lastomo/training.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace lastomo {

// Peak coordinates use the blob convention: x = row + 1, y = col + 1.
struct PeakMatch {
  double x_c = 0.0;
  double y_c = 0.0;
  double true_amp = 0.0;  // phantom value at the pixel nearest the center
  int row_r = 0;          // reconstructed peak pixel
  int col_r = 0;
  double recon_amp = 0.0;

  double x_r() const { return row_r + 1.0; }
  double y_r() const { return col_r + 1.0; }
};

// For each blob, the argmax of the image over the RoI pixels closer to its
// center than to any other center (ties to the lower blob index, argmax ties
// to the lowest row-major pixel). Throws RangeError for centers outside the RoI.
std::vector<PeakMatch> find_matched_peaks(const Image& recon, const std::vector<GaussianBlob>& blobs,
                                          const PhantomParams& params, const SensingMesh& mesh);

struct SampleMetrics {
  double d_peak = 0.0;
  double e_peak = 0.0;
  double e_t = 0.0;
};

SampleMetrics compute_sample_metrics(const std::vector<PeakMatch>& matches,
                                     const Eigen::VectorXd& t_hat, const Eigen::VectorXd& t,
                                     double r = 40.0);

struct Aggregate {
  double d_peak = 0.0;
  double e_peak = 0.0;
  double e_t = 0.0;
  int h = 0;
};

Aggregate aggregate(const std::vector<SampleMetrics>& metrics);

struct NamedModel {
  std::string name;
  const ModelParams* model = nullptr;
};

struct SweepRow {
  std::string model;
  double snr_db = 0.0;
  Aggregate metrics;
  double wall_time_s = 0.0;  // inference + metrics for this row
};

struct EvalContext {
  const SensingMesh* mesh = nullptr;
  const PseudoInverse* pinv = nullptr;
  PhantomParams params;
  double peak_radius_px = 40.0;
};

// Noisy copies of the measurements. The draw for a sample depends only on
// (seed, sample index, snr), never on which model consumes it.
void noisy_measurements(const std::vector<const Sample*>& samples, double snr_db,
                        std::uint64_t seed, Batch& a1, Batch& a2);

std::vector<SampleMetrics> evaluate_model(const ModelParams& model,
                                          const std::vector<const Sample*>& samples,
                                          const Batch& a1, const Batch& a2, const EvalContext& ctx);

// Rows ordered by model (as given), then SNR (as given).
std::vector<SweepRow> snr_sweep(const std::vector<NamedModel>& models,
                                const std::vector<const Sample*>& test,
                                const std::vector<double>& snrs_db, std::uint64_t seed,
                                const EvalContext& ctx);

// CSV with columns model,snr_db,D_peak,E_peak,E_T,H,wall_time_s. Wall times
// are written as 0 when include_time is false.
std::string sweep_to_csv(const std::vector<SweepRow>& rows, bool include_time);

// Rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// "20:50:5" (inclusive range) or a comma list "20,35,inf".
std::vector<double> parse_snr_list(const std::string& text);

}  // namespace lastomo
