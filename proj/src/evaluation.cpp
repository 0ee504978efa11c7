#include "lastomo/evaluation.hpp"

#include "lastomo/errors.hpp"
#include "lastomo/image_io.hpp"
#include "lastomo/spectroscopy.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace lastomo {

std::vector<PeakMatch> find_matched_peaks(const Image& recon, const std::vector<GaussianBlob>& blobs,
                                          const PhantomParams& params, const SensingMesh& mesh) {
  const int n = mesh.fine_dim();
  if (recon.rows() != n || recon.cols() != n) {
    throw DimensionError("reconstruction must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (blobs.empty()) throw RangeError("no blobs to match");
  const int lo = mesh.roi_offset();
  const int hi = lo + mesh.roi_dim() - 1;
  std::vector<PeakMatch> out(blobs.size());
  for (std::size_t l = 0; l < blobs.size(); ++l) {
    const auto& b = blobs[l];
    const long r0 = std::lround(b.x_c) - 1;
    const long c0 = std::lround(b.y_c) - 1;
    if (!std::isfinite(b.x_c) || !std::isfinite(b.y_c) || r0 < lo || r0 > hi || c0 < lo || c0 > hi) {
      std::ostringstream os;
      os << "blob " << l << " center (" << b.x_c << ", " << b.y_c << ") lies outside the RoI";
      throw RangeError(os.str());
    }
    out[l].x_c = b.x_c;
    out[l].y_c = b.y_c;
    out[l].true_amp =
        field_value(blobs, params, FieldKind::Temperature, static_cast<double>(r0 + 1),
                    static_cast<double>(c0 + 1));
    out[l].recon_amp = -std::numeric_limits<double>::infinity();
    out[l].row_r = -1;
  }
  for (int r = lo; r <= hi; ++r) {
    for (int c = lo; c <= hi; ++c) {
      std::size_t owner = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < blobs.size(); ++l) {
        const double dx = r + 1.0 - blobs[l].x_c;
        const double dy = c + 1.0 - blobs[l].y_c;
        const double d2 = dx * dx + dy * dy;
        if (d2 < best) {
          best = d2;
          owner = l;
        }
      }
      PeakMatch& m = out[owner];
      if (recon(r, c) > m.recon_amp || m.row_r < 0) {
        m.recon_amp = recon(r, c);
        m.row_r = r;
        m.col_r = c;
      }
    }
  }
  for (std::size_t l = 0; l < out.size(); ++l) {
    if (out[l].row_r < 0) throw RangeError("blob " + std::to_string(l) + " owns no RoI pixel");
  }
  return out;
}

SampleMetrics compute_sample_metrics(const std::vector<PeakMatch>& matches,
                                     const Eigen::VectorXd& t_hat, const Eigen::VectorXd& t,
                                     double r) {
  if (matches.empty()) throw RangeError("no peak matches");
  if (!(r > 0.0)) throw RangeError("peak distance scale must be positive");
  if (t_hat.size() != t.size()) throw DimensionError("reconstruction and truth differ in length");
  const double tn = t.norm();
  if (!(tn > 0.0)) throw RangeError("ground truth is identically zero");
  SampleMetrics s;
  for (const auto& m : matches) {
    if (m.true_amp == 0.0) throw RangeError("true peak amplitude is zero");
    s.d_peak += std::hypot(m.x_r() - m.x_c, m.y_r() - m.y_c) / r;
    s.e_peak += std::abs(m.recon_amp - m.true_amp) / std::abs(m.true_amp);
  }
  const double ng = static_cast<double>(matches.size());
  s.d_peak /= ng;
  s.e_peak /= ng;
  s.e_t = (t_hat - t).norm() / tn;
  return s;
}

Aggregate aggregate(const std::vector<SampleMetrics>& metrics) {
  if (metrics.empty()) throw RangeError("cannot aggregate an empty report");
  Aggregate a;
  for (const auto& m : metrics) {
    a.d_peak += m.d_peak;
    a.e_peak += m.e_peak;
    a.e_t += m.e_t;
  }
  a.h = static_cast<int>(metrics.size());
  a.d_peak /= a.h;
  a.e_peak /= a.h;
  a.e_t /= a.h;
  return a;
}

void noisy_measurements(const std::vector<const Sample*>& samples, double snr_db,
                        std::uint64_t seed, Batch& a1, Batch& a2) {
  if (samples.empty()) throw RangeError("no samples");
  const Eigen::Index nb = samples.front()->a1.size();
  a1.resize(static_cast<Eigen::Index>(samples.size()), nb);
  a2.resize(a1.rows(), nb);
  const std::uint64_t snr_key = std::bit_cast<std::uint64_t>(snr_db);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const Sample& s = *samples[k];
    if (std::isinf(snr_db) && snr_db > 0) {
      a1.row(k) = s.a1.transpose();
      a2.row(k) = s.a2.transpose();
      continue;
    }
    Rng rng(derive_seed(seed, "noise", static_cast<std::uint64_t>(s.index), snr_key));
    a1.row(k) = add_noise(s.a1, snr_db, rng).transpose();
    a2.row(k) = add_noise(s.a2, snr_db, rng).transpose();
  }
}

std::vector<SampleMetrics> evaluate_model(const ModelParams& model,
                                          const std::vector<const Sample*>& samples,
                                          const Batch& a1, const Batch& a2, const EvalContext& ctx) {
  if (!ctx.mesh) throw ConfigError("evaluation needs a mesh");
  if (a1.rows() != static_cast<Eigen::Index>(samples.size())) {
    throw DimensionError("measurement rows do not match the sample list");
  }
  std::vector<SampleMetrics> out;
  out.reserve(samples.size());
  constexpr Eigen::Index kChunk = 128;
  for (Eigen::Index start = 0; start < a1.rows(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, a1.rows() - start);
    const Batch pred = infer_batch(model, a1.middleRows(start, n), a2.middleRows(start, n), ctx.pinv);
    for (Eigen::Index b = 0; b < n; ++b) {
      const Sample& s = *samples[start + b];
      const Eigen::VectorXd t_hat = pred.row(b).transpose();
      const Image img = vector_to_image(t_hat, *ctx.mesh);
      const auto matches = find_matched_peaks(img, s.blobs, ctx.params, *ctx.mesh);
      out.push_back(compute_sample_metrics(matches, t_hat, s.t, ctx.peak_radius_px));
    }
  }
  return out;
}

std::vector<SweepRow> snr_sweep(const std::vector<NamedModel>& models,
                                const std::vector<const Sample*>& test,
                                const std::vector<double>& snrs_db, std::uint64_t seed,
                                const EvalContext& ctx) {
  if (models.empty()) throw ConfigError("sweep needs at least one model");
  for (const auto& m : models) {
    if (!m.model) throw ConfigError("model '" + m.name + "' is missing");
  }
  if (snrs_db.empty()) throw ConfigError("sweep needs at least one SNR level");
  std::vector<SweepRow> rows(models.size() * snrs_db.size());
  Batch a1, a2;
  for (std::size_t s = 0; s < snrs_db.size(); ++s) {
    noisy_measurements(test, snrs_db[s], seed, a1, a2);
    for (std::size_t m = 0; m < models.size(); ++m) {
      const auto t0 = std::chrono::steady_clock::now();
      SweepRow& row = rows[m * snrs_db.size() + s];
      row.model = models[m].name;
      row.snr_db = snrs_db[s];
      row.metrics = aggregate(evaluate_model(*models[m].model, test, a1, a2, ctx));
      row.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows, bool include_time) {
  std::string out = "model,snr_db,D_peak,E_peak,E_T,H,wall_time_s\n";
  for (const auto& r : rows) {
    out += r.model + "," + format_double(r.snr_db) + "," + format_double(r.metrics.d_peak) + "," +
           format_double(r.metrics.e_peak) + "," + format_double(r.metrics.e_t) + "," +
           std::to_string(r.metrics.h) + "," + format_double(include_time ? r.wall_time_s : 0.0) +
           "\n";
  }
  return out;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DimensionError("spearman needs two equal series");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    sab += (ra[k] - ma) * (rb[k] - mb);
    saa += (ra[k] - ma) * (ra[k] - ma);
    sbb += (rb[k] - mb) * (rb[k] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::istringstream in(text);
    std::string f;
    while (std::getline(in, f, ':')) parts.push_back(parse_double(f));
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0] ||
        !std::isfinite(parts[0]) || !std::isfinite(parts[1])) {
      throw ConfigError("SNR range must be lo:hi:step with step > 0 and hi >= lo, got '" + text + "'");
    }
    const long n = std::lround(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    for (long k = 0; k <= n; ++k) out.push_back(parts[0] + static_cast<double>(k) * parts[2]);
    return out;
  }
  std::istringstream in(text);
  std::string f;
  while (std::getline(in, f, ',')) out.push_back(parse_double(f));
  if (out.empty()) throw ConfigError("empty SNR list");
  for (double v : out) {
    if (std::isnan(v)) throw ConfigError("SNR values must be numbers");
  }
  return out;
}

}  // namespace lastomo
