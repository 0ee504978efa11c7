#include "lastomo/phantom.hpp"

#include "lastomo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace lastomo {

double GaussianBlob::density(double x, double y) const {
  const double dx = (x - x_c) / sigma_x;
  const double dy = (y - y_c) / sigma_y;
  return peak_density() * std::exp(-0.5 * (dx * dx + dy * dy));
}

double GaussianBlob::peak_density() const {
  return 1.0 / (2.0 * std::numbers::pi * sigma_x * sigma_y);
}

void validate(const PhantomParams& p) {
  if (!(p.t_min < p.t_peak_lo && p.t_peak_lo < p.t_peak_hi)) {
    throw ConfigError("phantom temperatures must satisfy t_min < t_peak_lo < t_peak_hi");
  }
  if (!(p.x_min < p.x_peak_lo && p.x_peak_lo < p.x_peak_hi)) {
    throw ConfigError("phantom concentrations must satisfy x_min < x_peak_lo < x_peak_hi");
  }
  if (!(p.center_lo < p.center_hi)) throw ConfigError("empty blob center range");
  if (!(p.sigma_lo > 0.0 && p.sigma_lo < p.sigma_hi)) throw ConfigError("invalid blob sigma range");
  if (!(p.scale_lo > 0.0 && p.scale_lo < p.scale_hi && p.scale_hi <= 1.0)) {
    throw ConfigError("blob scale range must lie in (0, 1]");
  }
}

namespace {

void check_blobs(const std::vector<GaussianBlob>& blobs) {
  if (blobs.empty()) throw RangeError("a phantom needs at least one blob");
  for (const auto& b : blobs) {
    if (!(b.sigma_x > 0.0 && b.sigma_y > 0.0)) {
      throw RangeError("blob standard deviations must be positive");
    }
  }
}

double amplitude(const GaussianBlob& b, FieldKind kind) {
  return kind == FieldKind::Temperature ? b.temp_amp : b.conc_amp;
}

double floor_value(const PhantomParams& p, FieldKind kind) {
  return kind == FieldKind::Temperature ? p.t_min : p.x_min;
}

}  // namespace

double field_value(const std::vector<GaussianBlob>& blobs, const PhantomParams& params,
                   FieldKind kind, double x, double y) {
  check_blobs(blobs);
  double v = 0.0;
  for (const auto& b : blobs) {
    v += b.scale * amplitude(b, kind) / b.peak_density() * b.density(x, y);
  }
  return v + floor_value(params, kind);
}

Image gaussian_field(const std::vector<GaussianBlob>& blobs, const PhantomParams& params,
                     FieldKind kind, int dim) {
  check_blobs(blobs);
  Image img = Image::Constant(dim, dim, floor_value(params, kind));
  std::vector<double> gx(dim);
  std::vector<double> gy(dim);
  for (const auto& b : blobs) {
    // f / max f is separable: exp(-dx^2/2) * exp(-dy^2/2).
    for (int k = 0; k < dim; ++k) {
      const double dx = (k + 1 - b.x_c) / b.sigma_x;
      const double dy = (k + 1 - b.y_c) / b.sigma_y;
      gx[k] = std::exp(-0.5 * dx * dx);
      gy[k] = std::exp(-0.5 * dy * dy);
    }
    const double amp = b.scale * amplitude(b, kind);
    for (int r = 0; r < dim; ++r) {
      for (int c = 0; c < dim; ++c) img(r, c) += amp * gx[r] * gy[c];
    }
  }
  return img;
}

Eigen::VectorXd rasterize(const Image& field, const SensingMesh& mesh) {
  const int nf = mesh.fine_dim();
  if (field.rows() != nf || field.cols() != nf) {
    throw DimensionError("field is " + std::to_string(field.rows()) + "x" +
                         std::to_string(field.cols()) + ", mesh expects " + std::to_string(nf) +
                         "x" + std::to_string(nf));
  }
  Eigen::VectorXd v(mesh.n_cells());
  const int off = mesh.roi_offset();
  for (int r = 0; r < mesh.roi_dim(); ++r) {
    for (int c = 0; c < mesh.roi_dim(); ++c) v(mesh.roi_index(r, c)) = field(off + r, off + c);
  }
  const int p = mesh.patch_dim();
  for (int k = 0; k < mesh.n_background(); ++k) {
    const auto [cr, cc] = mesh.background_cell(k);
    v(mesh.n_roi() + k) = field.block(cr * p, cc * p, p, p).mean();
  }
  return v;
}

std::vector<GaussianBlob> draw_blobs(Rng& rng, const PhantomParams& params, int n_blobs) {
  if (n_blobs < 1) throw RangeError("blob count must be at least 1");
  using U = std::uniform_real_distribution<double>;
  U center(params.center_lo, params.center_hi);
  U sigma(params.sigma_lo, params.sigma_hi);
  U scale(params.scale_lo, params.scale_hi);
  U temp(params.t_peak_lo - params.t_min, params.t_peak_hi - params.t_min);
  U conc(params.x_peak_lo - params.x_min, params.x_peak_hi - params.x_min);
  std::vector<GaussianBlob> blobs(n_blobs);
  for (auto& b : blobs) {
    b.x_c = center(rng);
    b.y_c = center(rng);
    b.sigma_x = sigma(rng);
    b.sigma_y = sigma(rng);
    b.scale = scale(rng);
    b.temp_amp = temp(rng);
    b.conc_amp = conc(rng);
  }
  return blobs;
}

Sample render_sample(std::vector<GaussianBlob> blobs, const PhantomParams& params,
                     const ForwardModel& model) {
  const SensingMesh& mesh = *model.mesh;
  const int nf = mesh.fine_dim();
  GasField gas;
  gas.pressure_atm = model.pressure_atm;
  gas.temperature_k = rasterize(gaussian_field(blobs, params, FieldKind::Temperature, nf), mesh);
  gas.mole_fraction = rasterize(gaussian_field(blobs, params, FieldKind::Concentration, nf), mesh);

  double bound = params.t_min;
  for (const auto& b : blobs) bound += b.scale * b.temp_amp;
  const double t_hi = gas.temperature_k.maxCoeff();
  const double t_lo = gas.temperature_k.minCoeff();
  if (t_lo < params.t_min || t_hi > bound * (1.0 + 1e-12)) {
    throw NumericError("synthesized temperature escapes its analytic bounds");
  }

  Sample s;
  s.blobs = std::move(blobs);
  s.a1 = forward_project(*model.sensitivity, absorbance_density(gas, model.lines[0]));
  s.a2 = forward_project(*model.sensitivity, absorbance_density(gas, model.lines[1]));
  s.t = std::move(gas.temperature_k);
  return s;
}

Sample draw_sample(std::uint64_t seed, const PhantomParams& params, int n_blobs,
                   const ForwardModel& model) {
  Rng rng(seed);
  Sample s = render_sample(draw_blobs(rng, params, n_blobs), params, model);
  s.seed = seed;
  return s;
}

std::vector<const Sample*> Dataset::subset(Split which) const {
  std::vector<const Sample*> out;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (split[k] == which) out.push_back(&samples[k]);
  }
  return out;
}

Dataset build_dataset(std::uint64_t master_seed, const DatasetCounts& counts,
                      const PhantomParams& params, const ForwardModel& model) {
  if (counts.n_single < 0 || counts.n_double < 0 || counts.n_train < 0 || counts.n_test < 0) {
    throw ConfigError("dataset counts must be non-negative");
  }
  const int total = counts.n_single + counts.n_double;
  if (total != counts.n_train + counts.n_test || total == 0) {
    throw ConfigError("single + double (" + std::to_string(total) + ") must equal train + test (" +
                      std::to_string(counts.n_train + counts.n_test) + ") and be nonzero");
  }
  validate(params);

  Dataset ds;
  ds.master_seed = master_seed;
  ds.counts = counts;
  ds.params = params;
  ds.samples.resize(total);
  for (int k = 0; k < total; ++k) {
    const int n_blobs = k < counts.n_single ? 1 : 2;
    ds.samples[k] = draw_sample(derive_seed(master_seed, "blob", k), params, n_blobs, model);
    ds.samples[k].index = k;
  }

  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(master_seed, "split"));
  std::shuffle(order.begin(), order.end(), split_rng);
  ds.split.assign(total, Split::Test);
  for (int k = 0; k < counts.n_train; ++k) ds.split[order[k]] = Split::Train;
  return ds;
}

}  // namespace lastomo
