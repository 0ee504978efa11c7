#include "lastomo/geometry.hpp"

#include "lastomo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>
#include <iomanip>
#include <limits>

namespace lastomo {
namespace {

// Integer ratio num/den, or throw if den does not divide num.
int exact_ratio(double num, double den, const char* what) {
  if (!(den > 0.0) || !(num > 0.0)) {
    throw DimensionError(std::string(what) + ": dimensions must be positive");
  }
  const double q = num / den;
  const double n = std::round(q);
  if (std::abs(q - n) > 1e-9 * std::max(1.0, q) || n < 1.0) {
    std::ostringstream os;
    os << what << ": " << num << " is not a multiple of " << den;
    throw DimensionError(os.str());
  }
  return static_cast<int>(n);
}

struct GridSpan {
  int row;  // from the top
  int col;
  double t0;
  double t1;
};

// Parametric crossing walk over an n x n grid of cells of size h whose
// bottom-left corner is (x0, y0), restricted to t in [ta, tb].
std::vector<GridSpan> grid_walk(Point2 o, Point2 d, double ta, double tb, double x0, double y0,
                                double h, int n) {
  std::vector<double> ts;
  ts.reserve(2 * (n + 1) + 2);
  ts.push_back(ta);
  ts.push_back(tb);
  for (int k = 0; k <= n; ++k) {
    if (d.x != 0.0) {
      const double t = (x0 + k * h - o.x) / d.x;
      if (t > ta && t < tb) ts.push_back(t);
    }
    if (d.y != 0.0) {
      const double t = (y0 + k * h - o.y) / d.y;
      if (t > ta && t < tb) ts.push_back(t);
    }
  }
  std::sort(ts.begin(), ts.end());

  std::vector<GridSpan> spans;
  constexpr double kMinSpan = 1e-12;
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const double t0 = ts[k];
    const double t1 = ts[k + 1];
    if (t1 - t0 <= kMinSpan) continue;
    const double tm = 0.5 * (t0 + t1);
    const double mx = o.x + tm * d.x;
    const double my = o.y + tm * d.y;
    const int col = std::clamp(static_cast<int>(std::floor((mx - x0) / h)), 0, n - 1);
    const int row_up = std::clamp(static_cast<int>(std::floor((my - y0) / h)), 0, n - 1);
    spans.push_back({n - 1 - row_up, col, t0, t1});
  }
  return spans;
}

// Liang-Barsky clip of the infinite line against [lo, hi]^2.
bool clip_to_square(Point2 o, Point2 d, double lo, double hi, double& ta, double& tb) {
  ta = -std::numeric_limits<double>::infinity();
  tb = std::numeric_limits<double>::infinity();
  const double p[2] = {o.x, o.y};
  const double v[2] = {d.x, d.y};
  for (int a = 0; a < 2; ++a) {
    if (v[a] == 0.0) {
      if (p[a] < lo || p[a] > hi) return false;
      continue;
    }
    double t0 = (lo - p[a]) / v[a];
    double t1 = (hi - p[a]) / v[a];
    if (t0 > t1) std::swap(t0, t1);
    ta = std::max(ta, t0);
    tb = std::min(tb, t1);
  }
  return tb > ta;
}

void require_direction(const Beam& beam) {
  const double n = std::hypot(beam.direction.x, beam.direction.y);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw GeometryError("beam " + std::to_string(beam.index) + " has a degenerate direction");
  }
}

Point2 unit(Point2 d) {
  const double n = std::hypot(d.x, d.y);
  return {d.x / n, d.y / n};
}

}  // namespace

SensingMesh SensingMesh::build(const MeshConfig& config) {
  SensingMesh m;
  m.config_ = config;
  m.coarse_dim_ = exact_ratio(config.bounding_side_mm, config.coarse_cell_mm, "bounding square");
  m.patch_dim_ = exact_ratio(config.coarse_cell_mm, config.fine_cell_mm, "coarse cell");
  m.fine_dim_ = m.coarse_dim_ * m.patch_dim_;
  m.roi_dim_ = exact_ratio(config.roi_side_mm, config.fine_cell_mm, "RoI side");
  if (config.roi_side_mm >= config.bounding_side_mm) {
    throw DimensionError("RoI must be smaller than the bounding square");
  }
  const double margin = 0.5 * (config.bounding_side_mm - config.roi_side_mm);
  const int margin_coarse = exact_ratio(margin, config.coarse_cell_mm, "RoI margin");
  m.roi_offset_ = margin_coarse * m.patch_dim_;

  const int nc = m.coarse_dim_;
  const double s = config.bounding_side_mm;
  const double cut = config.corner_cut_mm;
  const double tol = 1e-9 * s;
  m.region_mask_.assign(static_cast<std::size_t>(nc * nc), false);
  for (int r = 0; r < nc; ++r) {
    for (int c = 0; c < nc; ++c) {
      const double x = (c + 0.5) * config.coarse_cell_mm;
      const double y = s - (r + 0.5) * config.coarse_cell_mm;
      const bool inside = x + y > cut + tol && (s - x) + y > cut + tol &&
                          x + (s - y) > cut + tol && (s - x) + (s - y) > cut + tol;
      m.region_mask_[r * nc + c] = inside;
    }
  }

  m.background_map_.assign(static_cast<std::size_t>(nc * nc), -1);
  for (int r = 0; r < nc; ++r) {
    for (int c = 0; c < nc; ++c) {
      if (m.coarse_in_roi(r, c)) {
        if (!m.region_mask_[r * nc + c]) {
          throw GeometryError("RoI extends beyond the octagonal region");
        }
        continue;
      }
      if (!m.region_mask_[r * nc + c]) continue;
      m.background_map_[r * nc + c] = m.n_roi() + static_cast<int>(m.background_cells_.size());
      m.background_cells_.push_back({r, c});
    }
  }
  if (config.expected_background_cells >= 0 &&
      m.n_background() != config.expected_background_cells) {
    throw GeometryError("background cell count " + std::to_string(m.n_background()) +
                        " does not match the expected " +
                        std::to_string(config.expected_background_cells));
  }

  const int nf = m.fine_dim_;
  m.pixel_owner_.assign(static_cast<std::size_t>(nf * nf), -1);
  m.n_exterior_pixels_ = 0;
  for (int r = 0; r < nf; ++r) {
    for (int c = 0; c < nf; ++c) {
      int owner = -1;
      const int rr = r - m.roi_offset_;
      const int cc = c - m.roi_offset_;
      if (rr >= 0 && rr < m.roi_dim_ && cc >= 0 && cc < m.roi_dim_) {
        owner = m.roi_index(rr, cc);
      } else {
        owner = m.background_index(r / m.patch_dim_, c / m.patch_dim_);
      }
      m.pixel_owner_[r * nf + c] = owner;
      if (owner < 0) ++m.n_exterior_pixels_;
    }
  }
  return m;
}

bool SensingMesh::coarse_in_roi(int coarse_row, int coarse_col) const {
  const int lo = roi_coarse_offset();
  const int hi = lo + roi_dim_ / patch_dim_;
  return coarse_row >= lo && coarse_row < hi && coarse_col >= lo && coarse_col < hi;
}

std::optional<int> SensingMesh::cell_at(Point2 p) const {
  const double s = side_mm();
  if (!(p.x >= 0.0 && p.x < s && p.y > 0.0 && p.y <= s)) return std::nullopt;
  const int cc = static_cast<int>(std::floor(p.x / coarse_cell_mm()));
  const int cr = static_cast<int>(std::floor((s - p.y) / coarse_cell_mm()));
  if (cc < 0 || cc >= coarse_dim_ || cr < 0 || cr >= coarse_dim_) return std::nullopt;
  if (!coarse_in_region(cr, cc)) return std::nullopt;
  if (coarse_in_roi(cr, cc)) {
    const int fc = static_cast<int>(std::floor(p.x / fine_cell_mm())) - roi_offset_;
    const int fr = static_cast<int>(std::floor((s - p.y) / fine_cell_mm())) - roi_offset_;
    return roi_index(std::clamp(fr, 0, roi_dim_ - 1), std::clamp(fc, 0, roi_dim_ - 1));
  }
  return background_index(cr, cc);
}

std::uint64_t SensingMesh::fingerprint() const {
  const double vals[] = {config_.bounding_side_mm, config_.roi_side_mm, config_.fine_cell_mm,
                         config_.coarse_cell_mm, config_.corner_cut_mm};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : vals) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

BeamSet build_beams(const BeamConfig& config, Point2 center) {
  if (!(config.spacing_mm > 0.0)) throw RangeError("beam spacing must be positive");
  if (config.beams_per_angle < 1) throw RangeError("beams per angle must be at least 1");
  if (config.angles_deg.empty()) throw RangeError("at least one projection angle is required");

  BeamSet set;
  set.config = config;
  const int n = config.beams_per_angle;
  for (std::size_t a = 0; a < config.angles_deg.size(); ++a) {
    const double theta = config.angles_deg[a] * std::numbers::pi / 180.0;
    const Point2 dir{std::cos(theta), std::sin(theta)};
    const Point2 normal{-dir.y, dir.x};
    for (int k = 0; k < n; ++k) {
      Beam b;
      b.angle_index = static_cast<int>(a);
      b.offset_rank = k;
      b.index = static_cast<int>(a) * n + k;
      b.angle_deg = config.angles_deg[a];
      b.offset_mm = (k - 0.5 * (n - 1)) * config.spacing_mm;
      b.direction = dir;
      b.origin = {center.x + b.offset_mm * normal.x, center.y + b.offset_mm * normal.y};
      set.beams.push_back(b);
    }
  }
  return set;
}

Segment clip_beam(const Beam& beam, const SensingMesh& mesh) {
  require_direction(beam);
  const Point2 d = unit(beam.direction);
  const Point2 o = beam.origin;
  Segment seg;
  double ta = 0.0;
  double tb = 0.0;
  if (!clip_to_square(o, d, 0.0, mesh.side_mm(), ta, tb)) return seg;

  const auto spans =
      grid_walk(o, d, ta, tb, 0.0, 0.0, mesh.coarse_cell_mm(), mesh.coarse_dim());
  bool found = false;
  for (const auto& sp : spans) {
    if (!mesh.coarse_in_region(sp.row, sp.col)) continue;
    if (!found) {
      seg.t_entry = sp.t0;
      found = true;
    }
    seg.t_exit = sp.t1;
    seg.length_mm += sp.t1 - sp.t0;
  }
  if (!found) return Segment{};
  seg.entry = {o.x + seg.t_entry * d.x, o.y + seg.t_entry * d.y};
  seg.exit = {o.x + seg.t_exit * d.x, o.y + seg.t_exit * d.y};
  return seg;
}

std::vector<Chord> traverse_chords(const Beam& beam, const SensingMesh& mesh) {
  require_direction(beam);
  const Point2 d = unit(beam.direction);
  const Point2 o = beam.origin;
  std::vector<Chord> chords;
  double ta = 0.0;
  double tb = 0.0;
  if (!clip_to_square(o, d, 0.0, mesh.side_mm(), ta, tb)) return chords;

  for (const auto& sp :
       grid_walk(o, d, ta, tb, 0.0, 0.0, mesh.coarse_cell_mm(), mesh.coarse_dim())) {
    const int j = mesh.background_index(sp.row, sp.col);
    if (j >= 0) chords.push_back({j, sp.t0, sp.t1 - sp.t0});
  }

  double ra = 0.0;
  double rb = 0.0;
  if (clip_to_square(o, d, mesh.roi_lo_mm(), mesh.roi_hi_mm(), ra, rb)) {
    for (const auto& sp : grid_walk(o, d, ra, rb, mesh.roi_lo_mm(), mesh.roi_lo_mm(),
                                    mesh.fine_cell_mm(), mesh.roi_dim())) {
      chords.push_back({mesh.roi_index(sp.row, sp.col), sp.t0, sp.t1 - sp.t0});
    }
  }
  std::sort(chords.begin(), chords.end(),
            [](const Chord& a, const Chord& b) { return a.t_entry < b.t_entry; });
  return chords;
}

SensitivityMatrix build_sensitivity(const BeamSet& beams, const SensingMesh& mesh) {
  constexpr double kMmToCm = 0.1;
  SensitivityMatrix s;
  s.n_roi = mesh.n_roi();
  s.L = Eigen::MatrixXd::Zero(beams.size(), mesh.n_cells());
  s.clipped_length_cm = Eigen::VectorXd::Zero(beams.size());
  s.geometry_fingerprint = mesh.fingerprint();
  for (const Beam& b : beams.beams) {
    for (const Chord& ch : traverse_chords(b, mesh)) {
      s.L(b.index, ch.cell) += ch.length_mm * kMmToCm;
    }
    s.clipped_length_cm(b.index) = clip_beam(b, mesh).length_mm * kMmToCm;
  }
  return s;
}

std::string sensitivity_to_csv(const SensitivityMatrix& s) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < s.L.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.L.cols(); ++j) {
      if (j) os << ',';
      os << s.L(i, j);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace lastomo
