#include "lastomo/spectroscopy.hpp"

#include "lastomo/errors.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace lastomo {

void validate(const TransitionLine& line) {
  if (!(line.s_ref > 0.0)) throw ConfigError("line " + line.name + ": s_ref must be positive");
  if (!(line.nu0_cm1 > 0.0)) throw ConfigError("line " + line.name + ": nu0 must be positive");
  if (!(line.t_ref_k > 0.0)) throw ConfigError("line " + line.name + ": t_ref must be positive");
  if (!(line.t_min_k < line.t_max_k)) {
    throw ConfigError("line " + line.name + ": empty temperature validity range");
  }
  for (int k = 0; k <= 100; ++k) {
    const double t = line.t_min_k + (line.t_max_k - line.t_min_k) * k / 100.0;
    if (!(line.partition_function(t) > 0.0)) {
      std::ostringstream os;
      os << "line " << line.name << ": partition function not positive at " << t << " K";
      throw ConfigError(os.str());
    }
  }
  if (!(line.partition_function(line.t_ref_k) > 0.0)) {
    throw ConfigError("line " + line.name + ": partition function not positive at t_ref");
  }
}

double line_strength(const TransitionLine& line, double t_k) {
  if (!(t_k >= line.t_min_k && t_k <= line.t_max_k)) {
    std::ostringstream os;
    os << "temperature " << t_k << " K outside [" << line.t_min_k << ", " << line.t_max_k
       << "] K for line " << line.name;
    throw RangeError(os.str());
  }
  if (t_k == line.t_ref_k) return line.s_ref;
  const double c2 = kSecondRadiationConstant;
  const double tr = line.t_ref_k;
  const double q_ratio = line.partition_function(tr) / line.partition_function(t_k);
  const double boltzmann = std::exp(-c2 * line.e_lower_cm1 * (1.0 / t_k - 1.0 / tr));
  const double stimulated =
      -std::expm1(-c2 * line.nu0_cm1 / t_k) / -std::expm1(-c2 * line.nu0_cm1 / tr);
  return line.s_ref * q_ratio * (tr / t_k) * boltzmann * stimulated;
}

Eigen::VectorXd absorbance_density(const GasField& field, const TransitionLine& line) {
  const auto n = field.temperature_k.size();
  if (field.mole_fraction.size() != n) {
    throw DimensionError("temperature and mole-fraction vectors differ in length");
  }
  Eigen::VectorXd a(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    a(j) = field.pressure_atm * field.mole_fraction(j) * line_strength(line, field.temperature_k(j));
  }
  return a;
}

Eigen::VectorXd forward_project(const SensitivityMatrix& s, const Eigen::VectorXd& density) {
  if (density.size() != s.L.cols()) {
    throw DimensionError("absorbance density has " + std::to_string(density.size()) +
                         " entries, sensitivity matrix has " + std::to_string(s.L.cols()) +
                         " columns");
  }
  return s.L * density;
}

Eigen::VectorXd forward_project_split(const SensitivityMatrix& s, const Eigen::VectorXd& density) {
  if (density.size() != s.L.cols()) throw DimensionError("absorbance density length mismatch");
  const auto nb = s.L.cols() - s.n_roi;
  return s.roi() * density.head(s.n_roi) + s.background() * density.tail(nb);
}

double noise_sigma(const Eigen::VectorXd& absorbance, double snr_db) {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
    throw RangeError("SNR must be finite or +inf");
  }
  if (absorbance.size() == 0) throw DimensionError("empty absorbance vector");
  const double rms = absorbance.norm() / std::sqrt(static_cast<double>(absorbance.size()));
  if (!(rms > 0.0)) throw RangeError("SNR is undefined for an all-zero absorbance vector");
  if (snr_db == std::numeric_limits<double>::infinity()) return 0.0;
  return rms * std::pow(10.0, -snr_db / 20.0);
}

Eigen::VectorXd add_noise(const Eigen::VectorXd& absorbance, double snr_db, Rng& rng) {
  const double sigma = noise_sigma(absorbance, snr_db);
  Eigen::VectorXd out = absorbance;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += sigma * normal(rng);
  return out;
}

}  // namespace lastomo
