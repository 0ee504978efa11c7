#pragma once

#include "lastomo/geometry.hpp"
#include "lastomo/rng.hpp"

#include <Eigen/Dense>

#include <array>
#include <string>

namespace lastomo {

inline constexpr double kSecondRadiationConstant = 1.4387769;  // c2, cm K

// One absorbing transition. Line strength is in cm^-2 atm^-1.
struct TransitionLine {
  std::string name;
  double nu0_cm1 = 0.0;
  double s_ref = 0.0;  // at t_ref_k
  double e_lower_cm1 = 0.0;
  double t_ref_k = 296.0;
  std::array<double, 4> q_poly{};  // Q(T) = q0 + q1 T + q2 T^2 + q3 T^3
  double t_min_k = 250.0;
  double t_max_k = 1500.0;

  double partition_function(double t_k) const {
    return q_poly[0] + t_k * (q_poly[1] + t_k * (q_poly[2] + t_k * q_poly[3]));
  }
};

// Throws ConfigError if the line parameters violate their invariants.
void validate(const TransitionLine& line);

// S(T): Boltzmann population, partition function and stimulated-emission
// scaling of the reference strength, with a T_ref/T factor for pressure units.
double line_strength(const TransitionLine& line, double t_k);

// Hierarchical gas state on the mesh cells.
struct GasField {
  Eigen::VectorXd temperature_k;
  Eigen::VectorXd mole_fraction;
  double pressure_atm = 1.0;
};

// a_j = P * X_j * S(T_j), cm^-1.
Eigen::VectorXd absorbance_density(const GasField& field, const TransitionLine& line);

// A = L a. Throws DimensionError if a does not match the matrix columns.
Eigen::VectorXd forward_project(const SensitivityMatrix& s, const Eigen::VectorXd& density);

// Split form L_roi a_roi + L_bg a_bg.
Eigen::VectorXd forward_project_split(const SensitivityMatrix& s, const Eigen::VectorXd& density);

// sigma = RMS(A) * 10^(-snr/20). Infinite SNR gives zero.
double noise_sigma(const Eigen::VectorXd& absorbance, double snr_db);

// A + sigma * n, n ~ N(0, 1) i.i.d. The input is left untouched.
Eigen::VectorXd add_noise(const Eigen::VectorXd& absorbance, double snr_db, Rng& rng);

}  // namespace lastomo
