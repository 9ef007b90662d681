#pragma once

#include <Eigen/Dense>

#include "htosim/numerics.hpp"
#include "htosim/plant.hpp"

namespace htosim::ekf {

using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Vector4 = Eigen::Matrix<double, 4, 1>;
using Matrix4 = Eigen::Matrix<double, 4, 4>;
using Matrix46 = Eigen::Matrix<double, 4, 6>;
using Matrix62 = Eigen::Matrix<double, 6, 2>;

// State vector of the simplified separator model:
//   [p (bar), l (m), x_h2, x_o2, nbar_h2 (mol/s), nbar_o2 (mol/s)]
// Pressure is carried in bar here (the process-noise magnitudes are scaled
// for bar and mol/s), unlike the Pa-based plant model.
enum StateIndex { kP = 0, kL = 1, kXH2 = 2, kXO2 = 3, kNH2 = 4, kNO2 = 5 };

struct EstimatorState {
  Vector6 x_hat = Vector6::Zero();
  Matrix6 P = Matrix6::Identity();

  void validate() const;  // symmetry and positive semidefiniteness of P
};

struct NoiseConfig {
  Matrix6 Q;
  Matrix4 R;
  std::uint64_t seed = 0;

  static NoiseConfig defaults();
};

/// Known inputs of the simplified model.
struct Inputs {
  double n_out_gas = 0.0;  // mol/s
  double m_lye = 0.0;      // kg/s
};

/// Separator-only model: the upstream gas train is replaced by the two
/// augmented inflow states, which carry zero continuous-time derivative
/// (their random walk is injected discretely through Q).
struct SimplifiedModel {
  plant::PlantParams pp;
  double m_in = 0.0;  // liquid inflow, held at its nominal value
  double t_s = 0.1;   // discretization step, s

  Vector6 rhs(const Vector6& x, const Inputs& u) const;
  Vector6 transition(const Vector6& x, const Inputs& u) const;  // Euler step
  Matrix6 jacobian_F(const Vector6& x, const Inputs& u) const;
  Matrix62 jacobian_G(const Vector6& x, const Inputs& u) const;
};

Matrix46 jacobian_H();

/// y = [p (bar), l, x_h2, x_o2]
Vector4 measure(const Vector6& x);

EstimatorState ekf_predict(const EstimatorState& est, const Inputs& u,
                           const NoiseConfig& cfg, const SimplifiedModel& model);

EstimatorState ekf_update(const EstimatorState& est, const Vector4& y,
                          const NoiseConfig& cfg);

/// Stacks H F^k for k = 0..5 into a 24x6 matrix.
num::Matrix observability_matrix(const Matrix6& F, const Matrix46& H);

/// Steady-state initialization: separator block of the converged plant plus
/// the true inflows as augmented-state initials; P = identity.
EstimatorState initialize(const plant::PlantParams& pp,
                          const plant::PlantInputs& nominal,
                          const plant::PlantState& steady);

/// nbar_h2 / nbar_o2 — the estimate of the upstream (pipe) gas impurity.
double estimated_pipe_hto(const EstimatorState& est);

}  // namespace htosim::ekf
