#include "htosim/estimator.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace htosim::ekf {

using plant::kBar;

void EstimatorState::validate() const {
  if (!x_hat.allFinite() || !P.allFinite()) {
    throw DomainError("EstimatorState: non-finite entries");
  }
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw DomainError("EstimatorState: covariance not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix6> es(P);
  if (es.eigenvalues().minCoeff() < -1e-10 * P.trace()) {
    throw DomainError("EstimatorState: covariance not PSD");
  }
}

NoiseConfig NoiseConfig::defaults() {
  NoiseConfig cfg;
  cfg.Q = Matrix6::Zero();
  cfg.Q.diagonal() << 10.0, 1.0, 1e-4, 1e-4, 0.3, 300.0;
  cfg.R = Matrix4::Identity();
  cfg.seed = 0;
  return cfg;
}

Vector6 SimplifiedModel::rhs(const Vector6& x, const Inputs& u) const {
  const double p_bar = x[kP];
  const double l = x[kL];
  const double xh = x[kXH2];
  const double xo = x[kXO2];
  const double nh = x[kNH2];
  const double no = x[kNO2];

  if (!(p_bar > 0.0)) {
    throw DomainError("SimplifiedModel: nonpositive pressure");
  }
  const plant::GasVolume gv = plant::gas_volume(l, pp);
  const double RT = pp.R_gas * pp.T;
  const double p_pa = p_bar * kBar;

  const double ldot = (m_in - u.m_lye) / (pp.rho * pp.A);
  const double Vdot = gv.dV_dl * ldot;
  const double n_d = plant::dissolved_o2_sink(u.m_lye, p_bar, pp);
  const double n_in = nh + no - n_d;

  Vector6 dx;
  dx[kP] = ((n_in - u.n_out_gas) * RT - p_pa * Vdot) / (gv.V * kBar);
  dx[kL] = ldot;
  dx[kXH2] = RT * (nh * xo - (no - n_d) * xh) / (p_pa * gv.V);
  dx[kXO2] = -dx[kXH2];
  dx[kNH2] = 0.0;
  dx[kNO2] = 0.0;
  return dx;
}

Vector6 SimplifiedModel::transition(const Vector6& x, const Inputs& u) const {
  return x + t_s * rhs(x, u);
}

Matrix6 SimplifiedModel::jacobian_F(const Vector6& x, const Inputs& u) const {
  const double p_bar = x[kP];
  const double xh = x[kXH2];
  const double xo = x[kXO2];
  const double nh = x[kNH2];
  const double no = x[kNO2];

  const plant::GasVolume gv = plant::gas_volume(x[kL], pp);
  const double V = gv.V;
  const double RT = pp.R_gas * pp.T;
  const double p_pa = p_bar * kBar;
  const double a = RT / (p_pa * V);
  const double s_o2 = pp.o2.S;

  const double ldot = (m_in - u.m_lye) / (pp.rho * pp.A);
  const double Vdot = gv.dV_dl * ldot;
  const double n_d = plant::dissolved_o2_sink(u.m_lye, p_bar, pp);

  const Vector6 dx = rhs(x, u);

  Matrix6 J = Matrix6::Zero();
  // Pressure row.
  J(kP, kP) = -u.m_lye * s_o2 * RT / (V * kBar) - Vdot / V;
  J(kP, kL) = pp.A * dx[kP] / V;
  J(kP, kNH2) = RT / (V * kBar);
  J(kP, kNO2) = RT / (V * kBar);
  // Level row: zero (inputs only).
  // Composition rows. Differentiating 1/p gives the -x'/p term; the
  // dissolved-O2 sink contributes through n_d = m_lye S_O2 p.
  J(kXH2, kP) = -dx[kXH2] / p_bar + a * u.m_lye * s_o2 * xh;
  J(kXH2, kL) = pp.A * dx[kXH2] / V;
  J(kXH2, kXH2) = -a * (no - n_d);
  J(kXH2, kXO2) = a * nh;
  J(kXH2, kNH2) = a * xo;
  J(kXH2, kNO2) = -a * xh;
  J.row(kXO2) = -J.row(kXH2);
  // Augmented states persist.
  return Matrix6::Identity() + t_s * J;
}

Matrix62 SimplifiedModel::jacobian_G(const Vector6& x, const Inputs& u) const {
  const double p_bar = x[kP];
  const double xh = x[kXH2];

  const plant::GasVolume gv = plant::gas_volume(x[kL], pp);
  const double V = gv.V;
  const double RT = pp.R_gas * pp.T;
  const double s_o2 = pp.o2.S;
  (void)u;

  Matrix62 G = Matrix62::Zero();
  G(kP, 0) = -RT / (V * kBar);
  // m_lye removes dissolved O2 and, through the level derivative, changes
  // the gas volume: d(Vdot)/d(m_lye) = dV_dl * (-1/(rho A)) = 1/rho.
  G(kP, 1) = (-s_o2 * p_bar * RT - p_bar * kBar / pp.rho) / (V * kBar);
  G(kL, 1) = -1.0 / (pp.rho * pp.A);
  G(kXH2, 1) = RT * s_o2 * xh / (V * kBar);
  G(kXO2, 1) = -G(kXH2, 1);
  return t_s * G;
}

Matrix46 jacobian_H() {
  Matrix46 H = Matrix46::Zero();
  H(0, kP) = 1.0;
  H(1, kL) = 1.0;
  H(2, kXH2) = 1.0;
  H(3, kXO2) = 1.0;
  return H;
}

Vector4 measure(const Vector6& x) {
  return jacobian_H() * x;
}

EstimatorState ekf_predict(const EstimatorState& est, const Inputs& u,
                           const NoiseConfig& cfg,
                           const SimplifiedModel& model) {
  EstimatorState out;
  out.x_hat = model.transition(est.x_hat, u);
  const Matrix6 F = model.jacobian_F(est.x_hat, u);
  out.P = F * est.P * F.transpose() + cfg.Q;
  out.P = 0.5 * (out.P + out.P.transpose());
  return out;
}

EstimatorState ekf_update(const EstimatorState& est, const Vector4& y,
                          const NoiseConfig& cfg) {
  const Matrix46 H = jacobian_H();
  const Matrix4 S = H * est.P * H.transpose() + cfg.R;
  Eigen::FullPivLU<Matrix4> lu(S);
  if (!lu.isInvertible()) {
    throw SingularError("ekf_update: singular innovation covariance");
  }
  const Eigen::Matrix<double, 6, 4> K =
      est.P * H.transpose() * lu.inverse();

  EstimatorState out;
  out.x_hat = est.x_hat + K * (y - measure(est.x_hat));
  out.P = (Matrix6::Identity() - K * H) * est.P;
  out.P = 0.5 * (out.P + out.P.transpose());

  // Keep the composition physically admissible for downstream ratios.
  double xh = std::clamp(out.x_hat[kXH2], 0.0, 1.0);
  double xo = std::clamp(out.x_hat[kXO2], 0.0, 1.0);
  const double sum = xh + xo;
  if (sum > 1e-12) {
    out.x_hat[kXH2] = xh / sum;
    out.x_hat[kXO2] = xo / sum;
  } else {
    out.x_hat[kXH2] = 0.0;
    out.x_hat[kXO2] = 1.0;
  }
  return out;
}

num::Matrix observability_matrix(const Matrix6& F, const Matrix46& H) {
  num::Matrix O(24, 6);
  Matrix6 Fk = Matrix6::Identity();
  for (int k = 0; k < 6; ++k) {
    O.block(4 * k, 0, 4, 6) = H * Fk;
    Fk = Fk * F;
  }
  return O;
}

EstimatorState initialize(const plant::PlantParams& pp,
                          const plant::PlantInputs& nominal,
                          const plant::PlantState& steady) {
  const int sep = pp.n;
  const plant::Effluent eff =
      plant::stack_effluent(nominal, steady.p[0] / kBar, pp);
  EstimatorState est;
  est.x_hat[kP] = steady.p[sep] / kBar;
  est.x_hat[kL] = steady.l;
  est.x_hat[kXH2] = steady.x_h2[sep];
  est.x_hat[kXO2] = steady.x_o2[sep];
  est.x_hat[kNH2] = eff.n_h2;
  est.x_hat[kNO2] = eff.n_o2;
  est.P = Matrix6::Identity();
  return est;
}

double estimated_pipe_hto(const EstimatorState& est) {
  const double no = est.x_hat[kNO2];
  if (no <= 1e-12) {
    throw SingularError("estimated_pipe_hto: vanishing O2 inflow estimate");
  }
  return std::max(0.0, est.x_hat[kNH2]) / no;
}

}  // namespace htosim::ekf
