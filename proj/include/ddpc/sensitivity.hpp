#pragma once

#include <vector>

#include "ddpc/lifted.hpp"

namespace ddpc {

/// Current operating condition: past window plus nominal future input.
struct TaskPoint {
  Vector u_p, y_p, u_f;
};

/// Scalar positions (row, col) where an identified coordinate appears in
/// each lifted matrix. Placement matrices are never materialized densely;
/// E_i * v gathers v entries at these positions.
struct CoordPlacement {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> psi_u, psi_y, phi_u, phi_y;
};

struct PlacementIndex {
  ArxStructure structure;
  Horizons horizons;
  std::vector<CoordPlacement> coords;  // one per identified theta coordinate
};

PlacementIndex placements(const ArxStructure& structure, const Horizons& h);

/// Per-coordinate affine Jacobian pieces J_i(u_f) = J0_i + J1_i * u_f.
struct SensitivityBundle {
  Matrix J0;                // (ny*Lf) x n_theta, column i = J0_i
  std::vector<Matrix> J1;   // n_theta matrices of size (ny*Lf) x (nu*Lf)
  PredictorTheta theta_bar;
  Vector u_p, y_p;

  Matrix jacobian_at(const Vector& u_f) const;
};

struct JacobianResult {
  Matrix J;  // at the task's nominal u_f
  SensitivityBundle bundle;
};

/// Analytic Jacobian of the implicit predictor wrt the identified
/// coordinates, with every inverse realized as a triangular solve.
JacobianResult jacobian(const PredictorTheta& theta_bar, const Horizons& h,
                        const TaskPoint& task);

/// First-order propagated output covariance J Sigma_theta J', symmetrized.
Matrix output_covariance(const SensitivityBundle& bundle, const Matrix& sigma_theta,
                         const Vector& u_f);
Matrix output_covariance(const Matrix& J, const Matrix& sigma_theta);

/// Uncertainty penalty tr(J(u_f)' Q J(u_f) Sigma_theta).
double fce_term(const SensitivityBundle& bundle, const Matrix& sigma_theta,
                const Matrix& Q_lift, const Vector& u_f);

struct FceQuadratic {
  Matrix Hq;    // (nu*Lf) x (nu*Lf), symmetric PSD
  Vector hlin;  // nu*Lf
  double c0 = 0.0;

  double eval(const Vector& u_f) const {
    return u_f.dot(Hq * u_f) + 2.0 * hlin.dot(u_f) + c0;
  }
};

/// Expand the uncertainty penalty as an explicit quadratic in u_f.
FceQuadratic fce_quadratic(const SensitivityBundle& bundle, const Matrix& sigma_theta,
                           const Matrix& Q_lift);

/// Averaged task sensitivity (1/N) sum_j J(xi_j)' Q J(xi_j), symmetrized.
Matrix task_sensitivity(const PredictorTheta& theta_bar, const Horizons& h,
                        const std::vector<TaskPoint>& tasks, const Matrix& Q_lift);

/// W / ((1/n_theta) tr(W)); result trace equals n_theta.
Matrix normalize_w(const Matrix& W_bar);

std::string w_to_json(const Matrix& W_bar, int n_tasks, bool normalized);
Matrix w_from_json(const std::string& text);

}  // namespace ddpc
