#pragma once

#include <optional>
#include <string>

#include "ddpc/numerics.hpp"
#include "ddpc/plant.hpp"

namespace ddpc {

/// ARX order bookkeeping. The coefficient vector layout is
/// col(phi_y^1, ..., phi_y^na, phi_u^0, ..., phi_u^nb), each matrix
/// coefficient vectorized column-major; phi_u^0 is dropped when
/// include_feedthrough is false.
struct ArxStructure {
  int na = 10;
  int nb = 10;
  bool include_feedthrough = true;
  int n_y = 1;
  int n_u = 1;

  int n_u_lags() const { return include_feedthrough ? nb + 1 : nb; }
  Eigen::Index n_theta() const {
    return static_cast<Eigen::Index>(n_y) * n_y * na +
           static_cast<Eigen::Index>(n_y) * n_u * n_u_lags();
  }
  // Offset of coefficient matrix phi_y^lag (lag in 1..na) in theta.
  Eigen::Index y_offset(int lag) const {
    return static_cast<Eigen::Index>(lag - 1) * n_y * n_y;
  }
  // Offset of coefficient matrix phi_u^lag (lag in first_u_lag()..nb).
  Eigen::Index u_offset(int lag) const {
    return static_cast<Eigen::Index>(n_y) * n_y * na +
           static_cast<Eigen::Index>(lag - first_u_lag()) * n_y * n_u;
  }
  int first_u_lag() const { return include_feedthrough ? 0 : 1; }
};

struct PredictorTheta {
  ArxStructure structure;
  Vector values;

  Matrix phi_y(int lag) const;  // lag in 1..na
  Matrix phi_u(int lag) const;  // lag in first_u_lag()..nb, zero matrix outside
};

PredictorTheta make_theta(const ArxStructure& s, const Vector& values);

struct RegressionProblem {
  Matrix H;
  Vector yvec;
};

enum class KernelFamily { TC, SS };

struct KernelConfig {
  KernelFamily family = KernelFamily::SS;
  double c_y = 1.0, lambda_y = 0.9;
  double c_u = 1.0, lambda_u = 0.9;

  static constexpr double c_min = 1e-8, c_max = 1e4;
  static constexpr double lambda_min = 0.5, lambda_max = 0.999;
};

enum class EstimMethod { OLS, SS, SSW };

struct PosteriorEstimate {
  PredictorTheta theta_bar;
  Matrix sigma_theta;
  double sigma2 = 0.0;
  std::optional<KernelConfig> kernel;
  EstimMethod method = EstimMethod::OLS;
  bool ridge_fallback = false;  // OLS fell back to ridge on rank deficiency
};

/// Row at time t: [y(t-1)', ..., y(t-na)', u(t)', ..., u(t-nb)'],
/// targets y(t), for t = max(na, nb) .. N-1.
RegressionProblem build_regression(const Trajectory& traj, const ArxStructure& structure);

PosteriorEstimate ols_estimate(const RegressionProblem& prob, const ArxStructure& structure,
                               bool allow_ridge_fallback = true);

/// Block-diagonal kernel prior. TC entry k(i,j) = c*lambda^max(i,j);
/// SS entry k(i,j) = c*(lambda^(i+j+max(i,j))/2 - lambda^(3*max(i,j))/6).
/// Lag index of phi_y^i is i, of phi_u^j is j+1. MIMO coefficient entries
/// at the same lag pair share the kernel value (Kronecker with identity).
Matrix kernel_matrix(const KernelConfig& cfg, const ArxStructure& structure);

PosteriorEstimate kernel_posterior(const RegressionProblem& prob, const ArxStructure& structure,
                                   const Matrix& K, double sigma2,
                                   std::optional<KernelConfig> provenance = std::nullopt);

/// Negative log marginal likelihood log det(HKH'+s2 I) + y'(HKH'+s2 I)^-1 y,
/// evaluated through n_theta-sized Cholesky factors (Woodbury form).
double eb_objective(const RegressionProblem& prob, const Matrix& K, double sigma2);

struct EbResult {
  KernelConfig kernel;
  double sigma2 = 0.0;
  double objective = 0.0;
};

/// Coarse log-grid (5 points per hyperparameter) followed by Nelder-Mead
/// refinement in log-space, 500 iteration cap.
EbResult eb_tune(const RegressionProblem& prob, const ArxStructure& structure,
                 KernelFamily family);

/// Second-stage sensitivity-shaped estimator:
/// theta_c = (s^-2 H'H + K^-1 + mu*W)^-1 (s^-2 H'y + mu*W*theta_bar).
PosteriorEstimate shaped_estimate(const RegressionProblem& prob, const ArxStructure& structure,
                                  const Matrix& K, double sigma2,
                                  const PredictorTheta& theta_bar, const Matrix& W_bar,
                                  double mu);

std::string posterior_to_json(const PosteriorEstimate& est);

}  // namespace ddpc
