#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "ddpc/plant.hpp"
#include "ddpc/sensitivity.hpp"

namespace ddpc {

enum class OutputConstraintMode { Hard, Soft };

struct MpcConfig {
  Horizons horizons{10, 15};
  double Q_weight = 1.0;
  double R_weight = 0.01;
  double u_lo = -2.0, u_hi = 2.0;
  double y_lo = -2.0, y_hi = 2.0;
  OutputConstraintMode output_mode = OutputConstraintMode::Soft;
  double soft_penalty = 1e4;  // rho for the L1 slack penalty
  bool fce_enabled = false;
};

/// min 1/2 z'Pz + q'z  s.t.  G z <= h. In soft mode z = [u_f; s] with the
/// slack cost rho*sum(s) carried in q.
struct QpProblem {
  Matrix P;
  Vector q;
  Matrix G;
  Vector h;
  Eigen::Index n_u_f = 0;  // leading coordinates of z that are inputs
};

enum class QpStatus { Optimal, MaxIter, Infeasible };

struct QpSolution {
  Vector z;
  Vector duals;
  double kkt_residual = 0.0;
  double slack_usage = 0.0;
  int iterations = 0;
  QpStatus status = QpStatus::Optimal;
};

QpProblem build_qp(const LiftedPredictor& lp, const Vector& u_p, const Vector& y_p,
                   const Vector& r_f, const MpcConfig& cfg,
                   const FceQuadratic* fce = nullptr);

/// Operator-splitting solve with over-relaxation and a terminal active-set
/// polish; the P-system is factorized once per problem.
QpSolution solve_qp(const QpProblem& qp, const Vector* warm_start = nullptr);

struct StepDiagnostics {
  int qp_iters = 0;
  double kkt_residual = 0.0;
  double slack_usage = 0.0;
  QpStatus status = QpStatus::Optimal;
};

/// Receding-horizon controller around a fixed lifted predictor. History is
/// zero-initialized for the first Lp steps; warm starts shift the previous
/// plan by one step.
class Controller {
 public:
  Controller(const PredictorTheta& theta, const MpcConfig& cfg,
             std::optional<Matrix> sigma_theta = std::nullopt);

  /// Solve the QP for the current window and return the first input block.
  Vector plan(const Vector& r_preview, StepDiagnostics* diag = nullptr);

  /// Append the applied input and the measurement to the history.
  void record(const Vector& u_apply, const Vector& y_meas);

  /// plan + record in one call.
  Vector control_step(const Vector& y_meas, const Vector& r_preview,
                      StepDiagnostics* diag = nullptr);

  Vector past_inputs() const;   // stacked u(t-Lp..t-1)
  Vector past_outputs() const;  // stacked y(t-Lp..t-1)
  const Vector& last_plan() const { return last_plan_; }
  const MpcConfig& config() const { return cfg_; }
  const LiftedPredictor& predictor() const { return lifted_; }

 private:
  MpcConfig cfg_;
  PredictorTheta theta_;
  LiftedPredictor lifted_;
  std::optional<Matrix> sigma_theta_;
  Matrix fce_Hq_;  // input-dependent FCE piece, fixed given theta
  std::deque<Vector> hist_u_, hist_y_;
  Vector last_plan_;
  bool have_warm_ = false;
  Vector warm_;
};

struct ClosedLoopRun {
  Trajectory traj;
  std::vector<StepDiagnostics> diag;
  std::vector<TaskPoint> tasks;  // (u_p, y_p, planned u_f) at every step
  double cost_J = 0.0;
  bool valid = true;
};

/// Simulate plant + controller for n_test steps from zero state; the cost is
/// sum ||r - y||^2_Q + ||u||^2_R with the controller's weights. Throws
/// RunInvalid if a hard-mode QP comes back infeasible.
ClosedLoopRun run_closed_loop(const LtiSystem& sys, Controller& controller,
                              const std::vector<double>& r, long n_test, RngState& rng);

std::string closed_loop_to_csv(const ClosedLoopRun& run);
std::string closed_loop_summary_json(const ClosedLoopRun& run);

}  // namespace ddpc
