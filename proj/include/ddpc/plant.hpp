#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "ddpc/numerics.hpp"

namespace ddpc {

/// Ground-truth LTI plant in state-space form with isotropic process and
/// measurement noise: Sigma_w = sigma_w2*I, Sigma_v = sigma_v2*I.
struct LtiSystem {
  Matrix A, B, C, D;
  double sigma_w2 = 0.0;
  double sigma_v2 = 0.0;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index nu() const { return B.cols(); }
  Eigen::Index ny() const { return C.rows(); }
};

/// The second-order benchmark system with its published matrices.
LtiSystem benchmark_system(double sigma_w2 = 0.01, double sigma_v2 = 0.01);

struct Trajectory {
  std::vector<Vector> u;
  std::vector<Vector> y;
  std::vector<Vector> r;  // empty if no reference was involved
  long t0 = 0;

  std::size_t length() const { return u.size(); }
};

enum class Regime { Informative, Weak };

/// Training reference: square wave (amplitude 1, period 50) in the
/// informative regime, sin(2*pi*t/75) in the weak regime.
double training_reference(Regime regime, long t);

struct KalmanGain {
  Matrix K;  // n x ny
  Matrix P;  // steady-state error covariance
};

std::pair<Vector, Vector> step(const LtiSystem& sys, const Vector& x, const Vector& u,
                               RngState& rng);

/// Simulate the feedback loop u(t) = r_train(t) - y(t) for n_train steps from
/// zero initial state.
Trajectory collect_training_data(const LtiSystem& sys, Regime regime, long n_train,
                                 RngState& rng);

/// Steady-state Kalman filter via fixed-point DARE iteration
/// (residual < 1e-12 or 1e5 iterations).
KalmanGain steady_state_kf(const LtiSystem& sys);

Vector kf_filter_step(const KalmanGain& gain, const LtiSystem& sys, const Vector& xhat,
                      const Vector& u, const Vector& y);

/// CSV round-trip, header t,u_1..u_nu,y_1..y_ny,r_1..r_ny.
std::string trajectory_to_csv(const Trajectory& traj);
Trajectory trajectory_from_csv(const std::string& csv, Eigen::Index nu, Eigen::Index ny);

}  // namespace ddpc
