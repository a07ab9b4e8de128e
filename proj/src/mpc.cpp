#include "ddpc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ddpc {

QpProblem build_qp(const LiftedPredictor& lp, const Vector& u_p, const Vector& y_p,
                   const Vector& r_f, const MpcConfig& cfg, const FceQuadratic* fce) {
  const Eigen::Index ne = lp.A.rows();        // ny * Lf
  const Eigen::Index n = lp.Phi_u.cols();     // nu * Lf
  require_dims(u_p.size() == lp.Psi_u.cols() && y_p.size() == lp.Psi_y.cols() &&
                   r_f.size() == ne,
               "build_qp: dims");

  Matrix G_pred = lp.A.triangularView<Eigen::Lower>().solve(lp.Phi_u);
  Vector h_pred =
      lp.A.triangularView<Eigen::Lower>().solve(Vector(lp.Psi_u * u_p + lp.Psi_y * y_p));

  const bool soft = cfg.output_mode == OutputConstraintMode::Soft;
  const Eigen::Index ns = soft ? ne : 0;
  const Eigen::Index dim = n + ns;

  QpProblem qp;
  qp.n_u_f = n;
  qp.P = Matrix::Zero(dim, dim);
  qp.P.topLeftCorner(n, n) =
      cfg.Q_weight * (G_pred.transpose() * G_pred) + cfg.R_weight * Matrix::Identity(n, n);
  qp.q = Vector::Zero(dim);
  qp.q.head(n) = -cfg.Q_weight * (G_pred.transpose() * (r_f - h_pred));
  if (fce != nullptr) {
    qp.P.topLeftCorner(n, n) += fce->Hq;
    qp.q.head(n) += fce->hlin;
  }
  qp.P = symmetrize(qp.P);
  if (soft) qp.q.tail(ns).setConstant(cfg.soft_penalty);

  const Eigen::Index rows = 2 * n + 2 * ne + ns;
  qp.G = Matrix::Zero(rows, dim);
  qp.h = Vector::Zero(rows);
  Eigen::Index r0 = 0;
  // input box
  qp.G.block(r0, 0, n, n) = Matrix::Identity(n, n);
  qp.h.segment(r0, n).setConstant(cfg.u_hi);
  r0 += n;
  qp.G.block(r0, 0, n, n) = -Matrix::Identity(n, n);
  qp.h.segment(r0, n).setConstant(-cfg.u_lo);
  r0 += n;
  // output bounds, slack-relaxed in soft mode
  qp.G.block(r0, 0, ne, n) = G_pred;
  if (soft) qp.G.block(r0, n, ne, ns) = -Matrix::Identity(ne, ns);
  qp.h.segment(r0, ne) = Vector::Constant(ne, cfg.y_hi) - h_pred;
  r0 += ne;
  qp.G.block(r0, 0, ne, n) = -G_pred;
  if (soft) qp.G.block(r0, n, ne, ns) = -Matrix::Identity(ne, ns);
  qp.h.segment(r0, ne) = h_pred - Vector::Constant(ne, cfg.y_lo);
  r0 += ne;
  if (soft) {
    qp.G.block(r0, n, ns, ns) = -Matrix::Identity(ns, ns);
    // h already zero: s >= 0
  }
  return qp;
}

namespace {

double kkt_residual_of(const QpProblem& qp, const Vector& z, const Vector& y) {
  Vector stat = qp.P * z + qp.q + qp.G.transpose() * y;
  Vector gap = qp.G * z - qp.h;
  double primal = std::max(0.0, gap.maxCoeff());
  double comp = std::abs(y.dot(gap));
  double dual_neg = std::max(0.0, -y.minCoeff());
  return std::max({stat.lpNorm<Eigen::Infinity>(), primal, comp, dual_neg});
}

// Equality-constrained solve on one active-set guess; returns false if the
// KKT system is too ill-conditioned to trust or the result is worse.
bool polish_try(const QpProblem& qp, Vector& z, Vector& y, double gap_tol, bool use_duals) {
  const Eigen::Index dim = qp.P.rows();
  const Eigen::Index m = qp.G.rows();
  std::vector<Eigen::Index> active;
  Vector gap = qp.G * z - qp.h;
  for (Eigen::Index i = 0; i < m; ++i)
    if (gap(i) > -gap_tol * (1.0 + std::abs(qp.h(i))) || (use_duals && y(i) > 1e-9))
      active.push_back(i);

  const Eigen::Index na = static_cast<Eigen::Index>(active.size());
  Matrix kkt = Matrix::Zero(dim + na, dim + na);
  kkt.topLeftCorner(dim, dim) = qp.P;
  for (Eigen::Index a = 0; a < na; ++a) {
    kkt.block(dim + a, 0, 1, dim) = qp.G.row(active[static_cast<std::size_t>(a)]);
    kkt.block(0, dim + a, dim, 1) = qp.G.row(active[static_cast<std::size_t>(a)]).transpose();
  }
  // factor a lightly regularized copy, then refine against the exact system
  Matrix kkt_reg = kkt;
  kkt_reg.topLeftCorner(dim, dim) += 1e-9 * Matrix::Identity(dim, dim);
  kkt_reg.bottomRightCorner(na, na) -= 1e-9 * Matrix::Identity(na, na);

  Vector rhs(dim + na);
  rhs.head(dim) = -qp.q;
  for (Eigen::Index a = 0; a < na; ++a) rhs(dim + a) = qp.h(active[static_cast<std::size_t>(a)]);

  Eigen::PartialPivLU<Matrix> lu(kkt_reg);
  Vector sol = lu.solve(rhs);
  for (int pass = 0; pass < 8; ++pass) sol += lu.solve(Vector(rhs - kkt * sol));
  if (!sol.allFinite()) return false;

  Vector z_new = sol.head(dim);
  Vector y_new = Vector::Zero(m);
  for (Eigen::Index a = 0; a < na; ++a)
    y_new(active[static_cast<std::size_t>(a)]) = std::max(0.0, sol(dim + a));
  Vector gap_new = qp.G * z_new - qp.h;
  if (gap_new.maxCoeff() > 1e-8) return false;
  if (kkt_residual_of(qp, z_new, y_new) >= kkt_residual_of(qp, z, y)) return false;
  z = z_new;
  y = y_new;
  return true;
}

// Try successively coarser active-set guesses; the dual-informed guess is
// right when the splitting iteration converged, the gap-only fallbacks
// rescue stalled iterates whose duals are unreliable.
bool polish(const QpProblem& qp, Vector& z, Vector& y) {
  if (polish_try(qp, z, y, 1e-7, true)) return true;
  if (polish_try(qp, z, y, 1e-7, false)) return true;
  if (polish_try(qp, z, y, 1e-5, false)) return true;
  return polish_try(qp, z, y, 1e-3, false);
}

}  // namespace

QpSolution solve_qp(const QpProblem& qp, const Vector* warm_start) {
  const Eigen::Index dim = qp.P.rows();
  const Eigen::Index m = qp.G.rows();
  constexpr double sigma = 1e-6;
  constexpr double alpha = 1.6;
  constexpr double tol = 1e-8;
  constexpr int max_iter = 20000;
  double rho = 1.0;

  const Matrix GtG = qp.G.transpose() * qp.G;
  Eigen::LLT<Matrix> llt;
  auto refactor = [&]() {
    llt.compute(symmetrize(Matrix(qp.P + sigma * Matrix::Identity(dim, dim) + rho * GtG)));
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("solve_qp: splitting system");
  };
  refactor();

  Vector z = (warm_start != nullptr && warm_start->size() == dim) ? *warm_start
                                                                  : Vector::Zero(dim);
  Vector w = (qp.G * z).cwiseMin(qp.h);
  Vector y = Vector::Zero(m);
  Vector y_check = y;

  QpSolution sol;
  sol.status = QpStatus::MaxIter;
  int it = 0;
  for (; it < max_iter; ++it) {
    Vector zt = llt.solve(sigma * z - qp.q + qp.G.transpose() * (rho * w - y));
    Vector gz = qp.G * zt;
    z = alpha * zt + (1.0 - alpha) * z;
    Vector v = alpha * gz + (1.0 - alpha) * w + y / rho;
    Vector w_new = v.cwiseMin(qp.h);
    y = rho * (v - w_new);
    w = w_new;

    if ((it + 1) % 25 == 0 || it + 1 == max_iter) {
      double rp = (qp.G * z - w).lpNorm<Eigen::Infinity>();
      double rd = (qp.P * z + qp.q + qp.G.transpose() * y).lpNorm<Eigen::Infinity>();
      double scale_p = 1.0 + std::max(w.lpNorm<Eigen::Infinity>(), qp.h.lpNorm<Eigen::Infinity>());
      double scale_d = 1.0 + qp.q.lpNorm<Eigen::Infinity>();
      if (rp < tol * scale_p && rd < tol * scale_d) {
        sol.status = QpStatus::Optimal;
        ++it;
        break;
      }
      // primal infeasibility certificate from the dual update direction;
      // soft problems are always feasible (slack absorbs any violation)
      Vector dy = y - y_check;
      double dn = dy.lpNorm<Eigen::Infinity>();
      if (qp.P.rows() == qp.n_u_f && it > 200 && dn > 1e-12 && dy.minCoeff() > -1e-12 * dn) {
        double ortho = (qp.G.transpose() * dy).lpNorm<Eigen::Infinity>();
        double gain = qp.h.dot(dy);
        if (ortho < 1e-10 * dn * (1.0 + qp.G.lpNorm<Eigen::Infinity>()) && gain < -1e-10 * dn) {
          sol.status = QpStatus::Infeasible;
          ++it;
          break;
        }
      }
      y_check = y;
      // balance the residuals by adapting rho; the splitting fixed point is
      // unchanged, only the convergence rate
      double ratio = (rp / scale_p) / std::max(rd / scale_d, 1e-300);
      double rho_new = std::clamp(rho * std::sqrt(ratio), 1e-6, 1e6);
      if (rho_new > 5.0 * rho || rho_new < rho / 5.0) {
        rho = rho_new;
        refactor();
      }
    }
  }

  sol.iterations = it;
  if (sol.status != QpStatus::Infeasible) {
    polish(qp, z, y);
    sol.kkt_residual = kkt_residual_of(qp, z, y);
    double viol = std::max(0.0, (qp.G * z - qp.h).maxCoeff());
    if (sol.kkt_residual < 1e-8 && viol < 1e-8) sol.status = QpStatus::Optimal;
  }
  sol.z = z;
  sol.duals = y;
  if (qp.P.rows() > qp.n_u_f)
    sol.slack_usage = sol.z.tail(qp.P.rows() - qp.n_u_f).cwiseMax(0.0).maxCoeff();
  return sol;
}

Controller::Controller(const PredictorTheta& theta, const MpcConfig& cfg,
                       std::optional<Matrix> sigma_theta)
    : cfg_(cfg),
      theta_(theta),
      lifted_(assemble(theta, cfg.horizons)),
      sigma_theta_(std::move(sigma_theta)) {
  if (cfg_.fce_enabled && !sigma_theta_)
    throw Error("Controller: FCE mode needs a posterior covariance");
  const int nu = theta_.structure.n_u;
  const int ny = theta_.structure.n_y;
  for (int i = 0; i < cfg_.horizons.Lp; ++i) {
    hist_u_.emplace_back(Vector::Zero(nu));
    hist_y_.emplace_back(Vector::Zero(ny));
  }
  last_plan_ = Vector::Zero(static_cast<Eigen::Index>(nu) * cfg_.horizons.Lf);
}

Vector Controller::past_inputs() const {
  const int nu = theta_.structure.n_u;
  Vector up(static_cast<Eigen::Index>(nu) * cfg_.horizons.Lp);
  for (int i = 0; i < cfg_.horizons.Lp; ++i)
    up.segment(static_cast<Eigen::Index>(i) * nu, nu) = hist_u_[static_cast<std::size_t>(i)];
  return up;
}

Vector Controller::past_outputs() const {
  const int ny = theta_.structure.n_y;
  Vector yp(static_cast<Eigen::Index>(ny) * cfg_.horizons.Lp);
  for (int i = 0; i < cfg_.horizons.Lp; ++i)
    yp.segment(static_cast<Eigen::Index>(i) * ny, ny) = hist_y_[static_cast<std::size_t>(i)];
  return yp;
}

Vector Controller::plan(const Vector& r_preview, StepDiagnostics* diag) {
  Vector u_p = past_inputs();
  Vector y_p = past_outputs();

  FceQuadratic fce;
  const FceQuadratic* fce_ptr = nullptr;
  if (cfg_.fce_enabled) {
    TaskPoint task{u_p, y_p, last_plan_};
    SensitivityBundle bundle = jacobian(theta_, cfg_.horizons, task).bundle;
    Matrix Q_lift = cfg_.Q_weight * Matrix::Identity(lifted_.A.rows(), lifted_.A.rows());
    fce = fce_quadratic(bundle, *sigma_theta_, Q_lift);
    fce_ptr = &fce;
  }

  QpProblem qp = build_qp(lifted_, u_p, y_p, r_preview, cfg_, fce_ptr);

  const Vector* warm = nullptr;
  Vector warm_z;
  if (have_warm_ && warm_.size() == qp.P.rows()) {
    warm_z = warm_;
    warm = &warm_z;
  }
  QpSolution sol = solve_qp(qp, warm);
  if (diag != nullptr) {
    diag->qp_iters = sol.iterations;
    diag->kkt_residual = sol.kkt_residual;
    diag->slack_usage = sol.slack_usage;
    diag->status = sol.status;
  }
  if (sol.status == QpStatus::Infeasible)
    throw RunInvalid("Controller: infeasible QP in hard output mode");

  const int nu = theta_.structure.n_u;
  last_plan_ = sol.z.head(qp.n_u_f);
  // warm start for the next step: shift the plan one step, repeat the tail
  warm_ = sol.z;
  warm_.head(qp.n_u_f - nu) = sol.z.segment(nu, qp.n_u_f - nu);
  warm_.segment(qp.n_u_f - nu, nu) = sol.z.segment(qp.n_u_f - nu, nu);
  have_warm_ = true;
  return last_plan_.head(nu);
}

void Controller::record(const Vector& u_apply, const Vector& y_meas) {
  hist_u_.pop_front();
  hist_u_.push_back(u_apply);
  hist_y_.pop_front();
  hist_y_.push_back(y_meas);
}

Vector Controller::control_step(const Vector& y_meas, const Vector& r_preview,
                                StepDiagnostics* diag) {
  Vector u = plan(r_preview, diag);
  record(u, y_meas);
  return u;
}

ClosedLoopRun run_closed_loop(const LtiSystem& sys, Controller& controller,
                              const std::vector<double>& r, long n_test, RngState& rng) {
  const MpcConfig& cfg = controller.config();
  const int ny = static_cast<int>(sys.ny());
  const int Lf = cfg.horizons.Lf;
  if (static_cast<long>(r.size()) < n_test)
    throw Error("run_closed_loop: reference shorter than n_test");

  auto r_at = [&](long t) { return r[static_cast<std::size_t>(std::min<long>(t, static_cast<long>(r.size()) - 1))]; };

  ClosedLoopRun run;
  Vector x = Vector::Zero(sys.n());
  const double sw = std::sqrt(sys.sigma_w2);
  const double sv = std::sqrt(sys.sigma_v2);

  for (long t = 0; t < n_test; ++t) {
    Vector r_preview(static_cast<Eigen::Index>(ny) * Lf);
    for (int k = 0; k < Lf; ++k)
      r_preview.segment(static_cast<Eigen::Index>(k) * ny, ny).setConstant(r_at(t + k));

    TaskPoint task;
    task.u_p = controller.past_inputs();
    task.y_p = controller.past_outputs();

    StepDiagnostics diag;
    Vector u = controller.plan(r_preview, &diag);
    task.u_f = controller.last_plan();
    run.tasks.push_back(std::move(task));
    run.diag.push_back(diag);

    Vector v = Vector::Zero(ny);
    for (int i = 0; i < ny; ++i) v(i) = sv * rng.next_gaussian();
    Vector y = sys.C * x + sys.D * u + v;
    controller.record(u, y);

    Vector rt = Vector::Constant(ny, r_at(t));
    run.cost_J += cfg.Q_weight * (rt - y).squaredNorm() + cfg.R_weight * u.squaredNorm();
    run.traj.u.push_back(u);
    run.traj.y.push_back(y);
    run.traj.r.push_back(rt);

    Vector w = Vector::Zero(sys.n());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = sw * rng.next_gaussian();
    x = sys.A * x + sys.B * u + w;
  }
  return run;
}

std::string closed_loop_to_csv(const ClosedLoopRun& run) {
  std::string base = trajectory_to_csv(run.traj);
  std::istringstream is(base);
  std::ostringstream os;
  std::string line;
  std::getline(is, line);
  os << line << ",qp_iters,kkt_residual,slack_usage\n";
  std::size_t i = 0;
  char buf[80];
  while (std::getline(is, line)) {
    const StepDiagnostics& d = run.diag[i++];
    std::snprintf(buf, sizeof(buf), ",%d,%.17g,%.17g", d.qp_iters, d.kkt_residual,
                  d.slack_usage);
    os << line << buf << "\n";
  }
  return os.str();
}

std::string closed_loop_summary_json(const ClosedLoopRun& run) {
  nlohmann::json j;
  j["cost_J"] = run.cost_J;
  j["valid"] = run.valid;
  j["n_steps"] = run.traj.length();
  return j.dump(2);
}

}  // namespace ddpc
