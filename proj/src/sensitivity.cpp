#include "ddpc/sensitivity.hpp"

#include <nlohmann/json.hpp>

namespace ddpc {

PlacementIndex placements(const ArxStructure& s, const Horizons& h) {
  if (s.na > h.Lp || s.nb > h.Lp)
    throw OrderExceedsHorizon("placements: ARX order exceeds past horizon");

  PlacementIndex idx;
  idx.structure = s;
  idx.horizons = h;
  idx.coords.resize(static_cast<std::size_t>(s.n_theta()));

  auto add_y = [&](int lag, int r, int c, CoordPlacement& cp) {
    // Psi_y block(k,l): lag = Lp - l + k
    for (int k = 1; k <= h.Lf; ++k) {
      int l = h.Lp - lag + k;
      if (l >= 1 && l <= h.Lp)
        cp.psi_y.emplace_back((k - 1) * s.n_y + r, (l - 1) * s.n_y + c);
    }
    // Phi_y block(k,l): lag = k - l, strictly below the diagonal
    for (int l = 1; l + lag <= h.Lf; ++l)
      cp.phi_y.emplace_back((l + lag - 1) * s.n_y + r, (l - 1) * s.n_y + c);
  };
  auto add_u = [&](int lag, int r, int c, CoordPlacement& cp) {
    for (int k = 1; k <= h.Lf; ++k) {
      int l = h.Lp - lag + k;
      if (l >= 1 && l <= h.Lp)
        cp.psi_u.emplace_back((k - 1) * s.n_y + r, (l - 1) * s.n_u + c);
    }
    for (int l = 1; l + lag <= h.Lf; ++l)
      cp.phi_u.emplace_back((l + lag - 1) * s.n_y + r, (l - 1) * s.n_u + c);
  };

  for (int lag = 1; lag <= s.na; ++lag)
    for (int c = 0; c < s.n_y; ++c)
      for (int r = 0; r < s.n_y; ++r)
        add_y(lag, r, c, idx.coords[static_cast<std::size_t>(s.y_offset(lag) + c * s.n_y + r)]);
  for (int lag = s.first_u_lag(); lag <= s.nb; ++lag)
    for (int c = 0; c < s.n_u; ++c)
      for (int r = 0; r < s.n_y; ++r)
        add_u(lag, r, c, idx.coords[static_cast<std::size_t>(s.u_offset(lag) + c * s.n_y + r)]);
  return idx;
}

namespace {

// E_i * v for a placement list: gather v entries into the output rows.
Vector gather(const std::vector<std::pair<Eigen::Index, Eigen::Index>>& pos, const Vector& v,
              Eigen::Index out_dim) {
  Vector out = Vector::Zero(out_dim);
  for (const auto& [r, c] : pos) out(r) += v(c);
  return out;
}

// E_i * G for a placement list: row r of the result accumulates row c of G.
Matrix gather_rows(const std::vector<std::pair<Eigen::Index, Eigen::Index>>& pos,
                   const Matrix& G, Eigen::Index out_rows) {
  Matrix out = Matrix::Zero(out_rows, G.cols());
  for (const auto& [r, c] : pos) out.row(r) += G.row(c);
  return out;
}

}  // namespace

Matrix SensitivityBundle::jacobian_at(const Vector& u_f) const {
  Matrix J = J0;
  for (Eigen::Index i = 0; i < J.cols(); ++i) J.col(i) += J1[static_cast<std::size_t>(i)] * u_f;
  return J;
}

JacobianResult jacobian(const PredictorTheta& theta_bar, const Horizons& h,
                        const TaskPoint& task) {
  const ArxStructure& s = theta_bar.structure;
  LiftedPredictor lp = assemble(theta_bar, h);
  const Eigen::Index ne = lp.A.rows();  // ny * Lf
  require_dims(task.u_p.size() == lp.Psi_u.cols() && task.y_p.size() == lp.Psi_y.cols() &&
                   task.u_f.size() == lp.Phi_u.cols(),
               "jacobian: task dims vs horizons");

  PlacementIndex idx = placements(s, h);
  auto lower_solve = [&](const auto& rhs) {
    return lp.A.triangularView<Eigen::Lower>().solve(rhs).eval();
  };

  Vector b_bar = lp.Psi_u * task.u_p + lp.Psi_y * task.y_p;
  Vector yhat_free = lower_solve(b_bar);                         // A^-1 b
  Vector yhat = lower_solve(Vector(b_bar + lp.Phi_u * task.u_f));  // nominal prediction
  Matrix G = lower_solve(lp.Phi_u);                              // A^-1 Phi_u

  const Eigen::Index ntheta = s.n_theta();
  JacobianResult res;
  res.J = Matrix::Zero(ne, ntheta);
  res.bundle.J0 = Matrix::Zero(ne, ntheta);
  res.bundle.J1.resize(static_cast<std::size_t>(ntheta));
  res.bundle.theta_bar = theta_bar;
  res.bundle.u_p = task.u_p;
  res.bundle.y_p = task.y_p;

  for (Eigen::Index i = 0; i < ntheta; ++i) {
    const CoordPlacement& cp = idx.coords[static_cast<std::size_t>(i)];
    Vector past = gather(cp.psi_u, task.u_p, ne) + gather(cp.psi_y, task.y_p, ne);
    res.J.col(i) =
        lower_solve(Vector(past + gather(cp.phi_u, task.u_f, ne) + gather(cp.phi_y, yhat, ne)));
    res.bundle.J0.col(i) = lower_solve(Vector(past + gather(cp.phi_y, yhat_free, ne)));

    Matrix e_phi_u = Matrix::Zero(ne, lp.Phi_u.cols());
    for (const auto& [r, c] : cp.phi_u) e_phi_u(r, c) += 1.0;
    res.bundle.J1[static_cast<std::size_t>(i)] =
        lower_solve(Matrix(e_phi_u + gather_rows(cp.phi_y, G, ne)));
  }
  return res;
}

Matrix output_covariance(const Matrix& J, const Matrix& sigma_theta) {
  require_dims(J.cols() == sigma_theta.rows(), "output_covariance: dims");
  return symmetrize(J * sigma_theta * J.transpose());
}

Matrix output_covariance(const SensitivityBundle& bundle, const Matrix& sigma_theta,
                         const Vector& u_f) {
  return output_covariance(bundle.jacobian_at(u_f), sigma_theta);
}

double fce_term(const SensitivityBundle& bundle, const Matrix& sigma_theta,
                const Matrix& Q_lift, const Vector& u_f) {
  Matrix J = bundle.jacobian_at(u_f);
  return (Q_lift * (J * sigma_theta * J.transpose())).trace();
}

FceQuadratic fce_quadratic(const SensitivityBundle& bundle, const Matrix& sigma_theta,
                           const Matrix& Q_lift) {
  const Eigen::Index ntheta = bundle.J0.cols();
  const Eigen::Index nuf = bundle.J1.empty() ? 0 : bundle.J1.front().cols();
  FceQuadratic q;
  q.Hq = Matrix::Zero(nuf, nuf);
  q.hlin = Vector::Zero(nuf);
  q.c0 = 0.0;

  std::vector<Matrix> QJ1(static_cast<std::size_t>(ntheta));
  Matrix QJ0 = Q_lift * bundle.J0;
  for (Eigen::Index j = 0; j < ntheta; ++j)
    QJ1[static_cast<std::size_t>(j)] = Q_lift * bundle.J1[static_cast<std::size_t>(j)];

  for (Eigen::Index i = 0; i < ntheta; ++i) {
    const Matrix& J1i = bundle.J1[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < ntheta; ++j) {
      double w = sigma_theta(i, j);
      if (w == 0.0) continue;
      q.Hq.noalias() += w * (J1i.transpose() * QJ1[static_cast<std::size_t>(j)]);
      q.hlin.noalias() += w * (J1i.transpose() * QJ0.col(j));
      q.c0 += w * bundle.J0.col(i).dot(QJ0.col(j));
    }
  }
  q.Hq = symmetrize(q.Hq);
  return q;
}

Matrix task_sensitivity(const PredictorTheta& theta_bar, const Horizons& h,
                        const std::vector<TaskPoint>& tasks, const Matrix& Q_lift) {
  if (tasks.empty()) throw EmptyTaskSet("task_sensitivity: no task points");
  const Eigen::Index ntheta = theta_bar.structure.n_theta();
  Matrix W = Matrix::Zero(ntheta, ntheta);
  for (const TaskPoint& task : tasks) {
    Matrix J = jacobian(theta_bar, h, task).J;
    W.noalias() += J.transpose() * Q_lift * J;
  }
  W /= static_cast<double>(tasks.size());
  return symmetrize(W);
}

Matrix normalize_w(const Matrix& W_bar) {
  double tr = W_bar.trace();
  if (!(tr > 0.0)) throw ZeroTrace("normalize_w: nonpositive trace");
  return W_bar * (static_cast<double>(W_bar.rows()) / tr);
}

std::string w_to_json(const Matrix& W_bar, int n_tasks, bool normalized) {
  nlohmann::json j;
  j["n_tasks"] = n_tasks;
  j["normalized"] = normalized;
  j["trace"] = W_bar.trace();
  std::vector<std::vector<double>> w(W_bar.rows());
  for (Eigen::Index r = 0; r < W_bar.rows(); ++r) {
    w[r].resize(W_bar.cols());
    for (Eigen::Index c = 0; c < W_bar.cols(); ++c) w[r][c] = W_bar(r, c);
  }
  j["w"] = w;
  return j.dump(2);
}

Matrix w_from_json(const std::string& text) {
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    const auto& w = j.at("w");
    Matrix W(w.size(), w.empty() ? 0 : w[0].size());
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = w[r][c].get<double>();
    return W;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("w json: ") + e.what());
  }
}

}  // namespace ddpc
