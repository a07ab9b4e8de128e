#include "ddpc/plant.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

namespace ddpc {

LtiSystem benchmark_system(double sigma_w2, double sigma_v2) {
  LtiSystem sys;
  sys.A = Matrix(2, 2);
  sys.A << 0.7326, -0.0861, 0.1722, 0.9909;
  sys.B = Matrix(2, 1);
  sys.B << 0.0609, 0.0064;
  sys.C = Matrix(1, 2);
  sys.C << 0.0, 1.4142;
  sys.D = Matrix::Zero(1, 1);
  sys.sigma_w2 = sigma_w2;
  sys.sigma_v2 = sigma_v2;
  return sys;
}

double training_reference(Regime regime, long t) {
  if (regime == Regime::Informative) {
    long phase = ((t % 50) + 50) % 50;
    return phase < 25 ? 1.0 : -1.0;
  }
  return std::sin(2.0 * M_PI * static_cast<double>(t) / 75.0);
}

std::pair<Vector, Vector> step(const LtiSystem& sys, const Vector& x, const Vector& u,
                               RngState& rng) {
  require_dims(x.size() == sys.n() && u.size() == sys.nu(), "step: state/input dims");
  Vector w = Vector::Zero(sys.n());
  Vector v = Vector::Zero(sys.ny());
  const double sw = std::sqrt(sys.sigma_w2);
  const double sv = std::sqrt(sys.sigma_v2);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = sw * rng.next_gaussian();
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = sv * rng.next_gaussian();
  Vector y = sys.C * x + sys.D * u + v;
  Vector x_next = sys.A * x + sys.B * u + w;
  return {x_next, y};
}

Trajectory collect_training_data(const LtiSystem& sys, Regime regime, long n_train,
                                 RngState& rng) {
  Trajectory traj;
  traj.u.reserve(static_cast<std::size_t>(n_train));
  traj.y.reserve(static_cast<std::size_t>(n_train));
  traj.r.reserve(static_cast<std::size_t>(n_train));
  Vector x = Vector::Zero(sys.n());
  for (long t = 0; t < n_train; ++t) {
    Vector r = Vector::Constant(sys.ny(), training_reference(regime, t));
    // u = r - y with y = Cx + Du + v is an algebraic loop when D != 0;
    // solve (I + D) u = r - Cx - v so the feedback identity holds exactly.
    Vector v = Vector::Zero(sys.ny());
    const double sv = std::sqrt(sys.sigma_v2);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = sv * rng.next_gaussian();
    Vector u, y;
    if (sys.D.cwiseAbs().maxCoeff() > 0.0) {
      Matrix loop = Matrix::Identity(sys.ny(), sys.ny()) + sys.D;
      u = loop.partialPivLu().solve(r - sys.C * x - v);
      y = sys.C * x + sys.D * u + v;
    } else {
      y = sys.C * x + v;
      u = r - y;  // feedback identity holds bitwise
    }
    Vector w = Vector::Zero(sys.n());
    const double sw = std::sqrt(sys.sigma_w2);
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = sw * rng.next_gaussian();
    x = sys.A * x + sys.B * u + w;
    traj.u.push_back(u);
    traj.y.push_back(y);
    traj.r.push_back(r);
  }
  return traj;
}

KalmanGain steady_state_kf(const LtiSystem& sys) {
  const Eigen::Index n = sys.n();
  Matrix Sw = sys.sigma_w2 * Matrix::Identity(n, n);
  Matrix Sv = sys.sigma_v2 * Matrix::Identity(sys.ny(), sys.ny());
  Matrix P = Sw;
  for (int it = 0; it < 100000; ++it) {
    Matrix S = sys.C * P * sys.C.transpose() + Sv;
    CholFactor fs = chol_factor(symmetrize(S), 0.0);
    Matrix G = chol_solve(fs, Matrix(sys.C * P * sys.A.transpose())).transpose();  // A P C' S^-1
    Matrix P_next = symmetrize(sys.A * P * sys.A.transpose() - G * sys.C * P * sys.A.transpose() + Sw);
    double res = (P_next - P).norm();
    P = P_next;
    if (res < 1e-12) {
      Matrix Sfin = sys.C * P * sys.C.transpose() + Sv;
      CholFactor f = chol_factor(symmetrize(Sfin), 0.0);
      KalmanGain kg;
      kg.K = chol_solve(f, Matrix(sys.C * P * sys.A.transpose())).transpose();
      kg.P = P;
      return kg;
    }
  }
  throw NoConvergence("steady_state_kf: DARE iteration cap reached");
}

Vector kf_filter_step(const KalmanGain& gain, const LtiSystem& sys, const Vector& xhat,
                      const Vector& u, const Vector& y) {
  require_dims(xhat.size() == sys.n() && u.size() == sys.nu() && y.size() == sys.ny(),
               "kf_filter_step: dims");
  return (sys.A - gain.K * sys.C) * xhat + (sys.B - gain.K * sys.D) * u + gain.K * y;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string trajectory_to_csv(const Trajectory& traj) {
  const Eigen::Index nu = traj.u.empty() ? 0 : traj.u.front().size();
  const Eigen::Index ny = traj.y.empty() ? 0 : traj.y.front().size();
  std::ostringstream os;
  os << "t";
  for (Eigen::Index i = 0; i < nu; ++i) os << ",u_" << (i + 1);
  for (Eigen::Index i = 0; i < ny; ++i) os << ",y_" << (i + 1);
  for (Eigen::Index i = 0; i < ny; ++i) os << ",r_" << (i + 1);
  os << "\n";
  for (std::size_t t = 0; t < traj.length(); ++t) {
    os << (traj.t0 + static_cast<long>(t));
    for (Eigen::Index i = 0; i < nu; ++i) os << "," << fmt17(traj.u[t](i));
    for (Eigen::Index i = 0; i < ny; ++i) os << "," << fmt17(traj.y[t](i));
    for (Eigen::Index i = 0; i < ny; ++i)
      os << "," << fmt17(t < traj.r.size() ? traj.r[t](i) : 0.0);
    os << "\n";
  }
  return os.str();
}

Trajectory trajectory_from_csv(const std::string& csv, Eigen::Index nu, Eigen::Index ny) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line)) throw DataError("trajectory csv: empty file");
  if (line.rfind("t,", 0) != 0) throw DataError("trajectory csv: bad header: " + line);
  Trajectory traj;
  bool first = true;
  long row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ls, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError("trajectory csv: malformed number at row " + std::to_string(row));
      }
    }
    if (static_cast<Eigen::Index>(vals.size()) != 1 + nu + 2 * ny)
      throw DataError("trajectory csv: wrong column count at row " + std::to_string(row));
    if (first) {
      traj.t0 = static_cast<long>(vals[0]);
      first = false;
    }
    Vector u(nu), y(ny), r(ny);
    for (Eigen::Index i = 0; i < nu; ++i) u(i) = vals[1 + i];
    for (Eigen::Index i = 0; i < ny; ++i) y(i) = vals[1 + nu + i];
    for (Eigen::Index i = 0; i < ny; ++i) r(i) = vals[1 + nu + ny + i];
    traj.u.push_back(u);
    traj.y.push_back(y);
    traj.r.push_back(r);
  }
  return traj;
}

}  // namespace ddpc
