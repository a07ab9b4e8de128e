#include "ddpc/ident.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <nlohmann/json.hpp>

namespace ddpc {

namespace {
constexpr double kSigma2Floor = 1e-12;
}

Matrix PredictorTheta::phi_y(int lag) const {
  Matrix m = Matrix::Zero(structure.n_y, structure.n_y);
  if (lag >= 1 && lag <= structure.na) {
    Eigen::Index off = structure.y_offset(lag);
    for (int c = 0; c < structure.n_y; ++c)
      for (int r = 0; r < structure.n_y; ++r) m(r, c) = values(off + c * structure.n_y + r);
  }
  return m;
}

Matrix PredictorTheta::phi_u(int lag) const {
  Matrix m = Matrix::Zero(structure.n_y, structure.n_u);
  if (lag >= structure.first_u_lag() && lag <= structure.nb) {
    Eigen::Index off = structure.u_offset(lag);
    for (int c = 0; c < structure.n_u; ++c)
      for (int r = 0; r < structure.n_y; ++r) m(r, c) = values(off + c * structure.n_y + r);
  }
  return m;
}

PredictorTheta make_theta(const ArxStructure& s, const Vector& values) {
  require_dims(values.size() == s.n_theta(), "make_theta: value length mismatch");
  return PredictorTheta{s, values};
}

RegressionProblem build_regression(const Trajectory& traj, const ArxStructure& s) {
  const long N = static_cast<long>(traj.length());
  const long p = std::max(s.na, s.nb);
  if (N <= p) throw InsufficientData("build_regression: trajectory shorter than lag depth");

  const long steps = N - p;
  const Eigen::Index ntheta = s.n_theta();
  RegressionProblem prob;
  prob.H = Matrix::Zero(steps * s.n_y, ntheta);
  prob.yvec = Vector::Zero(steps * s.n_y);

  for (long t = p; t < N; ++t) {
    const long row0 = (t - p) * s.n_y;
    for (int k = 0; k < s.n_y; ++k) prob.yvec(row0 + k) = traj.y[t](k);
    for (int i = 1; i <= s.na; ++i) {
      const Vector& yp = traj.y[t - i];
      Eigen::Index off = s.y_offset(i);
      for (int m = 0; m < s.n_y; ++m)
        for (int k = 0; k < s.n_y; ++k) prob.H(row0 + k, off + m * s.n_y + k) = yp(m);
    }
    for (int j = s.first_u_lag(); j <= s.nb; ++j) {
      const Vector& up = traj.u[t - j];
      Eigen::Index off = s.u_offset(j);
      for (int m = 0; m < s.n_u; ++m)
        for (int k = 0; k < s.n_y; ++k) prob.H(row0 + k, off + m * s.n_y + k) = up(m);
    }
  }
  return prob;
}

PosteriorEstimate ols_estimate(const RegressionProblem& prob, const ArxStructure& s,
                               bool allow_ridge_fallback) {
  const Eigen::Index ntheta = s.n_theta();
  require_dims(prob.H.cols() == ntheta, "ols_estimate: regressor width mismatch");
  Matrix HtH = symmetrize(prob.H.transpose() * prob.H);
  Vector Hty = prob.H.transpose() * prob.yvec;

  PosteriorEstimate est;
  est.method = EstimMethod::OLS;
  CholFactor f;
  try {
    f = chol_factor(HtH, 0.0);
    if (f.applied_jitter > 0.0) throw NotPositiveDefinite("jittered");
  } catch (const NotPositiveDefinite&) {
    if (!allow_ridge_fallback)
      throw RankDeficient("ols_estimate: H'H singular (weak excitation)");
    f = chol_factor(Matrix(HtH + 1e-8 * Matrix::Identity(ntheta, ntheta)), 0.0);
    est.ridge_fallback = true;
  }

  Vector theta = chol_solve(f, Hty);
  double rss = (prob.yvec - prob.H * theta).squaredNorm();
  long dof = std::max<long>(1, prob.H.rows() - ntheta);
  double sigma2 = std::max(kSigma2Floor, rss / static_cast<double>(dof));

  est.theta_bar = make_theta(s, theta);
  est.sigma_theta = symmetrize(sigma2 * chol_solve(f, Matrix(Matrix::Identity(ntheta, ntheta))));
  est.sigma2 = sigma2;
  return est;
}

namespace {

double kernel_entry(KernelFamily family, double c, double lambda, int i, int j) {
  int mx = std::max(i, j);
  if (family == KernelFamily::TC) return c * std::pow(lambda, mx);
  return c * (std::pow(lambda, i + j + mx) / 2.0 - std::pow(lambda, 3 * mx) / 6.0);
}

}  // namespace

Matrix kernel_matrix(const KernelConfig& cfg, const ArxStructure& s) {
  const Eigen::Index ntheta = s.n_theta();
  Matrix K = Matrix::Zero(ntheta, ntheta);
  const int ny2 = s.n_y * s.n_y;
  const int nyu = s.n_y * s.n_u;
  // output block: phi_y^i has lag index i
  for (int i = 1; i <= s.na; ++i)
    for (int j = 1; j <= s.na; ++j) {
      double k = kernel_entry(cfg.family, cfg.c_y, cfg.lambda_y, i, j);
      for (int e = 0; e < ny2; ++e) K(s.y_offset(i) + e, s.y_offset(j) + e) = k;
    }
  // input block: phi_u^j has lag index j+1 so every index is >= 1
  for (int i = s.first_u_lag(); i <= s.nb; ++i)
    for (int j = s.first_u_lag(); j <= s.nb; ++j) {
      double k = kernel_entry(cfg.family, cfg.c_u, cfg.lambda_u, i + 1, j + 1);
      for (int e = 0; e < nyu; ++e) K(s.u_offset(i) + e, s.u_offset(j) + e) = k;
    }
  return K;
}

namespace {

// Shared closed form for the regularized posteriors:
// precision = s^-2 H'H + K^-1 + mu*W, mean = precision^-1 (s^-2 H'y + mu*W*tb).
PosteriorEstimate regularized_posterior(const RegressionProblem& prob, const ArxStructure& s,
                                        const Matrix& K, double sigma2, double mu,
                                        const Matrix* W, const Vector* theta_anchor) {
  const Eigen::Index ntheta = s.n_theta();
  require_dims(prob.H.cols() == ntheta && K.rows() == ntheta && K.cols() == ntheta,
               "kernel posterior: dims");
  if (sigma2 <= 0.0) throw Error("kernel posterior: sigma2 must be positive");

  CholFactor fK = chol_factor(K, 0.0);
  Matrix Kinv = symmetrize(chol_solve(fK, Matrix(Matrix::Identity(ntheta, ntheta))));
  Matrix precision = symmetrize(prob.H.transpose() * prob.H) / sigma2 + Kinv;
  Vector rhs = prob.H.transpose() * prob.yvec / sigma2;
  if (mu != 0.0 && W != nullptr) {
    precision += mu * (*W);
    rhs += mu * (*W) * (*theta_anchor);
  }
  CholFactor fP = chol_factor(symmetrize(precision), 0.0);
  Vector theta = chol_solve(fP, rhs);

  PosteriorEstimate est;
  est.theta_bar = make_theta(s, theta);
  est.sigma_theta = symmetrize(chol_solve(fP, Matrix(Matrix::Identity(ntheta, ntheta))));
  est.sigma2 = sigma2;
  return est;
}

}  // namespace

PosteriorEstimate kernel_posterior(const RegressionProblem& prob, const ArxStructure& s,
                                   const Matrix& K, double sigma2,
                                   std::optional<KernelConfig> provenance) {
  PosteriorEstimate est = regularized_posterior(prob, s, K, sigma2, 0.0, nullptr, nullptr);
  est.method = EstimMethod::SS;
  est.kernel = provenance;
  return est;
}

PosteriorEstimate shaped_estimate(const RegressionProblem& prob, const ArxStructure& s,
                                  const Matrix& K, double sigma2,
                                  const PredictorTheta& theta_bar, const Matrix& W_bar,
                                  double mu) {
  if (mu < 0.0) throw Error("shaped_estimate: mu must be nonnegative");
  PosteriorEstimate est = regularized_posterior(prob, s, K, sigma2, mu, &W_bar,
                                                mu != 0.0 ? &theta_bar.values : nullptr);
  est.method = EstimMethod::SSW;
  return est;
}

double eb_objective(const RegressionProblem& prob, const Matrix& K, double sigma2) {
  // log det(HKH' + s2 I) + y'(HKH' + s2 I)^-1 y, via the n_theta-sized
  // factors of K and M = K^-1 + s^-2 H'H (matrix determinant/inversion lemma).
  const double N = static_cast<double>(prob.H.rows());
  CholFactor fK = chol_factor(K, 0.0);
  Matrix Kinv = symmetrize(chol_solve(fK, Matrix(Matrix::Identity(K.rows(), K.cols()))));
  Matrix M = Kinv + symmetrize(prob.H.transpose() * prob.H) / sigma2;
  CholFactor fM = chol_factor(symmetrize(M), 0.0);
  Vector Hty = prob.H.transpose() * prob.yvec;
  double ld = N * std::log(sigma2) + logdet(fK) + logdet(fM);
  double quad = (prob.yvec.squaredNorm() - Hty.dot(chol_solve(fM, Hty)) / sigma2) / sigma2;
  return ld + quad;
}

namespace {

struct EbWork {
  const RegressionProblem* prob;
  KernelFamily family;
  const ArxStructure* structure;
};

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

// x = (log c_y, log lambda_y, log c_u, log lambda_u, log sigma2), clamped
// to the KernelConfig bounds before evaluation.
double eb_eval(const EbWork& w, const Eigen::Matrix<double, 5, 1>& x) {
  KernelConfig cfg;
  cfg.family = w.family;
  cfg.c_y = clamp(std::exp(x(0)), KernelConfig::c_min, KernelConfig::c_max);
  cfg.lambda_y = clamp(std::exp(x(1)), KernelConfig::lambda_min, KernelConfig::lambda_max);
  cfg.c_u = clamp(std::exp(x(2)), KernelConfig::c_min, KernelConfig::c_max);
  cfg.lambda_u = clamp(std::exp(x(3)), KernelConfig::lambda_min, KernelConfig::lambda_max);
  double sigma2 = clamp(std::exp(x(4)), 1e-10, 1e6);
  try {
    return eb_objective(*w.prob, kernel_matrix(cfg, *w.structure), sigma2);
  } catch (const NotPositiveDefinite&) {
    return std::numeric_limits<double>::infinity();
  }
}

using Point5 = Eigen::Matrix<double, 5, 1>;

// Standard Nelder-Mead on R^5 with the usual 1/2/0.5/0.5 coefficients.
Point5 nelder_mead(const std::function<double(const Point5&)>& f, const Point5& x0,
                   int max_iter) {
  const int n = 5;
  std::vector<Point5> simplex(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (int i = 0; i < n; ++i) simplex[i + 1](i) += 0.25;
  for (int i = 0; i <= n; ++i) fv[i] = f(simplex[i]);

  for (int it = 0; it < max_iter; ++it) {
    std::vector<int> ord(n + 1);
    for (int i = 0; i <= n; ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    std::vector<Point5> sx(n + 1);
    std::vector<double> sf(n + 1);
    for (int i = 0; i <= n; ++i) {
      sx[i] = simplex[ord[i]];
      sf[i] = fv[ord[i]];
    }
    simplex = sx;
    fv = sf;
    if (std::abs(fv[n] - fv[0]) < 1e-10 * (1.0 + std::abs(fv[0]))) break;

    Point5 centroid = Point5::Zero();
    for (int i = 0; i < n; ++i) centroid += simplex[i];
    centroid /= n;

    Point5 xr = centroid + (centroid - simplex[n]);
    double fr = f(xr);
    if (fr < fv[0]) {
      Point5 xe = centroid + 2.0 * (centroid - simplex[n]);
      double fe = f(xe);
      if (fe < fr) {
        simplex[n] = xe;
        fv[n] = fe;
      } else {
        simplex[n] = xr;
        fv[n] = fr;
      }
    } else if (fr < fv[n - 1]) {
      simplex[n] = xr;
      fv[n] = fr;
    } else {
      Point5 xc = centroid + 0.5 * (simplex[n] - centroid);
      double fc = f(xc);
      if (fc < fv[n]) {
        simplex[n] = xc;
        fv[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0]);
          fv[i] = f(simplex[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (fv[i] < fv[best]) best = i;
  return simplex[best];
}

}  // namespace

EbResult eb_tune(const RegressionProblem& prob, const ArxStructure& s, KernelFamily family) {
  if (prob.H.rows() < s.n_theta() + 1)
    throw InsufficientData("eb_tune: need more rows than parameters");

  EbWork work{&prob, family, &s};

  // 5-point log grids within the kernel bounds; sigma2 grid scaled by the
  // output variance so it brackets plausible noise floors.
  std::array<double, 5> cs{};
  for (int i = 0; i < 5; ++i)
    cs[i] = std::exp(std::log(KernelConfig::c_min) +
                     i * (std::log(KernelConfig::c_max) - std::log(KernelConfig::c_min)) / 4.0);
  std::array<double, 5> ls{};
  for (int i = 0; i < 5; ++i)
    ls[i] = std::exp(std::log(KernelConfig::lambda_min) +
                     i * (std::log(KernelConfig::lambda_max) - std::log(KernelConfig::lambda_min)) / 4.0);
  double yvar = std::max(1e-8, prob.yvec.squaredNorm() / static_cast<double>(prob.yvec.size()));
  std::array<double, 5> s2s{1e-4 * yvar, 1e-3 * yvar, 1e-2 * yvar, 1e-1 * yvar, yvar};

  Point5 best = Point5::Zero();
  double best_f = std::numeric_limits<double>::infinity();
  for (double cy : cs)
    for (double ly : ls)
      for (double cu : cs)
        for (double lu : ls)
          for (double s2 : s2s) {
            Point5 x;
            x << std::log(cy), std::log(ly), std::log(cu), std::log(lu), std::log(s2);
            double f = eb_eval(work, x);
            if (f < best_f) {
              best_f = f;
              best = x;
            }
          }

  Point5 refined = nelder_mead([&](const Point5& x) { return eb_eval(work, x); }, best, 500);
  double refined_f = eb_eval(work, refined);
  if (refined_f > best_f) {
    refined = best;
    refined_f = best_f;
  }

  EbResult res;
  res.kernel.family = family;
  res.kernel.c_y = clamp(std::exp(refined(0)), KernelConfig::c_min, KernelConfig::c_max);
  res.kernel.lambda_y = clamp(std::exp(refined(1)), KernelConfig::lambda_min, KernelConfig::lambda_max);
  res.kernel.c_u = clamp(std::exp(refined(2)), KernelConfig::c_min, KernelConfig::c_max);
  res.kernel.lambda_u = clamp(std::exp(refined(3)), KernelConfig::lambda_min, KernelConfig::lambda_max);
  res.sigma2 = clamp(std::exp(refined(4)), 1e-10, 1e6);
  res.objective = refined_f;
  return res;
}

std::string posterior_to_json(const PosteriorEstimate& est) {
  nlohmann::json j;
  switch (est.method) {
    case EstimMethod::OLS: j["method"] = "ols"; break;
    case EstimMethod::SS: j["method"] = "ss"; break;
    case EstimMethod::SSW: j["method"] = "ssw"; break;
  }
  j["theta"] = std::vector<double>(est.theta_bar.values.data(),
                                   est.theta_bar.values.data() + est.theta_bar.values.size());
  j["sigma2"] = est.sigma2;
  j["trace_sigma_theta"] = est.sigma_theta.trace();
  j["ridge_fallback"] = est.ridge_fallback;
  if (est.kernel) {
    j["kernel"] = {{"family", est.kernel->family == KernelFamily::TC ? "tc" : "ss"},
                   {"c_y", est.kernel->c_y},
                   {"lambda_y", est.kernel->lambda_y},
                   {"c_u", est.kernel->c_u},
                   {"lambda_u", est.kernel->lambda_u}};
  }
  std::vector<std::vector<double>> sig(est.sigma_theta.rows());
  for (Eigen::Index r = 0; r < est.sigma_theta.rows(); ++r) {
    sig[r].resize(est.sigma_theta.cols());
    for (Eigen::Index c = 0; c < est.sigma_theta.cols(); ++c) sig[r][c] = est.sigma_theta(r, c);
  }
  j["sigma_theta"] = sig;
  return j.dump(2);
}

}  // namespace ddpc
