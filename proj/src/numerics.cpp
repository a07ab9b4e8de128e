#include "ddpc/numerics.hpp"

#include <cmath>

namespace ddpc {

namespace {

// Plain left-looking Cholesky; returns false on a non-positive pivot.
bool try_factor(const Matrix& m, double jitter, Matrix& lower) {
  const Eigen::Index n = m.rows();
  lower = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = m(j, j) + jitter - lower.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    lower(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = m(i, j) - lower.row(i).head(j).dot(lower.row(j).head(j));
      lower(i, j) = s / lower(j, j);
    }
  }
  return true;
}

}  // namespace

CholFactor chol_factor(const Matrix& m, double jitter) {
  require_dims(m.rows() == m.cols(), "chol_factor: matrix not square");
  if (jitter < 0.0) throw Error("chol_factor: negative jitter");

  CholFactor f;
  if (try_factor(m, jitter, f.lower)) {
    f.applied_jitter = jitter;
    return f;
  }
  if (jitter > 0.0) throw NotPositiveDefinite("chol_factor: failed at requested jitter");

  const double scale = m.trace() / static_cast<double>(m.rows());
  for (double eps = 1e-12; eps <= 1e-6 * 1.0000001; eps *= 10.0) {
    double j = eps * scale;
    if (j > 0.0 && try_factor(m, j, f.lower)) {
      f.applied_jitter = j;
      return f;
    }
  }
  throw NotPositiveDefinite("chol_factor: matrix not positive definite at maximum jitter");
}

Matrix chol_solve(const CholFactor& f, const Matrix& rhs) {
  require_dims(rhs.rows() == f.dim(), "chol_solve: rhs row count mismatch");
  Matrix x = f.lower.triangularView<Eigen::Lower>().solve(rhs);
  f.lower.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
  return x;
}

Vector chol_solve(const CholFactor& f, const Vector& rhs) {
  return Vector(chol_solve(f, Matrix(rhs)));
}

double logdet(const CholFactor& f) {
  return 2.0 * f.lower.diagonal().array().log().sum();
}

Vector sample_gaussian(RngState& rng, const Vector& mean, const CholFactor& cov_factor) {
  require_dims(mean.size() == cov_factor.dim(), "sample_gaussian: mean/factor dim mismatch");
  Vector z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.next_gaussian();
  return mean + cov_factor.lower * z;
}

}  // namespace ddpc
