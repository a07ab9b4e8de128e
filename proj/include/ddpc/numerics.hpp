#pragma once

#include <Eigen/Dense>

#include "ddpc/errors.hpp"
#include "ddpc/rng.hpp"

namespace ddpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Lower-triangular Cholesky factor L with L*L^T = M + applied_jitter*I.
struct CholFactor {
  Matrix lower;
  double applied_jitter = 0.0;

  Eigen::Index dim() const { return lower.rows(); }
};

/// Factor a symmetric matrix. If the plain factorization fails and
/// jitter == 0, an escalating diagonal jitter is tried, starting at
/// 1e-12*trace/dim and growing x10 up to 1e-6*trace/dim; the jitter that
/// succeeded is recorded in the result. Throws NotPositiveDefinite if
/// even the largest jitter fails.
CholFactor chol_factor(const Matrix& m, double jitter = 0.0);

/// Solve (L L^T) X = rhs by two triangular solves.
Matrix chol_solve(const CholFactor& f, const Matrix& rhs);
Vector chol_solve(const CholFactor& f, const Vector& rhs);

/// log det(L L^T) = 2 * sum(log diag(L)).
double logdet(const CholFactor& f);

/// Draw mean + L*z with z iid standard normal from rng.
Vector sample_gaussian(RngState& rng, const Vector& mean, const CholFactor& cov_factor);

/// Force exact symmetry: (m + m^T)/2.
inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace ddpc
