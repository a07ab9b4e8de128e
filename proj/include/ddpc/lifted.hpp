#pragma once

#include <vector>

#include "ddpc/ident.hpp"

namespace ddpc {

struct Horizons {
  int Lp = 10;
  int Lf = 15;
};

/// Zero-padded coefficient vector covering phi_y^1..phi_y^(Lp+Lf-1) and
/// phi_u^0..phi_u^(Lp+Lf-1); embed maps each identified coordinate to its
/// padded index.
struct PaddedTheta {
  ArxStructure structure;  // identified structure (na, nb, dims)
  Horizons horizons;
  Vector values;
  std::vector<Eigen::Index> embed;

  int max_lag() const { return horizons.Lp + horizons.Lf - 1; }
  Eigen::Index padded_y_offset(int lag) const {  // lag 1..max_lag
    return static_cast<Eigen::Index>(lag - 1) * structure.n_y * structure.n_y;
  }
  Eigen::Index padded_u_offset(int lag) const {  // lag 0..max_lag
    return static_cast<Eigen::Index>(max_lag()) * structure.n_y * structure.n_y +
           static_cast<Eigen::Index>(lag) * structure.n_y * structure.n_u;
  }
  Matrix phi_y(int lag) const;
  Matrix phi_u(int lag) const;
};

/// The four block-Toeplitz lifted matrices and the unit-lower-triangular
/// map A = I - Phi_y.
struct LiftedPredictor {
  Matrix Psi_u, Psi_y, Phi_u, Phi_y, A;
  Horizons horizons;
  int n_y = 1, n_u = 1;
};

PaddedTheta pad_theta(const PredictorTheta& theta, const Horizons& h);

LiftedPredictor assemble(const PaddedTheta& padded);

inline LiftedPredictor assemble(const PredictorTheta& theta, const Horizons& h) {
  return assemble(pad_theta(theta, h));
}

/// y_f = A^-1 (Psi_u u_p + Psi_y y_p + Phi_u u_f), solved by forward
/// substitution on the unit-lower-triangular A.
Vector predict(const LiftedPredictor& lp, const Vector& u_p, const Vector& y_p,
               const Vector& u_f);

/// Step-by-step ARX recursion with predicted outputs substituted for
/// unknown future outputs; independent oracle for predict.
Vector rollout_oracle(const PredictorTheta& theta, const Horizons& h, const Vector& u_p,
                      const Vector& y_p, const Vector& u_f);

}  // namespace ddpc
