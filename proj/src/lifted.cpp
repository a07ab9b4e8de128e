#include "ddpc/lifted.hpp"

namespace ddpc {

Matrix PaddedTheta::phi_y(int lag) const {
  Matrix m = Matrix::Zero(structure.n_y, structure.n_y);
  if (lag >= 1 && lag <= max_lag()) {
    Eigen::Index off = padded_y_offset(lag);
    for (int c = 0; c < structure.n_y; ++c)
      for (int r = 0; r < structure.n_y; ++r) m(r, c) = values(off + c * structure.n_y + r);
  }
  return m;
}

Matrix PaddedTheta::phi_u(int lag) const {
  Matrix m = Matrix::Zero(structure.n_y, structure.n_u);
  if (lag >= 0 && lag <= max_lag()) {
    Eigen::Index off = padded_u_offset(lag);
    for (int c = 0; c < structure.n_u; ++c)
      for (int r = 0; r < structure.n_y; ++r) m(r, c) = values(off + c * structure.n_y + r);
  }
  return m;
}

PaddedTheta pad_theta(const PredictorTheta& theta, const Horizons& h) {
  const ArxStructure& s = theta.structure;
  if (s.na > h.Lp || s.nb > h.Lp)
    throw OrderExceedsHorizon("pad_theta: ARX order exceeds past horizon");

  PaddedTheta padded;
  padded.structure = s;
  padded.horizons = h;
  const int ml = padded.max_lag();
  padded.values = Vector::Zero(static_cast<Eigen::Index>(ml) * s.n_y * s.n_y +
                               static_cast<Eigen::Index>(ml + 1) * s.n_y * s.n_u);
  padded.embed.resize(static_cast<std::size_t>(s.n_theta()));

  for (int i = 1; i <= s.na; ++i)
    for (int e = 0; e < s.n_y * s.n_y; ++e) {
      Eigen::Index src = s.y_offset(i) + e;
      Eigen::Index dst = padded.padded_y_offset(i) + e;
      padded.values(dst) = theta.values(src);
      padded.embed[static_cast<std::size_t>(src)] = dst;
    }
  for (int j = s.first_u_lag(); j <= s.nb; ++j)
    for (int e = 0; e < s.n_y * s.n_u; ++e) {
      Eigen::Index src = s.u_offset(j) + e;
      Eigen::Index dst = padded.padded_u_offset(j) + e;
      padded.values(dst) = theta.values(src);
      padded.embed[static_cast<std::size_t>(src)] = dst;
    }
  return padded;
}

LiftedPredictor assemble(const PaddedTheta& padded) {
  const int ny = padded.structure.n_y;
  const int nu = padded.structure.n_u;
  const int Lp = padded.horizons.Lp;
  const int Lf = padded.horizons.Lf;

  LiftedPredictor lp;
  lp.horizons = padded.horizons;
  lp.n_y = ny;
  lp.n_u = nu;
  lp.Psi_u = Matrix::Zero(ny * Lf, nu * Lp);
  lp.Psi_y = Matrix::Zero(ny * Lf, ny * Lp);
  lp.Phi_u = Matrix::Zero(ny * Lf, nu * Lf);
  lp.Phi_y = Matrix::Zero(ny * Lf, ny * Lf);

  // 1-based block indices; Psi block(k,l) holds phi^(Lp-l+k), Phi_u block(k,l)
  // holds phi_u^(k-l) for k >= l, Phi_y the same with zero diagonal blocks.
  for (int k = 1; k <= Lf; ++k) {
    for (int l = 1; l <= Lp; ++l) {
      int lag = Lp - l + k;
      lp.Psi_u.block((k - 1) * ny, (l - 1) * nu, ny, nu) = padded.phi_u(lag);
      lp.Psi_y.block((k - 1) * ny, (l - 1) * ny, ny, ny) = padded.phi_y(lag);
    }
    for (int l = 1; l <= k; ++l) {
      lp.Phi_u.block((k - 1) * ny, (l - 1) * nu, ny, nu) = padded.phi_u(k - l);
      if (l < k) lp.Phi_y.block((k - 1) * ny, (l - 1) * ny, ny, ny) = padded.phi_y(k - l);
    }
  }
  lp.A = Matrix::Identity(ny * Lf, ny * Lf) - lp.Phi_y;
  return lp;
}

Vector predict(const LiftedPredictor& lp, const Vector& u_p, const Vector& y_p,
               const Vector& u_f) {
  require_dims(u_p.size() == lp.Psi_u.cols() && y_p.size() == lp.Psi_y.cols() &&
                   u_f.size() == lp.Phi_u.cols(),
               "predict: signal dims vs horizons");
  Vector b = lp.Psi_u * u_p + lp.Psi_y * y_p + lp.Phi_u * u_f;
  return lp.A.triangularView<Eigen::Lower>().solve(b);
}

Vector rollout_oracle(const PredictorTheta& theta, const Horizons& h, const Vector& u_p,
                      const Vector& y_p, const Vector& u_f) {
  const ArxStructure& s = theta.structure;
  const int ny = s.n_y;
  const int nu = s.n_u;
  require_dims(u_p.size() == static_cast<Eigen::Index>(nu) * h.Lp &&
                   y_p.size() == static_cast<Eigen::Index>(ny) * h.Lp &&
                   u_f.size() == static_cast<Eigen::Index>(nu) * h.Lf,
               "rollout_oracle: signal dims vs horizons");

  // signal at relative time m: m < 0 reaches the past window (index Lp+m),
  // m >= 0 the future window.
  auto u_at = [&](int m) -> Vector {
    if (m < 0) return u_p.segment(static_cast<Eigen::Index>(h.Lp + m) * nu, nu);
    return u_f.segment(static_cast<Eigen::Index>(m) * nu, nu);
  };

  Vector y_f = Vector::Zero(static_cast<Eigen::Index>(ny) * h.Lf);
  auto y_at = [&](int m) -> Vector {
    if (m < 0) return y_p.segment(static_cast<Eigen::Index>(h.Lp + m) * ny, ny);
    return y_f.segment(static_cast<Eigen::Index>(m) * ny, ny);
  };

  for (int k = 0; k < h.Lf; ++k) {
    Vector yk = Vector::Zero(ny);
    for (int i = 1; i <= s.na; ++i) yk += theta.phi_y(i) * y_at(k - i);
    for (int j = s.first_u_lag(); j <= s.nb; ++j) yk += theta.phi_u(j) * u_at(k - j);
    y_f.segment(static_cast<Eigen::Index>(k) * ny, ny) = yk;
  }
  return y_f;
}

}  // namespace ddpc
