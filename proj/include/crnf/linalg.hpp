#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <optional>
#include <stdexcept>
#include <vector>

#include "series.hpp"

namespace crnf {

using cmat = Eigen::MatrixXcd;
using cvec = Eigen::VectorXcd;
using rmat = Eigen::MatrixXd;
using rvec = Eigen::VectorXd;

struct linalg_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double opnorm(const cmat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<cmat> svd(a);
  return svd.singularValues()(0);
}

inline cmat I_rs(int r, int s) {
  cmat m = cmat::Zero(r + s, r + s);
  for (int j = 0; j < r + s; ++j) m(j, j) = j < r ? 1.0 : -1.0;
  return m;
}

inline cmat D_lambda(const rvec& lambda) {
  cmat d = cmat::Zero(lambda.size(), lambda.size());
  for (int j = 0; j < lambda.size(); ++j) d(j, j) = lambda(j);
  return d;
}

/// Rank with threshold eps*(largest singular value + 1).
template <class M>
int rank(const M& a, double eps = tol::zero) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<M> svd(a);
  auto sv = svd.singularValues();
  double thr = eps * (sv(0) + 1.0);
  int r = 0;
  for (int j = 0; j < sv.size(); ++j)
    if (sv(j) > thr) ++r;
  return r;
}

/// Orthonormal basis of the column space.
template <class M>
M col_space(const M& a, double eps = tol::zero) {
  if (a.cols() == 0 || a.rows() == 0) return M(a.rows(), 0);
  Eigen::JacobiSVD<M> svd(a, Eigen::ComputeFullU);
  auto sv = svd.singularValues();
  double thr = eps * (sv(0) + 1.0);
  int r = 0;
  for (int j = 0; j < sv.size(); ++j)
    if (sv(j) > thr) ++r;
  return svd.matrixU().leftCols(r);
}

/// Orthonormal basis of the null space.
template <class M>
M null_space(const M& a, double eps = tol::zero) {
  if (a.cols() == 0) return M(0, 0);
  if (a.rows() == 0) return M::Identity(a.cols(), a.cols());
  Eigen::JacobiSVD<M> svd(a, Eigen::ComputeFullV);
  auto sv = svd.singularValues();
  double thr = eps * (sv(0) + 1.0);
  int r = 0;
  for (int j = 0; j < sv.size(); ++j)
    if (sv(j) > thr) ++r;
  return svd.matrixV().rightCols(a.cols() - r);
}

/// Largest principal angle between two subspaces given by orthonormal bases.
template <class M>
double max_principal_angle(const M& a, const M& b) {
  if (a.cols() != b.cols()) return 3.14159265358979323846 / 2;
  if (a.cols() == 0) return 0.0;
  // sine form: accurate for small angles
  M r = b - a * (a.adjoint() * b);
  Eigen::JacobiSVD<M> svd(r);
  double s = std::clamp(double(svd.singularValues().maxCoeff()), 0.0, 1.0);
  return std::asin(s);
}

struct eig_result {
  rvec values;  // descending
  cmat vectors;
};

inline eig_result hermitian_eig(const cmat& a, double eps = tol::zero) {
  if (a.rows() != a.cols()) throw linalg_error("hermitian_eig: matrix is not square");
  if ((a - a.adjoint()).norm() > eps * (1.0 + a.norm())) throw linalg_error("hermitian_eig: matrix is not Hermitian");
  int m = int(a.rows());
  eig_result out{rvec(m), cmat(m, m)};
  if (m == 0) return out;
  Eigen::SelfAdjointEigenSolver<cmat> es(0.5 * (a + a.adjoint()));
  for (int j = 0; j < m; ++j) {
    out.values(j) = es.eigenvalues()(m - 1 - j);
    out.vectors.col(j) = es.eigenvectors().col(m - 1 - j);
  }
  return out;
}

struct takagi_result {
  rvec lambda;  // descending, nonnegative
  cmat U;       // U E U^t = D(lambda)
};

/// Takagi factorization through the real symmetric embedding [[A,B],[B,-A]] of E = A + iB.
inline takagi_result takagi(const cmat& e, double eps = tol::zero) {
  if (e.rows() != e.cols()) throw linalg_error("takagi: matrix is not square");
  if ((e - e.transpose()).norm() > eps * (1.0 + e.norm())) throw linalg_error("takagi: matrix is not symmetric");
  int m = int(e.rows());
  takagi_result out{rvec::Zero(m), cmat::Identity(m, m)};
  if (m == 0) return out;
  cmat es = 0.5 * (e + e.transpose());
  rmat A = es.real(), B = es.imag();
  rmat S(2 * m, 2 * m);
  S << A, B, B, -A;
  Eigen::SelfAdjointEigenSolver<rmat> sol(S);
  const rvec& ev = sol.eigenvalues();
  double smax = std::max(std::abs(ev(0)), std::abs(ev(2 * m - 1)));
  double thr = eps * (smax + 1.0);
  int p = 0;
  for (int j = 0; j < 2 * m; ++j)
    if (ev(j) > thr) ++p;
  p = std::min(p, m);
  // V has columns v with E conj(v) = lambda v; U = V^*.
  cmat V(m, m);
  for (int j = 0; j < p; ++j) {
    int col = 2 * m - 1 - j;
    out.lambda(j) = ev(col);
    V.col(j) = sol.eigenvectors().col(col).head(m).cast<cplx>() + I * sol.eigenvectors().col(col).tail(m).cast<cplx>();
  }
  int filled = p;
  if (filled < m) {
    std::vector<cvec> cand;
    for (int j = 0; j < 2 * m; ++j)
      if (std::abs(ev(j)) <= thr)
        cand.push_back(sol.eigenvectors().col(j).head(m).cast<cplx>() + I * sol.eigenvectors().col(j).tail(m).cast<cplx>());
    for (int j = 0; j < m; ++j) cand.push_back(cvec::Unit(m, j));
    for (auto& v : cand) {
      if (filled == m) break;
      cvec x = v;
      for (int pass = 0; pass < 2; ++pass)
        for (int k = 0; k < filled; ++k) x -= V.col(k) * V.col(k).dot(x);
      double nx = x.norm();
      if (nx > 0.5) V.col(filled++) = x / nx;
    }
    for (int j = p; j < m; ++j) out.lambda(j) = 0.0;
  }
  out.U = V.adjoint();
  return out;
}

/// True iff U is unitary, U D U^t = D, and U respects the multiplicity blocks of lambda.
inline bool takagi_stabilizer_check(const cmat& U, const rvec& lambda, double eps = tol::zero) {
  int m = int(lambda.size());
  if (U.rows() != m || U.cols() != m) return false;
  for (int j = 0; j + 1 < m; ++j)
    if (lambda(j) < lambda(j + 1) - eps) return false;
  if ((U.adjoint() * U - cmat::Identity(m, m)).norm() > eps * m) return false;
  cmat D = D_lambda(lambda);
  double scale = 1.0 + lambda.cwiseAbs().maxCoeff();
  if ((U * D * U.transpose() - D).norm() > eps * scale * m) return false;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      bool same = std::abs(lambda(i) - lambda(j)) <= eps * scale;
      if (!same && std::abs(U(i, j)) > eps) return false;
      if (same && lambda(i) > eps * scale && std::abs(U(i, j).imag()) > eps) return false;
    }
  return true;
}

/// +1 if U* I U = I, -1 if U* I U = -I, none otherwise.
inline std::optional<int> is_hatU(const cmat& U, int r, int s, double eps = tol::zero) {
  if (U.rows() != r + s || U.cols() != r + s) return std::nullopt;
  cmat Irs = I_rs(r, s);
  cmat g = U.adjoint() * Irs * U;
  if ((g - Irs).norm() <= eps * (1 + Irs.norm())) return 1;
  if ((g + Irs).norm() <= eps * (1 + Irs.norm())) return -1;
  return std::nullopt;
}

/// True iff B^t R B = R.
inline bool is_OR(const cmat& B, const cmat& R, double eps = tol::zero) {
  if (B.rows() != R.rows() || B.cols() != R.cols() || R.rows() != R.cols()) return false;
  return (B.transpose() * R * B - R).norm() <= eps * (1.0 + R.norm());
}

}  // namespace crnf
