#pragma once

#include <random>

#include "crnf/crnf.hpp"

namespace crnf::testing {

struct rng {
  std::mt19937_64 gen;
  explicit rng(std::uint64_t seed) : gen(seed) {}
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }
  cplx complex() { return {normal(), normal()}; }
};

inline cmat random_matrix(rng& r, int rows, int cols) {
  cmat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = r.complex();
  return m;
}

inline cmat random_symmetric(rng& r, int m) {
  cmat a = random_matrix(r, m, m);
  return 0.5 * (a + a.transpose());
}

inline cmat random_unitary(rng& r, int m) {
  Eigen::HouseholderQR<cmat> qr(random_matrix(r, m, m));
  return qr.householderQ() * cmat::Identity(m, m);
}

inline rmat random_orthogonal(rng& r, int m) {
  rmat a(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = r.normal();
  Eigen::HouseholderQR<rmat> qr(a);
  return qr.householderQ() * rmat::Identity(m, m);
}

/// Random homogeneous series of type (k, l) times s^m.
inline MixedSeries random_type(rng& r, int n, int k, int l, int m, int trunc) {
  MixedSeries f(n, trunc);
  for (auto& e : type_basis(n, k, l, m)) f.add(e, r.complex());
  return f;
}

/// Random real series with every weighted degree in [lo, hi].
inline MixedSeries random_real(rng& r, int n, int lo, int hi, int trunc, double scale = 1.0) {
  MixedSeries f(n, trunc);
  for (int nu = lo; nu <= hi; ++nu)
    for (int m = 0; 2 * m <= nu; ++m)
      for (int k = 0; k <= nu - 2 * m; ++k)
        for (auto& e : type_basis(n, k, nu - 2 * m - k, m)) f.add(e, scale * r.complex());
  return real_part(f);
}

/// Random graph function: real, weighted degrees in [lo, hi], no linear Re w term.
inline MixedSeries random_graph(rng& r, int n, int lo, int hi, int trunc, double scale = 1.0) {
  MixedSeries f = random_real(r, n, lo, hi, trunc, scale);
  exps s;
  s.m = 1;
  f.set(s, 0.0);
  return f;
}

/// Random holomorphic series with every weighted degree in [lo, hi].
inline HoloSeries random_holo(rng& r, int n, int lo, int hi, int trunc, double scale = 1.0) {
  HoloSeries f(n, trunc);
  for (int nu = lo; nu <= hi; ++nu)
    for (int m = 0; 2 * m <= nu; ++m)
      for (auto& a : compositions(n, nu - 2 * m)) {
        exps e;
        e.a = a;
        e.m = m;
        f.add(e, scale * r.complex());
      }
  return f;
}

inline exps ex(std::initializer_list<int> a, std::initializer_list<int> b = {}, int m = 0) {
  exps e;
  int j = 0;
  for (int x : a) e.a[j++] = x;
  j = 0;
  for (int x : b) e.b[j++] = x;
  e.m = m;
  return e;
}

/// Largest principal angle between the column spans of a and b (radians).
inline double span_angle(const cmat& a, const cmat& b) {
  if (a.cols() == 0 && b.cols() == 0) return 0.0;
  if (a.cols() != b.cols()) return 10.0;
  return max_principal_angle(a, b);
}

inline GenericSubmanifold sphere(int n, int T = 9) { return to_generic(Hypersurface(sphere_phi(n, T))); }
inline GenericSubmanifold flat(int n, int T = 9) { return to_generic(Hypersurface(MixedSeries(n, T))); }

inline GenericSubmanifold model(int n, const rvec& lambda, int T = 9) {
  return to_generic(Hypersurface(model_phi(n, n - 1, D_lambda(lambda), T)));
}

/// -Im w_l + random real terms of order two and higher in every variable.
inline GenericSubmanifold random_generic(rng& r, int N, int d, int T) {
  GenericSubmanifold M{N, d, {}};
  for (int l = 0; l < M.d; ++l) {
    BiholoSeries rho(N, T);
    BiholoSeries W = BiholoSeries::z(N, T, N - d + l), Wb = BiholoSeries::zbar(N, T, N - d + l);
    rho += cplx(0, 0.5) * (W - Wb);
    for (int deg = 2; deg <= T; ++deg)
      for (int k = 0; k <= deg; ++k)
        for (auto& a : compositions(N, k))
          for (auto& b : compositions(N, deg - k)) {
            if (r.uniform(0, 1) < 0.5) continue;
            exps e;
            e.a = a;
            e.b = b;
            rho.add(e, 0.5 * r.complex());
          }
    M.rho.push_back(real_part(rho));
  }
  return M;
}

/// Random allowed frame change: B = [[U / sqrt(a), c], [0, d]], H' = a conj(d) B H B^t.
inline cmat random_frame_change(rng& r, const cmat& H) {
  int n = int(H.rows()), m = n - 1;
  double a = r.uniform(0.3, 3.0);
  cmat B = cmat::Zero(n, n);
  B.topLeftCorner(m, m) = crnf::testing::random_unitary(r, m) / std::sqrt(a);
  for (int i = 0; i < m; ++i) B(i, n - 1) = r.complex();
  B(n - 1, n - 1) = r.uniform(0.3, 3.0) * std::exp(cplx(0, r.uniform(-3.1, 3.1)));
  return apply_basis_change(H, B, a);
}

/// Descending lambda / lambda_1 from sqrt(eig(E conj E)), or zero.
inline rvec normalized_singular_values(const cmat& E) {
  Eigen::SelfAdjointEigenSolver<cmat> es(cmat(E * E.conjugate() + (E * E.conjugate()).adjoint()) / 2.0);
  int m = int(E.rows());
  rvec l(m);
  for (int j = 0; j < m; ++j) l(j) = std::sqrt(std::max(0.0, es.eigenvalues()(m - 1 - j)));
  if (l(0) <= 1e-12) return rvec::Zero(m);
  return l / l(0);
}

inline bool lambda_ok(const rvec& l) {
  for (int j = 0; j + 1 < l.size(); ++j)
    if (l(j) < l(j + 1) - 1e-12) return false;
  if (l.minCoeff() < -1e-12) return false;
  return l.cwiseAbs().maxCoeff() <= 1e-12 || std::abs(l(0) - 1.0) <= 1e-12;
}

/// Structural predicates of the three target block forms.
inline int count_forms(const cmat& Hn) {
  int n = int(Hn.rows()), m = n - 1;
  double e = 1e-9;
  cmat A = Hn.topLeftCorner(m, m);
  cvec beta = Hn.col(n - 1).head(m);
  cplx gamma = Hn(n - 1, n - 1);
  bool diag = (A - cmat(A.diagonal().asDiagonal())).norm() < e && A.diagonal().imag().norm() < e;
  rvec l = A.diagonal().real();
  bool iii = diag && lambda_ok(l) && beta.norm() < e && std::abs(gamma - 1.0) < e;
  bool ii = diag && lambda_ok(l) && beta.norm() < e && std::abs(gamma) < e;
  bool i = std::abs(gamma) < e && beta.head(m - 1).norm() < e && std::abs(beta(m - 1) - 1.0) < e && diag &&
           std::abs(l(m - 1)) < e && lambda_ok(l);
  return int(i) + int(ii) + int(iii);
}

/// E_j spans from the raw gradient forms and a randomly recombined CR basis with series coefficients.
inline std::vector<Subspace> E_spaces_other_basis(rng& r, const GenericSubmanifold& M, int kmax) {
  auto F = cr_frame(M);
  // a second CR basis: random invertible combinations with series coefficients
  int n = M.n();
  cmat C = random_matrix(r, n, n);
  series_matrix K;
  for (int k = 0; k < n; ++k) {
    std::vector<BiholoSeries> row(M.N, BiholoSeries(M.N, M.trunc()));
    BiholoSeries bump(M.N, M.trunc());
    bump.add(exps{.a = {1}}, 0.3 * r.complex());
    bump.add(exps{.a = {}, .b = {1}}, 0.3 * r.complex());
    for (int j = 0; j < n; ++j) {
      BiholoSeries coef = BiholoSeries::constant(M.N, M.trunc(), C(k, j)) + (j == k ? bump : BiholoSeries(M.N, M.trunc()));
      for (int m = 0; m < M.N; ++m) row[m] += coef * F.L[j][m];
    }
    K.push_back(row);
  }
  series_matrix forms;
  for (int l = 0; l < M.d; ++l) {
    std::vector<BiholoSeries> v;
    for (int m = 0; m < M.N; ++m) v.push_back(d_Z(M.rho[l], m));
    forms.push_back(v);
  }
  return E_spaces_from(K, forms, M.N, kmax);
}

}  // namespace crnf::testing
