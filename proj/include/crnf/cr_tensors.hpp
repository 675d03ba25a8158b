#pragma once

#include <map>
#include <optional>
#include <vector>

#include "linalg.hpp"
#include "maps.hpp"
#include "series.hpp"

namespace crnf {

/// rho = (rho_1..rho_d) in (Z, Zbar), Z in C^N; the last d coordinates are the transversal ones.
struct GenericSubmanifold {
  int N = 0, d = 0;
  std::vector<BiholoSeries> rho;

  int n() const { return N - d; }
  int trunc() const {
    int t = max_trunc;
    for (auto& r : rho) t = std::min(t, r.trunc());
    return t;
  }
};

/// Terms of ordinary degree below this bound are exact when converting a graph of weighted trunc T.
inline int unit_trunc_of(int T) { return (T + 1) / 2; }

/// rho = -Im w + phi(z, zbar, Re w) with all variables of weight one.
inline GenericSubmanifold to_generic(const Hypersurface& M) {
  int n = M.n, N = n + 1, T = unit_trunc_of(M.trunc());
  images<biholo_tag> im;
  for (int j = 0; j < n; ++j) {
    im.z.push_back(BiholoSeries::z(N, T, j));
    im.zbar.push_back(BiholoSeries::zbar(N, T, j));
  }
  BiholoSeries W = BiholoSeries::z(N, T, n), Wb = BiholoSeries::zbar(N, T, n);
  im.last = {0.5 * (W + Wb)};
  BiholoSeries rho = cplx(0, 0.5) * (W - Wb) + substitute(M.phi.with_trunc(std::min(M.trunc(), T)), im, true);
  return GenericSubmanifold{N, 1, {rho}};
}

inline BiholoSeries d_Z(const BiholoSeries& f, int m) { return differentiate(f, var{var::z, m}); }
inline BiholoSeries d_Zbar(const BiholoSeries& f, int m) { return differentiate(f, var{var::zbar, m}); }

inline cmat constant_matrix(const std::vector<std::vector<BiholoSeries>>& m) {
  cmat c(m.size(), m.empty() ? 0 : m[0].size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) c(i, j) = m[i][j].constant_term();
  return c;
}

using series_matrix = std::vector<std::vector<BiholoSeries>>;

inline series_matrix series_matmul(const series_matrix& a, const series_matrix& b) {
  std::size_t r = a.size(), k = b.size(), c = b.empty() ? 0 : b[0].size();
  series_matrix out(r, std::vector<BiholoSeries>(c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      BiholoSeries s(a[i][0].n(), std::min(a[i][0].trunc(), b[0][j].trunc()), a[i][0].weights());
      for (std::size_t t = 0; t < k; ++t) s += a[i][t] * b[t][j];
      out[i][j] = s;
    }
  return out;
}

/// Inverse of a square matrix of series with invertible constant part.
inline series_matrix series_inverse(const series_matrix& m) {
  int d = int(m.size());
  cmat c0 = constant_matrix(m);
  if (rank(c0) < d) throw series_error("series_inverse: constant part is singular");
  cmat c0i = c0.inverse();
  int n = m[0][0].n(), T = m[0][0].trunc();
  for (auto& row : m)
    for (auto& s : row) T = std::min(T, s.trunc());
  auto constant_series = [&](const cmat& x) {
    series_matrix r(d, std::vector<BiholoSeries>(d));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) r[i][j] = BiholoSeries::constant(n, T, x(i, j), m[0][0].weights());
    return r;
  };
  // E = -c0^{-1} (m - c0), inverse = sum_k E^k c0^{-1}.
  series_matrix E(d, std::vector<BiholoSeries>(d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      BiholoSeries s(n, T, m[0][0].weights());
      for (int k = 0; k < d; ++k) {
        BiholoSeries mk = m[k][j].with_trunc(T);
        mk.set(exps{}, 0.0);
        s += -c0i(i, k) * mk;
      }
      E[i][j] = s;
    }
  series_matrix base = constant_series(c0i), term = base, sum = base;
  for (int k = 1; k < T; ++k) {
    term = series_matmul(E, term);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) sum[i][j] += term[i][j];
  }
  return sum;
}

/// Throws unless M is a real admissible generic submanifold through 0.
inline void validate(const GenericSubmanifold& M) {
  if (M.d < 1 || M.N <= M.d || int(M.rho.size()) != M.d) throw series_error("generic submanifold: bad dimensions");
  cmat jac = cmat::Zero(M.d, 2 * M.N), blk(M.d, M.d);
  for (int l = 0; l < M.d; ++l) {
    const auto& r = M.rho[l];
    if (r.n() != M.N) throw series_error("generic submanifold: rho has wrong number of variables");
    if (!is_real(r)) throw series_error("generic submanifold: rho must be real");
    if (std::abs(r.constant_term()) > tol::zero) throw series_error("generic submanifold: rho(0) must vanish");
    for (int m = 0; m < M.N; ++m) {
      jac(l, m) = d_Z(r, m).constant_term();
      jac(l, M.N + m) = d_Zbar(r, m).constant_term();
    }
    for (int m = 0; m < M.d; ++m) blk(l, m) = jac(l, M.N + M.n() + m);
  }
  if (rank(jac) < M.d) throw series_error("generic submanifold: d rho_1 ^ ... ^ d rho_d vanishes at 0");
  if (rank(blk) < M.d) throw series_error("generic submanifold: d rho / d Zbar'' is singular at 0");
}

/// L[k][m]: coefficient of d/dZbar^m in the k-th CR field; theta[l][m]: coefficient of dZ^m in 2i d rho_l.
struct CRFrame {
  int N = 0, n = 0, d = 0;
  series_matrix L;
  series_matrix theta;

  /// (1,0) vector conj(L_k) at 0 in the basis d/dZ.
  cvec bar_at0(int k) const {
    cvec v(N);
    for (int m = 0; m < N; ++m) v(m) = std::conj(L[k][m].constant_term());
    return v;
  }
};

/// L_k = d/dZbar^k + sum_m a_km d/dZbar^{n+m} with L_k rho = 0.
inline CRFrame cr_frame(const GenericSubmanifold& M) {
  validate(M);
  int N = M.N, d = M.d, n = M.n();
  series_matrix Rpp(d, std::vector<BiholoSeries>(d));
  for (int l = 0; l < d; ++l)
    for (int m = 0; m < d; ++m) Rpp[l][m] = d_Zbar(M.rho[l], n + m);
  series_matrix inv = series_inverse(Rpp);
  CRFrame F;
  F.N = N, F.n = n, F.d = d;
  int T = inv[0][0].trunc();
  for (int k = 0; k < n; ++k) {
    std::vector<BiholoSeries> row;
    for (int m = 0; m < N; ++m) row.push_back(BiholoSeries(N, T));
    row[k] = BiholoSeries::constant(N, T, 1.0);
    // a_k = -rho_{Zbar^k} (rho_{Zbar''})^{-1}
    for (int m = 0; m < d; ++m) {
      BiholoSeries s(N, T);
      for (int l = 0; l < d; ++l) s += d_Zbar(M.rho[l], k) * inv[m][l];
      row[n + m] = -1.0 * s;
    }
    F.L.push_back(row);
  }
  for (int l = 0; l < d; ++l) {
    std::vector<BiholoSeries> row;
    for (int m = 0; m < N; ++m) row.push_back(cplx(0, 2) * d_Z(M.rho[l], m));
    F.theta.push_back(row);
  }
  return F;
}

/// X(f) for an antiholomorphic field with coefficients X[m] on d/dZbar^m.
inline BiholoSeries apply_field(const std::vector<BiholoSeries>& X, const BiholoSeries& f) {
  int T = std::max(0, f.trunc() - 1);
  for (auto& x : X) T = std::min(T, x.trunc());
  BiholoSeries r(f.n(), T, f.weights());
  for (std::size_t m = 0; m < X.size(); ++m) {
    if (X[m].empty()) continue;
    BiholoSeries df = d_Zbar(f, int(m));
    if (df.empty()) continue;
    r += X[m] * df;
  }
  return r;
}

/// Literal T_K w = (1/2i) K _| dw on a (1,0)-form with coefficients w[m] on dZ^m.
inline std::vector<BiholoSeries> T_operator(const std::vector<BiholoSeries>& K, const std::vector<BiholoSeries>& w) {
  std::vector<BiholoSeries> out;
  for (auto& c : w) out.push_back(cplx(0, -0.5) * apply_field(K, c));
  return out;
}

/// L^J (d rho_l / dZ^m), m = 0..N-1; J is applied right to left.
inline std::vector<BiholoSeries> apply_T(const GenericSubmanifold& M, const CRFrame& F, const std::vector<int>& J, int l) {
  int need = int(J.size()) + 2;
  if (M.trunc() < need) throw series_error("apply_T: truncation too small for the requested word");
  std::vector<BiholoSeries> out;
  for (int m = 0; m < M.N; ++m) {
    BiholoSeries s = d_Z(M.rho[l], m);
    for (auto it = J.rbegin(); it != J.rend(); ++it) s = apply_field(F.L[*it], s);
    out.push_back(s);
  }
  return out;
}

inline std::vector<BiholoSeries> apply_T(const GenericSubmanifold& M, const std::vector<int>& J, int l) {
  return apply_T(M, cr_frame(M), J, l);
}

struct Subspace {
  int ambient = 0;
  cmat basis;  // orthonormal columns
  double tol = tol::zero;
  int dim() const { return int(basis.cols()); }
};

inline cvec at0(const std::vector<BiholoSeries>& v) {
  cvec x(v.size());
  for (std::size_t m = 0; m < v.size(); ++m) x(m) = v[m].constant_term();
  return x;
}

inline Subspace span_of(const std::vector<cvec>& vs, int N) {
  cmat A(N, vs.size());
  for (std::size_t j = 0; j < vs.size(); ++j) A.col(j) = vs[j];
  return Subspace{N, col_space(A), tol::zero};
}

/// E_0..E_kmax from the words L^J(d rho / dZ)(0), J nondecreasing (the frame fields commute).
inline std::vector<Subspace> E_spaces(const GenericSubmanifold& M, int kmax) {
  if (kmax < 0) throw series_error("E_spaces: kmax must be nonnegative");
  if (M.trunc() < kmax + 2) throw series_error("E_spaces: truncation too small for kmax");
  CRFrame F = cr_frame(M);
  int n = M.n(), N = M.N;
  std::vector<cvec> gens;
  std::vector<Subspace> out;
  // level[l]: list of (last index, coefficient series) for words of the current length
  std::vector<std::vector<std::pair<int, std::vector<BiholoSeries>>>> level(M.d);
  for (int l = 0; l < M.d; ++l) {
    std::vector<BiholoSeries> v;
    for (int m = 0; m < N; ++m) v.push_back(d_Z(M.rho[l], m));
    gens.push_back(at0(v));
    level[l].push_back({0, v});
  }
  out.push_back(span_of(gens, N));
  for (int j = 1; j <= kmax; ++j) {
    for (int l = 0; l < M.d; ++l) {
      std::vector<std::pair<int, std::vector<BiholoSeries>>> next;
      for (auto& [last, v] : level[l])
        for (int k = last; k < n; ++k) {
          std::vector<BiholoSeries> w;
          for (auto& c : v) w.push_back(apply_field(F.L[k], c));
          gens.push_back(at0(w));
          next.push_back({k, std::move(w)});
        }
      level[l] = std::move(next);
    }
    out.push_back(span_of(gens, N));
  }
  return out;
}

/// E_0..E_kmax from literal T-words of an arbitrary CR basis K and characteristic forms (all orderings).
inline std::vector<Subspace> E_spaces_from(const series_matrix& K, const series_matrix& forms, int N, int kmax) {
  std::vector<cvec> gens;
  std::vector<Subspace> out;
  std::vector<std::vector<BiholoSeries>> level = forms;
  for (auto& f : forms) gens.push_back(at0(f));
  out.push_back(span_of(gens, N));
  for (int j = 1; j <= kmax; ++j) {
    std::vector<std::vector<BiholoSeries>> next;
    for (auto& w : level)
      for (auto& k : K) {
        auto t = T_operator(k, w);
        gens.push_back(at0(t));
        next.push_back(std::move(t));
      }
    level = std::move(next);
    out.push_back(span_of(gens, N));
  }
  return out;
}

/// Smallest k <= kmax with E_k = C^N.
inline std::optional<int> nondegeneracy(const GenericSubmanifold& M, int kmax) {
  auto E = E_spaces(M, kmax);
  for (int k = 0; k <= kmax; ++k)
    if (E[k].dim() == M.N) return k;
  return std::nullopt;
}

/// Deterministic orthonormal basis of the column span: Gram-Schmidt on the projector, largest pivot first.
inline cmat canonical_basis(const cmat& Q) {
  int m = int(Q.rows()), q = int(Q.cols());
  cmat P = Q * Q.adjoint(), out(m, q);
  for (int j = 0; j < q; ++j) {
    int best = 0;
    double bn = -1;
    for (int c = 0; c < m; ++c) {
      double nc = P.col(c).norm();
      if (nc > bn + 1e-12) bn = nc, best = c;
    }
    cvec v = P.col(best) / bn;
    out.col(j) = v;
    P -= v * (v.adjoint() * P);
  }
  return out;
}

/// F_k = E_k^perp in Vbar_0, in coordinates on the frame basis conj(L_1)..conj(L_n) at 0.
inline Subspace F_space(const GenericSubmanifold& M, const CRFrame& F, const Subspace& Ek) {
  int n = M.n();
  cmat P(Ek.dim(), n);
  for (int c = 0; c < n; ++c) {
    cvec v = F.bar_at0(c);
    for (int i = 0; i < Ek.dim(); ++i) P(i, c) = Ek.basis.col(i).transpose() * v;
  }
  cmat Ns = Ek.dim() == 0 ? cmat(cmat::Identity(n, n)) : null_space(P);
  return Subspace{n, Ns.cols() ? canonical_basis(Ns) : cmat(n, 0), tol::zero};
}

inline Subspace F_space(const GenericSubmanifold& M, int k) {
  auto E = E_spaces(M, k);
  return F_space(M, cr_frame(M), E[k]);
}

/// Components indexed (J_1..J_j, F basis index, characteristic index).
struct TensorRep {
  int order = 0, n = 0, q = 0, d = 0;
  std::vector<cplx> comp;
  cmat F;                 // F_{j-1} basis on the frame
  cplx pairing_factor{1, 0};  // literal <T..T theta, Nbar> / reported component
  bool trivial = false;

  std::size_t index(const std::vector<int>& J, int k, int l) const {
    std::size_t i = 0;
    for (int a : J) i = i * n + a;
    return (i * q + k) * d + l;
  }
  cplx at(const std::vector<int>& J, int k, int l = 0) const { return comp[index(J, k, l)]; }
  cplx& at(const std::vector<int>& J, int k, int l = 0) { return comp[index(J, k, l)]; }

  double symmetry_defect() const;
};

inline std::vector<std::vector<int>> all_words(int n, int j) {
  std::vector<std::vector<int>> out{{}};
  for (int t = 0; t < j; ++t) {
    std::vector<std::vector<int>> next;
    for (auto& w : out)
      for (int a = 0; a < n; ++a) {
        auto x = w;
        x.push_back(a);
        next.push_back(x);
      }
    out = std::move(next);
  }
  return out;
}

inline double TensorRep::symmetry_defect() const {
  double dmax = 0;
  for (auto& J : all_words(n, order)) {
    auto S = J;
    std::sort(S.begin(), S.end());
    for (int k = 0; k < q; ++k)
      for (int l = 0; l < d; ++l) dmax = std::max(dmax, std::abs(at(J, k, l) - at(S, k, l)));
  }
  return dmax;
}

/// psi with j CR slots: (1/j!) L^J(rho_Z)(0) paired with the F_{j-1} basis vectors.
inline TensorRep psi(const GenericSubmanifold& M, int j) {
  if (j < 1) throw series_error("psi: order must be positive");
  if (M.trunc() < j + 2) throw series_error("psi: truncation too small for the requested order");
  CRFrame F = cr_frame(M);
  int n = M.n();
  auto E = E_spaces(M, j - 1);
  Subspace Fs = F_space(M, F, E[j - 1]);
  TensorRep t;
  t.order = j, t.n = n, t.q = Fs.dim(), t.d = M.d, t.F = Fs.basis;
  double fact = 1;
  for (int a = 2; a <= j; ++a) fact *= a;
  t.pairing_factor = std::pow(cplx(0, 2), 1 - j) * fact;
  if (t.q == 0) {
    t.trivial = true;
    return t;
  }
  t.comp.assign(std::size_t(std::pow(n, j)) * t.q * t.d, 0.0);
  std::vector<cvec> Nb;
  for (int k = 0; k < t.q; ++k) {
    cvec v = cvec::Zero(M.N);
    for (int c = 0; c < n; ++c) v += Fs.basis(c, k) * F.bar_at0(c);
    Nb.push_back(v);
  }
  for (auto& J : all_words(n, j))
    for (int l = 0; l < M.d; ++l) {
      cvec w = at0(apply_T(M, F, J, l));
      for (int k = 0; k < t.q; ++k) t.at(J, k, l) = (w.transpose() * Nb[k])(0) / fact;
    }
  return t;
}

inline TensorRep levi_form(const GenericSubmanifold& M) { return psi(M, 1); }
inline TensorRep third_tensor(const GenericSubmanifold& M) { return psi(M, 2); }

/// g_{a b}: n x n matrix of a first-order tensor with full F slot.
inline cmat as_matrix(const TensorRep& t, int l = 0) {
  if (t.order != 1) throw series_error("as_matrix: tensor must have one CR slot");
  cmat g(t.n, t.q);
  for (int a = 0; a < t.n; ++a)
    for (int k = 0; k < t.q; ++k) g(a, k) = t.at({a}, k, l);
  return g;
}

/// t' = a B..B conj(B) t; the F slot uses conj(B) when it is full and the trailing block otherwise.
inline TensorRep basis_change(const TensorRep& t, const cmat& B, cplx a) {
  if (B.rows() != t.n || B.cols() != t.n) throw series_error("basis_change: B must be n x n");
  if (t.trivial) return t;
  cmat C = B.bottomRightCorner(t.q, t.q).conjugate();
  TensorRep r = t;
  auto words = all_words(t.n, t.order);
  for (auto& J : words)
    for (int k = 0; k < t.q; ++k)
      for (int l = 0; l < t.d; ++l) {
        cplx s = 0;
        for (auto& S : words) {
          cplx bj = 1;
          for (int i = 0; i < t.order; ++i) bj *= B(J[i], S[i]);
          if (bj == 0.0) continue;
          for (int m = 0; m < t.q; ++m) s += bj * C(k, m) * t.at(S, m, l);
        }
        r.at(J, k, l) = a * s;
      }
  return r;
}

/// Vector field with coefficients on d/dZ (hol) and d/dZbar (anti).
struct vfield {
  std::vector<BiholoSeries> hol, anti;
};

inline BiholoSeries vf_apply(const vfield& X, const BiholoSeries& f) {
  BiholoSeries r(f.n(), std::max(0, f.trunc() - 1), f.weights());
  for (std::size_t m = 0; m < X.hol.size(); ++m)
    if (!X.hol[m].empty()) r += X.hol[m] * d_Z(f, int(m));
  for (std::size_t m = 0; m < X.anti.size(); ++m)
    if (!X.anti[m].empty()) r += X.anti[m] * d_Zbar(f, int(m));
  return r;
}

inline vfield bracket(const vfield& X, const vfield& Y) {
  vfield r;
  for (std::size_t m = 0; m < X.hol.size(); ++m) r.hol.push_back(vf_apply(X, Y.hol[m]) - vf_apply(Y, X.hol[m]));
  for (std::size_t m = 0; m < X.anti.size(); ++m) r.anti.push_back(vf_apply(X, Y.anti[m]) - vf_apply(Y, X.anti[m]));
  return r;
}

struct cubic_result {
  TensorRep q;       // reported, scaled by display_factor
  TensorRep literal; // <d rho, [K, [L, Nbar]]>(0)
  cplx display_factor{0, -0.25};
};

/// q(L_a, L_b, Nbar_k) = <d rho, [L_b, [L_a, Nbar_k]]>(0) for a hypersurface.
inline cubic_result cubic_form(const GenericSubmanifold& M) {
  if (M.d != 1) throw series_error("cubic_form: hypersurface required");
  if (M.trunc() < 4) throw series_error("cubic_form: truncation too small");
  CRFrame F = cr_frame(M);
  int n = M.n(), N = M.N, T = M.trunc();
  auto E = E_spaces(M, 1);
  Subspace Fs = F_space(M, F, E[1]);
  cubic_result out;
  TensorRep& t = out.literal;
  t.order = 2, t.n = n, t.q = Fs.dim(), t.d = 1, t.F = Fs.basis;
  if (t.q == 0) {
    t.trivial = true;
    out.q = t;
    return out;
  }
  t.comp.assign(std::size_t(n * n) * t.q, 0.0);
  BiholoSeries zero(N, T);
  auto cr = [&](int a) {
    vfield X;
    X.hol.assign(N, zero);
    X.anti = F.L[a];
    return X;
  };
  std::vector<vfield> Nb;
  for (int k = 0; k < t.q; ++k) {
    vfield X;
    X.anti.assign(N, zero);
    X.hol.assign(N, zero);
    for (int c = 0; c < n; ++c)
      for (int m = 0; m < N; ++m) X.hol[m] += Fs.basis(c, k) * conj(F.L[c][m]);
    Nb.push_back(X);
  }
  cvec drho(N);
  for (int m = 0; m < N; ++m) drho(m) = d_Z(M.rho[0], m).constant_term();
  for (int a = 0; a < n; ++a) {
    vfield La = cr(a);
    for (int k = 0; k < t.q; ++k) {
      vfield inner = bracket(La, Nb[k]);
      for (int b = 0; b < n; ++b) {
        vfield outer = bracket(cr(b), inner);
        cplx s = 0;
        for (int m = 0; m < N; ++m) s += drho(m) * outer.hol[m].constant_term();
        t.at({a, b}, k) = s;
      }
    }
  }
  out.q = t;
  for (auto& c : out.q.comp) c *= out.display_factor;
  return out;
}

}  // namespace crnf
