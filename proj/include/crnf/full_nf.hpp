#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "fischer.hpp"
#include "linalg.hpp"
#include "maps.hpp"
#include "models.hpp"
#include "series.hpp"

namespace crnf {

struct nf_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Singular graded system; reported by the CLI with its own exit code.
struct singular_system : nf_error {
  using nf_error::nf_error;
};

/// Model data (n, r, R) of the target form.
struct nf_model {
  int n = 2;
  int r = 1;
  cmat R;

  int s() const { return n - 1 - r; }
  double eps(int j) const { return j < r ? 1.0 : -1.0; }
  MixedSeries phi(int trunc) const { return model_phi(n, r, R, trunc); }
  MixedSeries herm(int trunc) const { return herm_form(n, r, trunc); }
  MixedSeries pR(int trunc) const { return p_R(n, R, trunc); }
};

/// Sum of eps_j u_j v_j over the first n-1 slots.
inline HoloSeries bform(const nf_model& m, const std::vector<HoloSeries>& u, const cvec& v) {
  HoloSeries r(u[0].n(), u[0].trunc());
  for (int j = 0; j < m.n - 1; ++j) r += (m.eps(j) * v(j)) * u[j];
  return r;
}

// ---------------------------------------------------------------------------
// Normalization P

struct NormalizationP {
  double c = 1.0;
  cmat A;
  cvec B;
  std::vector<HoloSeries> a;  // cubic part of q^beta
  cmat b;                     // b(beta, alpha), alpha < beta
  rvec cb;                    // c^beta
  HoloSeries d;               // quadratic part of q^n

  static NormalizationP identity(int n) {
    NormalizationP p;
    p.A = cmat::Identity(n - 1, n - 1);
    p.B = cvec::Zero(n - 1);
    for (int j = 0; j + 1 < n; ++j) p.a.emplace_back(n, 3);
    p.b = cmat::Zero(n - 1, n - 1);
    p.cb = rvec::Zero(n - 1);
    p.d = HoloSeries(n, 2);
    return p;
  }

  int n() const { return int(A.rows()) + 1; }
};

inline double real_cbrt(double c) { return std::cbrt(c); }

/// (Az')^beta as holomorphic series.
inline std::vector<HoloSeries> Az_prime(const cmat& A, int n, int trunc) {
  std::vector<HoloSeries> out;
  for (int i = 0; i + 1 < n; ++i) {
    HoloSeries s(n, trunc);
    for (int j = 0; j + 1 < n; ++j) {
      exps e;
      e.a[j] = 1;
      s.add(e, A(i, j));
    }
    out.push_back(s);
  }
  return out;
}

/// The polynomial map P of a normalization.
inline FormalMap P_map(const NormalizationP& P, const nf_model& m, int trunc) {
  int n = m.n;
  auto Az = Az_prime(P.A, n, trunc);
  HoloSeries w = HoloSeries::last(n, trunc);
  HoloSeries bz = bform(m, Az, P.B.conjugate());
  FormalMap out;
  for (int beta = 0; beta + 1 < n; ++beta) {
    HoloSeries p = Az[beta] + P.B(beta) * w + cplx(0, 2.0 / P.c) * (bz * Az[beta]);
    p += P.a[beta].trunc() > trunc ? P.a[beta].with_trunc(trunc) : P.a[beta].as_exact(trunc);
    HoloSeries lin(n, trunc);
    for (int al = 0; al < beta; ++al) lin += P.b(beta, al) * Az[al];
    lin += cplx(P.cb(beta)) * Az[beta];
    p += lin * w;
    out.f.push_back(p);
  }
  HoloSeries fn = real_cbrt(P.c) * HoloSeries::z(n, trunc, n - 1);
  fn += P.d.as_exact(trunc);
  out.f.push_back(fn);
  out.g = P.c * w + cplx(0, 2) * (bz * w);
  return out;
}

inline bool validate_P(const NormalizationP& P, const nf_model& m, double eps = tol::zero) {
  int k = m.n - 1;
  if (P.A.rows() != k || P.A.cols() != k || P.B.size() != k || P.cb.size() != k) return false;
  if (P.b.rows() != k || P.b.cols() != k || int(P.a.size()) != k) return false;
  if (!std::isfinite(P.c) || std::abs(P.c) <= eps) return false;
  cmat Irs = I_rs(m.r, m.s());
  double scale = 1.0 + std::abs(P.c);
  if ((P.A.adjoint() * Irs * P.A - P.c * Irs).norm() > eps * scale * (1 + P.A.squaredNorm())) return false;
  double dn = real_cbrt(P.c);
  if (std::abs(dn * dn * dn / P.c - 1.0) > eps) return false;
  if (((dn / P.c) * P.A.transpose() * m.R * P.A - m.R).norm() > eps * (1.0 + m.R.norm()) * (1 + P.A.squaredNorm()))
    return false;
  for (int beta = 0; beta < k; ++beta) {
    for (int al = beta; al < k; ++al)
      if (std::abs(P.b(beta, al)) > eps) return false;
    for (auto& [key, c] : P.a[beta].terms()) {
      exps e = P.a[beta].exponents(key);
      if (e.m != 0 || P.a[beta].sum_a(e) != 3) return false;
    }
  }
  for (auto& [key, c] : P.d.terms()) {
    exps e = P.d.exponents(key);
    if (e.m != 0 || P.d.sum_a(e) != 2) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// G0 constraints

/// True iff T = (z + f, w + g) has f' O(3), f^n O(2), g O(4) and the listed constants vanish.
inline bool check_G0(const FormalMap& T, double eps = tol::zero) {
  int n = T.n();
  for (int j = 0; j < n; ++j) {
    HoloSeries f = T.f[j] - HoloSeries::z(n, T.f[j].trunc(), j);
    int lim = j + 1 < n ? 3 : 2;
    for (auto& [k, c] : f.terms())
      if (detail::key_wdeg(k) < lim && std::abs(c) > eps) return false;
    if (j + 1 == n) {
      for (auto& [k, c] : f.terms()) {
        exps e = f.exponents(k);
        if (e.m == 0 && f.sum_a(e) == 2 && std::abs(c) > eps) return false;
      }
    } else {
      for (auto& [k, c] : f.terms()) {
        exps e = f.exponents(k);
        int sa = f.sum_a(e);
        if (e.m == 0 && sa == 3 && std::abs(c) > eps) return false;
        if (e.m == 1 && sa == 1) {
          int al = 0;
          while (e.a[al] == 0) ++al;
          if (al == j && std::abs(c.real()) > eps) return false;
          if (al < j && std::abs(c) > eps) return false;
        }
      }
    }
  }
  HoloSeries g = T.g - HoloSeries::last(n, T.g.trunc());
  for (auto& [k, c] : g.terms())
    if (detail::key_wdeg(k) < 4 && std::abs(c) > eps) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Real coordinates of real series at one weighted degree

struct real_coord {
  int k, l, m;
  exps e;
  bool im;
};

struct coord_system {
  int n = 0, nu = 0;
  std::vector<real_coord> coords;
  std::map<std::tuple<int, int, int>, std::vector<int>> rows_of_type;

  coord_system() = default;
  coord_system(int n_, int nu_) : n(n_), nu(nu_) {
    MixedSeries probe(n, nu);
    for (int k = 0; k <= nu; ++k)
      for (int l = 0; l <= k; ++l) {
        if (k + l > nu || (nu - k - l) % 2) continue;
        int m = (nu - k - l) / 2;
        auto& rows = rows_of_type[{k, l, m}];
        for (auto& e : type_basis(n, k, l, m)) {
          if (k == l) {
            exps sw = e;
            std::swap(sw.a, sw.b);
            auto ke = detail::pack(n, e, nu), ks = detail::pack(n, sw, nu);
            if (ke > ks) continue;
            rows.push_back(int(coords.size()));
            coords.push_back({k, l, m, e, false});
            if (ke < ks) {
              rows.push_back(int(coords.size()));
              coords.push_back({k, l, m, e, true});
            }
          } else {
            rows.push_back(int(coords.size()));
            coords.push_back({k, l, m, e, false});
            rows.push_back(int(coords.size()));
            coords.push_back({k, l, m, e, true});
          }
        }
      }
  }

  int size() const { return int(coords.size()); }

  rvec vec(const MixedSeries& F) const {
    rvec v(size());
    for (int i = 0; i < size(); ++i) {
      cplx c = F.coeff(coords[i].e);
      v(i) = coords[i].im ? c.imag() : c.real();
    }
    return v;
  }

  MixedSeries series(const rvec& v, int trunc) const {
    MixedSeries F(n, trunc);
    for (int i = 0; i < size(); ++i) {
      const auto& c = coords[i];
      exps sw = c.e;
      std::swap(sw.a, sw.b);
      bool diag = c.k == c.l && detail::pack(n, c.e, nu) == detail::pack(n, sw, nu);
      cplx x = c.im ? cplx(0, v(i)) : cplx(v(i));
      F.add(c.e, x);
      if (!diag) F.add(sw, std::conj(x));
    }
    return F;
  }
};

// ---------------------------------------------------------------------------
// Normal space generators

/// Matrix of a linear operator between monomial bases.
template <class Op>
cmat op_matrix(int n, int trunc, const std::vector<exps>& dom, const std::vector<exps>& cod, Op op) {
  std::map<std::uint64_t, int> pos;
  MixedSeries probe(n, trunc);
  for (int i = 0; i < int(cod.size()); ++i) pos[detail::pack(n, cod[i], probe.wdeg(cod[i]))] = i;
  cmat M = cmat::Zero(cod.size(), dom.size());
  for (int j = 0; j < int(dom.size()); ++j) {
    MixedSeries u(n, trunc);
    u.add(dom[j], 1.0);
    MixedSeries img = op(u);
    for (auto& [k, c] : img.terms()) {
      auto it = pos.find(k);
      if (it == pos.end()) throw nf_error("op_matrix: image outside the codomain basis");
      M(it->second, j) += c;
    }
  }
  return M;
}

inline MixedSeries series_from(int n, int trunc, const std::vector<exps>& basis, const cvec& x) {
  MixedSeries F(n, trunc);
  for (int j = 0; j < int(basis.size()); ++j) F.add(basis[j], x(j));
  return F;
}

enum class clause { none, zero, generated, complement };

inline bool is_complement_type(int k, int l) { return (k == 3 && l == 1) || (k == 3 && l == 2); }

/// Clause kind for a type with k >= l.
inline clause clause_of(int k, int l) {
  if (l == 0) return clause::zero;
  if (is_complement_type(k, l)) return clause::complement;
  if (l == 1) return clause::generated;
  if ((k == 2 && l == 2) || (k == 4 && l == 2) || (k == 3 && l == 3)) return clause::generated;
  return clause::none;
}

/// Complex generators (columns over type_basis(n,k,l,m)) of the generated clauses.
inline cmat N_generators(const nf_model& md, int k, int l, int m) {
  int n = md.n, T = k + l + 2 * m;
  auto B = type_basis(n, k, l, m);
  MixedSeries herm = md.herm(T);
  auto lap = [&](const MixedSeries& u) { return conj_diff(herm, u); };
  MixedSeries zn = MixedSeries::z(n, T, n - 1), zbn = MixedSeries::zbar(n, T, n - 1);
  MixedSeries sm(n, T);
  sm.add(exps{{}, {}, m}, 1.0);
  std::vector<cvec> cols;
  auto gen = [&](const MixedSeries& F) {
    cvec v = cvec::Zero(B.size());
    for (int j = 0; j < int(B.size()); ++j) v(j) = F.coeff(B[j]);
    cols.push_back(v);
  };
  auto mono = [&](const exps& e) {
    MixedSeries s(n, T);
    s.add(e, 1.0);
    return s;
  };
  auto append_kernel = [&](const cmat& K) {
    for (int j = 0; j < K.cols(); ++j) cols.push_back(K.col(j));
  };
  if (k == 1 && l == 1) {
    append_kernel(null_space(op_matrix(n, T, B, type_basis(n, 0, 0, m), lap)));
  } else if (l == 1 && k == 2) {
    for (auto& e : type_basis(n, 2, 0, m)) gen(zbn * mono(e));
  } else if (l == 1 && k >= 4) {
    for (auto& e : type_basis(n, k, 0, m))
      if (e.a[n - 1] == 0) gen(zbn * mono(e));
  } else if (k == 2 && l == 2) {
    gen(herm * zn * zbn * sm);
    append_kernel(null_space(op_matrix(n, T, B, type_basis(n, 1, 1, m), lap)));
  } else if (k == 4 && l == 2) {
    for (auto& e : type_basis(n, 3, 0, m))
      if (e.a[n - 1] == 0) gen(herm * zbn * mono(e));
    append_kernel(null_space(op_matrix(n, T, B, type_basis(n, 3, 1, m), lap)));
  } else if (k == 3 && l == 3) {
    MixedSeries h2 = herm * herm;
    for (auto& e : type_basis(n, 0, 1, m)) gen(h2 * zn * mono(e));
    for (auto& e : type_basis(n, 1, 0, m)) gen(h2 * zbn * mono(e));
    auto lap2 = [&](const MixedSeries& u) { return lap(lap(u)); };
    append_kernel(null_space(op_matrix(n, T, B, type_basis(n, 1, 1, m), lap2)));
  }
  cmat G(B.size(), cols.size());
  for (int j = 0; j < int(cols.size()); ++j) G.col(j) = cols[j];
  return G;
}

/// Orthonormal real basis (in coordinates) of the real span generated by G within one type.
inline rmat real_generator_basis(const nf_model& md, const coord_system& cs, int k, int l, int m) {
  int n = md.n, T = cs.nu;
  auto B = type_basis(n, k, l, m);
  cmat G = N_generators(md, k, l, m);
  if (G.cols() == 0) return rmat(cs.size(), 0);
  G = col_space(G);
  std::vector<rvec> cand;
  for (int j = 0; j < G.cols(); ++j) {
    MixedSeries F = series_from(n, T, B, G.col(j));
    if (k > l) {
      cand.push_back(cs.vec(F + conj(F)));
      MixedSeries Fi = I * F;
      cand.push_back(cs.vec(Fi + conj(Fi)));
    } else {
      cand.push_back(cs.vec(real_part(F)));
      cand.push_back(cs.vec(imag_part(F)));
    }
  }
  rmat C(cs.size(), cand.size());
  for (int j = 0; j < int(cand.size()); ++j) C.col(j) = cand[j];
  return col_space(C);
}

// ---------------------------------------------------------------------------
// The graded system for L at one weighted degree

struct L_unknown {
  int comp;  // 0..n-2 for f', n-1 for f^n, n for g
  exps e;    // holomorphic monomial z^a w^m
  bool im;
};

/// Holomorphic monomials of weighted degree d.
inline std::vector<exps> holo_basis(int n, int d) {
  std::vector<exps> out;
  for (int m = 0; 2 * m <= d; ++m)
    for (auto& a : compositions(n, d - 2 * m)) out.push_back(exps{a, {}, m});
  return out;
}

/// h(z, s + i<z',zbar'>) for a holomorphic series h.
inline MixedSeries on_graph(const HoloSeries& h, const MixedSeries& herm) {
  int n = h.n(), T = h.trunc();
  images<mixed_tag> im;
  for (int j = 0; j < n; ++j) im.z.push_back(MixedSeries::z(n, T, j));
  im.last = {MixedSeries::last(n, T) + I * herm.as_exact(T)};
  return substitute(h, im);
}

inline bool excluded_in_G0(int n, int nu, const L_unknown& u) {
  if (nu != 4) return false;
  if (u.comp == n) return false;
  if (u.comp == n - 1) return u.e.m == 0;
  if (u.e.m == 0) return true;
  int al = 0;
  while (u.e.a[al] == 0) ++al;
  if (al == u.comp) return !u.im;
  return al < u.comp;
}

/// L(f', f^n, g) evaluated at weighted degree nu.
inline MixedSeries L_apply(const nf_model& md, int nu, const std::vector<HoloSeries>& f, const HoloSeries& g) {
  int n = md.n;
  MixedSeries herm = md.herm(nu);
  MixedSeries X(n, nu);
  X += I * on_graph(g.as_exact(nu), herm);
  for (int b = 0; b + 1 < n; ++b)
    X += (2.0 * md.eps(b)) * (on_graph(f[b].as_exact(nu), herm) * MixedSeries::zbar(n, nu, b));
  MixedSeries pb = conj(md.pR(nu));
  MixedSeries zz = MixedSeries::z(n, nu, n - 1) * MixedSeries::zbar(n, nu, n - 1);
  X += 2.0 * ((pb + 2.0 * zz) * on_graph(f[n - 1].as_exact(nu), herm));
  return real_part(X).weighted_part(nu);
}

struct L_system {
  nf_model md;
  int nu = 0;
  coord_system cs;
  std::vector<L_unknown> unknowns;
  rmat Lfull;                       // all coordinates x unknowns
  std::vector<int> crows;           // constrained coordinate rows
  std::vector<char> is_X;           // per constrained row: complement clause
  rmat Nfull;                       // all coordinates x normal-space unknowns
  std::map<std::tuple<int, int, int>, rmat> type_basis_real;  // generated clauses
  rmat X_img;                       // orthonormal basis of the excluded image in X rows (over all coords)
  rmat A;                           // square constrained system
  Eigen::PartialPivLU<rmat> lu;
  double sigma_min = 0, sigma_max = 0;
  int dim = 0;
};

inline std::string model_key(const nf_model& md, int nu) {
  std::string k = std::to_string(md.n) + ":" + std::to_string(md.r) + ":" + std::to_string(nu);
  char buf[64];
  for (int i = 0; i < md.R.size(); ++i) {
    std::snprintf(buf, sizeof buf, ":%.17g,%.17g", md.R.data()[i].real(), md.R.data()[i].imag());
    k += buf;
  }
  return k;
}

inline std::shared_ptr<const L_system> build_L_system(const nf_model& md, int nu) {
  auto S = std::make_shared<L_system>();
  S->md = md;
  S->nu = nu;
  S->cs = coord_system(md.n, nu);
  int n = md.n;
  const auto& cs = S->cs;
  // L columns
  std::vector<rvec> cols;
  for (int comp = 0; comp <= n; ++comp) {
    int d = comp < n - 1 ? nu - 1 : comp == n - 1 ? nu - 2 : nu;
    for (auto& e : holo_basis(n, d))
      for (bool im : {false, true}) {
        L_unknown u{comp, e, im};
        if (excluded_in_G0(n, nu, u)) continue;
        std::vector<HoloSeries> f(n, HoloSeries(n, nu));
        HoloSeries g(n, nu);
        HoloSeries h(n, nu);
        h.add(e, im ? I : cplx(1));
        if (comp == n) g = h;
        else f[comp] = h;
        cols.push_back(cs.vec(L_apply(md, nu, f, g)));
        S->unknowns.push_back(u);
      }
  }
  S->Lfull = rmat(cs.size(), cols.size());
  for (int j = 0; j < int(cols.size()); ++j) S->Lfull.col(j) = cols[j];
  // Normal space generators on generated clauses
  std::vector<rvec> ncols;
  std::vector<char> row_X(cs.size(), 0), row_c(cs.size(), 0);
  for (auto& [t, rows] : cs.rows_of_type) {
    auto [k, l, m] = t;
    clause c = clause_of(k, l);
    if (c == clause::none) continue;
    for (int r : rows) {
      row_c[r] = 1;
      if (c == clause::complement) row_X[r] = 1;
    }
    if (c == clause::generated) {
      rmat Bm = real_generator_basis(md, cs, k, l, m);
      S->type_basis_real[t] = Bm;
      for (int j = 0; j < Bm.cols(); ++j) ncols.push_back(Bm.col(j));
    }
  }
  for (int i = 0; i < cs.size(); ++i)
    if (row_c[i]) {
      S->crows.push_back(i);
      S->is_X.push_back(row_X[i]);
    }
  int nc = int(S->crows.size()), nx = 0;
  for (char x : S->is_X) nx += x;
  rmat N0(cs.size(), ncols.size());
  for (int j = 0; j < int(ncols.size()); ++j) N0.col(j) = ncols[j];
  rmat Mfull(cs.size(), S->Lfull.cols() + N0.cols());
  Mfull << S->Lfull, N0;
  // Complement clause: orthogonal complement of the image of the homogeneous non-X solutions.
  rmat Mnon(nc - nx, Mfull.cols()), MX(nx, Mfull.cols());
  std::vector<int> xrows;
  for (int i = 0, a = 0, b = 0; i < nc; ++i) {
    if (S->is_X[i]) {
      MX.row(b++) = Mfull.row(S->crows[i]);
      xrows.push_back(S->crows[i]);
    } else {
      Mnon.row(a++) = Mfull.row(S->crows[i]);
    }
  }
  rmat NX(cs.size(), 0);
  S->X_img = rmat::Zero(cs.size(), 0);
  if (nx > 0) {
    rmat K = null_space(Mnon);
    rmat img = MX * K;
    rmat Q = img.cols() ? null_space(rmat(img.transpose())) : rmat(rmat::Identity(nx, nx));
    rmat Ic = img.cols() ? col_space(img) : rmat(nx, 0);
    NX = rmat::Zero(cs.size(), Q.cols());
    S->X_img = rmat::Zero(cs.size(), Ic.cols());
    for (int i = 0; i < nx; ++i) {
      NX.row(xrows[i]) = Q.row(i);
      S->X_img.row(xrows[i]) = Ic.row(i);
    }
  }
  S->Nfull = rmat(cs.size(), N0.cols() + NX.cols());
  S->Nfull << N0, NX;
  int nL = int(S->Lfull.cols()), nN = int(S->Nfull.cols());
  if (nL + nN != nc)
    throw singular_system("graded system at degree " + std::to_string(nu) + " is not square (" + std::to_string(nc) +
                          " equations, " + std::to_string(nL + nN) + " unknowns)");
  S->A = rmat(nc, nL + nN);
  for (int i = 0; i < nc; ++i) {
    S->A.row(i).head(nL) = S->Lfull.row(S->crows[i]);
    S->A.row(i).tail(nN) = S->Nfull.row(S->crows[i]);
  }
  S->dim = nc;
  if (nc > 0) {
    // Singular values from the Gram matrix; the systems are well conditioned, so the squaring loses nothing that matters.
    Eigen::SelfAdjointEigenSolver<rmat> gram(S->A.transpose() * S->A, Eigen::EigenvaluesOnly);
    S->sigma_max = std::sqrt(std::max(0.0, gram.eigenvalues()(nc - 1)));
    S->sigma_min = std::sqrt(std::max(0.0, gram.eigenvalues()(0)));
    if (S->sigma_min < 1e-6 * S->sigma_max) {
      Eigen::JacobiSVD<rmat> svd(S->A);
      S->sigma_max = svd.singularValues()(0);
      S->sigma_min = svd.singularValues()(nc - 1);
    }
    S->lu.compute(S->A);
  }
  return S;
}

inline std::shared_ptr<const L_system> L_system_for(const nf_model& md, int nu) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const L_system>> cache;
  std::string key = model_key(md, nu);
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  auto S = build_L_system(md, nu);
  std::lock_guard<std::mutex> lock(mu);
  return cache.emplace(key, S).first->second;
}

// ---------------------------------------------------------------------------
// Operators and membership

/// S_R u = -<grad', gradbar'>(p_R u).
inline MixedSeries S_R_apply(const nf_model& md, const MixedSeries& u) {
  return S_apply(md.herm(u.trunc()), md.pR(u.trunc()), u);
}

struct normal_space_report {
  bool ok = true;
  std::map<std::string, double> deviation;  // per clause, labelled "nu:k,l,m"
};

inline std::string clause_label(int nu, int k, int l, int m) {
  return std::to_string(nu) + ":" + std::to_string(k) + "," + std::to_string(l) + "," + std::to_string(m);
}

inline normal_space_report normal_space_check(const MixedSeries& F, const nf_model& md, double eps = tol::zero) {
  if (!is_real(F, eps)) throw nf_error("is_in_normal_space: series is not real");
  normal_space_report rep;
  for (auto& [nu, Fnu] : weighted_decompose(F)) {
    if (Fnu.max_abs() <= eps) continue;
    if (nu < 4) {
      rep.ok = false;
      rep.deviation[std::to_string(nu) + ":low"] = Fnu.max_abs();
      continue;
    }
    auto S = L_system_for(md, nu);
    const auto& cs = S->cs;
    rvec v = cs.vec(Fnu);
    double tolv = eps * (1.0 + v.norm());
    rvec xpart = rvec::Zero(cs.size());
    for (auto& [t, rows] : cs.rows_of_type) {
      auto [k, l, m] = t;
      clause c = clause_of(k, l);
      if (c == clause::none) continue;
      rvec part = rvec::Zero(cs.size());
      for (int r : rows) part(r) = v(r);
      if (c == clause::complement) {
        xpart += part;
        continue;
      }
      double dev = 0;
      if (c == clause::zero) {
        dev = part.norm();
      } else {
        const rmat& Bm = S->type_basis_real.at(t);
        dev = (part - Bm * (Bm.transpose() * part)).norm();
      }
      if (dev > tolv) rep.ok = false;
      if (dev > 0) rep.deviation[clause_label(nu, k, l, m)] = dev;
    }
    double dx = S->X_img.cols() ? (S->X_img.transpose() * xpart).norm() : 0.0;
    if (dx > tolv) rep.ok = false;
    if (dx > 0) rep.deviation[std::to_string(nu) + ":complement"] = dx;
  }
  return rep;
}

inline bool is_in_normal_space(const MixedSeries& F, const nf_model& md, double eps = tol::zero) {
  return normal_space_check(F, md, eps).ok;
}

/// Orthogonal projection onto the normal space, with the complementary part.
inline std::pair<MixedSeries, MixedSeries> project_normal(const MixedSeries& F, const nf_model& md) {
  MixedSeries N(F.n(), F.trunc());
  for (auto& [nu, Fnu] : weighted_decompose(F)) {
    if (nu < 4) continue;
    auto S = L_system_for(md, nu);
    const auto& cs = S->cs;
    rvec v = cs.vec(Fnu), out = rvec::Zero(cs.size()), xpart = rvec::Zero(cs.size());
    for (auto& [t, rows] : cs.rows_of_type) {
      auto [k, l, m] = t;
      clause c = clause_of(k, l);
      rvec part = rvec::Zero(cs.size());
      for (int r : rows) part(r) = v(r);
      if (c == clause::none) out += part;
      else if (c == clause::generated) {
        const rmat& Bm = S->type_basis_real.at(t);
        out += Bm * (Bm.transpose() * part);
      } else if (c == clause::complement) {
        xpart += part;
      }
    }
    if (S->X_img.cols()) xpart -= S->X_img * (S->X_img.transpose() * xpart);
    N += cs.series(out + xpart, F.trunc());
  }
  return {N, F - N};
}

// ---------------------------------------------------------------------------
// Solving one degree

struct L_solution {
  std::vector<HoloSeries> f;  // f'_{nu-1} and f^n_{nu-2}
  HoloSeries g;
  MixedSeries N;
  double sigma_min = 0, sigma_max = 0, residual = 0;
  int dim = 0;
};

inline L_solution solve_L(const MixedSeries& Fnu, const nf_model& md, int nu) {
  if (nu < 4) throw nf_error("solve_L: degree must be at least 4");
  auto S = L_system_for(md, nu);
  const auto& cs = S->cs;
  int n = md.n;
  rvec v = cs.vec(Fnu.weighted_part(nu));
  int nc = S->dim, nL = int(S->Lfull.cols());
  L_solution out;
  out.sigma_min = S->sigma_min;
  out.sigma_max = S->sigma_max;
  out.dim = nc;
  if (nc > 0 && S->sigma_min <= 1e-12 * S->sigma_max)
    throw singular_system("graded system at degree " + std::to_string(nu) + " is singular");
  rvec rhs(nc);
  for (int i = 0; i < nc; ++i) rhs(i) = v(S->crows[i]);
  rvec x = nc ? rvec(S->lu.solve(rhs)) : rvec(0);
  out.residual = nc ? (S->A * x - rhs).norm() : 0.0;
  out.f.assign(n, HoloSeries(n, nu));
  out.g = HoloSeries(n, nu);
  for (int j = 0; j < nL; ++j) {
    const auto& u = S->unknowns[j];
    cplx c = u.im ? cplx(0, x(j)) : cplx(x(j));
    if (u.comp == n) out.g.add(u.e, c);
    else out.f[u.comp].add(u.e, c);
  }
  rvec Lx = S->Lfull * x.head(nL);
  out.N = cs.series(v - Lx, nu);
  return out;
}

// ---------------------------------------------------------------------------
// Factoring H = T o P

struct factored_map {
  NormalizationP P;
  FormalMap T;
};

inline factored_map factor_map(const FormalMap& H, const nf_model& md) {
  int n = md.n, k = n - 1;
  NormalizationP P = NormalizationP::identity(n);
  exps ew;
  ew.m = 1;
  cplx c = H.g.coeff(ew);
  if (std::abs(c.imag()) > 1e-8 * (1 + std::abs(c)) || std::abs(c) <= tol::zero)
    throw nf_error("factor_map: w coefficient of g must be real and nonzero");
  P.c = c.real();
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      exps e;
      e.a[j] = 1;
      P.A(i, j) = H.f[i].coeff(e);
    }
    P.B(i) = H.f[i].coeff(ew);
  }
  for (auto& I2 : compositions(n, 2)) {
    exps e;
    e.a = I2;
    P.d.add(e, H.f[n - 1].coeff(e));
  }
  for (int beta = 0; beta < k; ++beta)
    for (auto& J : compositions(n, 3)) {
      exps e;
      e.a = J;
      P.a[beta].add(e, H.f[beta].coeff(e));
    }
  // z' w coefficients expressed in the basis (Az')^alpha.
  cmat AinvT = P.A.transpose().inverse();
  for (int beta = 0; beta < k; ++beta) {
    cvec v(k);
    for (int g = 0; g < k; ++g) {
      exps e;
      e.a[g] = 1;
      e.m = 1;
      v(g) = H.f[beta].coeff(e);
    }
    cvec kappa = AinvT * v;
    for (int al = 0; al < beta; ++al) P.b(beta, al) = kappa(al);
    P.cb(beta) = kappa(beta).real();
  }
  FormalMap Pm = P_map(P, md, H.trunc());
  return {P, compose(H, inverse(Pm))};
}

// ---------------------------------------------------------------------------
// Degree-by-degree normalization

struct degree_diag {
  int nu;
  int dim;
  double sigma_min, sigma_max, residual;
};

struct NormalFormResult {
  MixedSeries N;
  FormalMap T;
  NormalizationP P_used;
  Hypersurface M_out;
  std::vector<degree_diag> per_degree;
};

/// Max deviation of phi from the model through weighted degree 3.
inline double model_deviation(const Hypersurface& M, const nf_model& md) {
  MixedSeries d = (M.phi - md.phi(M.trunc())).weighted_range(0, 3);
  return d.max_abs();
}

inline NormalFormResult normal_form(const Hypersurface& M, const NormalizationP& P, const nf_model& md, int degree,
                                    double eps = tol::zero) {
  if (M.n != md.n || md.n < 2) throw nf_error("normal_form: dimension mismatch");
  if (degree > M.trunc()) throw nf_error("normal_form: degree exceeds truncation");
  if (!validate_P(P, md, std::max(eps, 1e-9))) throw nf_error("normal_form: invalid normalization");
  if (model_deviation(M, md) > 1e-8) throw nf_error("normal_form: input is not in the partial normal form");
  int T = M.trunc(), n = md.n;
  FormalMap Pm = P_map(P, md, T);
  Hypersurface cur = apply_map(M, Pm);
  if (model_deviation(cur, md) > 1e-8) throw nf_error("normal_form: normalization does not preserve the partial normal form");
  NormalFormResult res;
  res.P_used = P;
  res.T = FormalMap::identity(n, T);
  MixedSeries model = md.phi(T);
  for (int nu = 4; nu <= degree; ++nu) {
    MixedSeries Fnu = (cur.phi - model).weighted_part(nu);
    L_solution sol = solve_L(Fnu, md, nu);
    FormalMap Tn = FormalMap::identity(n, T);
    for (int j = 0; j < n; ++j) Tn.f[j] += sol.f[j].as_exact(T);
    Tn.g += sol.g.as_exact(T);
    cur = apply_map(cur, Tn);
    res.T = compose(Tn, res.T);
    MixedSeries after = (cur.phi - model).weighted_part(nu);
    double resid = (after - sol.N.as_exact(T)).max_abs();
    res.per_degree.push_back({nu, sol.dim, sol.sigma_min, sol.sigma_max, std::max(resid, sol.residual)});
  }
  MixedSeries rest = cur.phi - model;
  res.N = rest.weighted_range(4, degree);
  res.M_out = cur;
  return res;
}

}  // namespace crnf
