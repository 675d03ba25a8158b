#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "linalg.hpp"
#include "maps.hpp"
#include "models.hpp"
#include "series.hpp"

namespace crnf {

struct partial_nf_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Pure part: terms with no zbar or no z (including those in s alone).
inline MixedSeries pure_part(const MixedSeries& phi) {
  MixedSeries r(phi.n(), phi.trunc(), phi.weights());
  for (auto& [k, c] : phi.terms()) {
    exps e = phi.exponents(k);
    if (phi.sum_a(e) == 0 || phi.sum_b(e) == 0) r.add_key(k, c);
  }
  return r;
}

/// Holomorphic series with z -> z, s -> w.
inline HoloSeries holo_from(const MixedSeries& h) {
  HoloSeries r(h.n(), h.trunc());
  for (auto& [k, c] : h.terms()) {
    exps e = h.exponents(k);
    if (h.sum_b(e) != 0) throw series_error("holo_from: series depends on zbar");
    exps x;
    x.a = e.a;
    x.m = e.m;
    r.add(x, c);
  }
  return r;
}

/// Removes pure terms by holomorphic changes of w, one weighted degree per pass.
inline std::pair<Hypersurface, FormalMap> to_regular(const Hypersurface& M) {
  int n = M.n, T = M.trunc();
  FormalMap total = FormalMap::identity(n, T);
  Hypersurface cur = M;
  for (int pass = 0; pass <= T; ++pass) {
    MixedSeries pp = pure_part(cur.phi);
    if (pp.max_abs() <= tol::zero) break;
    int lo = pp.order();
    MixedSeries low = pp.weighted_part(lo);
    // phi_{*0} + phi_{0*}: the holomorphic part carries the s-only terms with weight one half.
    MixedSeries h(n, T);
    for (auto& [k, c] : low.terms()) {
      exps e = low.exponents(k);
      if (low.sum_b(e) == 0) h.add(e, low.sum_a(e) == 0 ? 0.5 * c : c);
    }
    FormalMap step = FormalMap::identity(n, T);
    step.g -= cplx(0, 2) * holo_from(h);
    cur = apply_map(cur, step);
    total = compose(step, total);
  }
  if (pure_part(cur.phi).max_abs() > 1e-8) throw partial_nf_error("to_regular: pure terms remain");
  return {cur, total};
}

/// g(a, b) = coefficient of zbar^a z^b at weighted degree two.
inline cmat levi_matrix(const MixedSeries& phi) {
  int n = phi.n();
  cmat g(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      exps e;
      e.b[a] += 1;
      e.a[b] += 1;
      g(a, b) = phi.coeff(e);
    }
  return g;
}

/// h(a, b) for a fixed holomorphic index c: coefficient of zbar^a zbar^b z^c, symmetrized.
inline cmat cubic_matrix(const MixedSeries& phi, int c) {
  int n = phi.n();
  cmat h(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      exps e;
      e.b[a] += 1;
      e.b[b] += 1;
      e.a[c] += 1;
      h(a, b) = phi.coeff(e) / (a == b ? 1.0 : 2.0);
    }
  return h;
}

/// z -> P^{-1} z, w -> mu_inv w.
inline FormalMap linear_change(const cmat& Pinv, double mu_inv, int n, int T) {
  FormalMap m;
  for (int i = 0; i < n; ++i) {
    HoloSeries s(n, T);
    for (int j = 0; j < n; ++j) {
      exps e;
      e.a[j] = 1;
      s.add(e, Pinv(i, j));
    }
    m.f.push_back(s);
  }
  m.g = mu_inv * HoloSeries::last(n, T);
  return m;
}

struct third_order_result {
  Hypersurface M;
  FormalMap map;
  int r = 0, s = 0;
  cmat g;               // Levi matrix, diag(eps)
  std::vector<cmat> h;  // one symmetric matrix per Levi-kernel index r+s..n-1
};

/// Removes k_{ab mu} for mu < r+s by z^mu -> z^mu + eps_mu d(phi_21)/d zbar^mu.
inline std::pair<Hypersurface, FormalMap> cancel_cubic(const Hypersurface& M, int r, int s) {
  int n = M.n, T = M.trunc();
  MixedSeries p21 = M.phi.type_part(2, 1).weighted_part(3);
  FormalMap step = FormalMap::identity(n, T);
  for (int mu = 0; mu < r + s; ++mu) {
    double eps = mu < r ? 1.0 : -1.0;
    step.f[mu] += eps * holo_from(differentiate(p21, var{var::zbar, mu}).as_exact(T));
  }
  return {apply_map(M, step), step};
}

/// Levi form diag(I_r, -I_s, 0) with r >= s and no cubic terms with holomorphic index below r+s.
inline third_order_result third_order_form(const Hypersurface& M) {
  int n = M.n, T = M.trunc();
  if (T < 4) throw partial_nf_error("third_order_form: truncation must be at least 4");
  if (pure_part(M.phi).weighted_range(0, 3).max_abs() > tol::zero)
    throw partial_nf_error("third_order_form: coordinates are not regular");
  cmat g = levi_matrix(M.phi);
  auto eg = hermitian_eig(g);
  double thr = tol::zero * (1.0 + eg.values.cwiseAbs().maxCoeff());
  std::vector<int> pos, neg, zer;
  for (int j = 0; j < n; ++j) {
    if (eg.values(j) > thr) pos.push_back(j);
    else if (eg.values(j) < -thr) neg.push_back(j);
    else zer.push_back(j);
  }
  double sign = 1.0;
  if (pos.size() < neg.size()) {
    std::swap(pos, neg);
    std::reverse(pos.begin(), pos.end());
    std::reverse(neg.begin(), neg.end());
    sign = -1.0;
  }
  cmat P(n, n);
  int col = 0;
  for (auto* grp : {&pos, &neg, &zer})
    for (int j : *grp) {
      double lam = std::abs(eg.values(j));
      P.col(col++) = eg.vectors.col(j) / (lam > thr ? std::sqrt(lam) : 1.0);
    }
  third_order_result out;
  out.r = int(pos.size());
  out.s = int(neg.size());
  FormalMap lin = linear_change(P.inverse(), sign, n, T);
  Hypersurface cur = apply_map(M, lin);
  auto [c2, q] = cancel_cubic(cur, out.r, out.s);
  out.M = c2;
  out.map = compose(q, lin);
  out.g = levi_matrix(c2.phi);
  for (int c = out.r + out.s; c < n; ++c) out.h.push_back(cubic_matrix(c2.phi, c));
  return out;
}

/// Case (i), (ii) or (iii) with lambda and the basis change: a conj(d) B H B^t is the target block form.
struct semidef_result {
  int kase = 0;  // 1, 2, 3
  rvec lambda;
  cmat B;
  double a = 1.0;

  cplx d() const { return B(B.rows() - 1, B.cols() - 1); }
  static std::string tag(int k) { return k == 1 ? "semidef_i" : k == 2 ? "semidef_ii" : "semidef_iii"; }
};

inline cmat semidef_target(int kase, const rvec& lambda) {
  int m = int(lambda.size()), n = m + 1;
  cmat H = cmat::Zero(n, n);
  H.topLeftCorner(m, m) = D_lambda(lambda);
  if (kase == 1) H(m - 1, n - 1) = H(n - 1, m - 1) = 1.0;
  if (kase == 3) H(n - 1, n - 1) = 1.0;
  return H;
}

inline cmat apply_basis_change(const cmat& H, const cmat& B, double a) {
  cplx d = B(B.rows() - 1, B.cols() - 1);
  return a * std::conj(d) * B * H * B.transpose();
}

/// Unitary with last row u^*, so that it maps u to the last basis vector.
inline cmat unitary_to_last(const cvec& u) {
  int m = int(u.size());
  std::vector<cvec> cols{u};
  for (int j = 0; j < m && int(cols.size()) < m; ++j) {
    cvec x = cvec::Unit(m, j);
    for (int pass = 0; pass < 2; ++pass)
      for (auto& c : cols) x -= c * c.dot(x);
    if (x.norm() > 1e-6) cols.push_back(x / x.norm());
  }
  cmat Q(m, m);
  for (int j = 1; j < m; ++j) Q.col(j - 1) = cols[j];
  Q.col(m - 1) = u;
  return Q.adjoint();
}

inline semidef_result classify_semidefinite(const cmat& H, double eps = tol::zero) {
  int n = int(H.rows()), m = n - 1;
  if (n < 2 || H.cols() != n) throw partial_nf_error("classify_semidefinite: H must be n x n with n >= 2");
  if ((H - H.transpose()).norm() > eps * (1 + H.norm())) throw partial_nf_error("classify_semidefinite: H must be symmetric");
  cmat A = H.topLeftCorner(m, m);
  cvec beta = H.col(n - 1).head(m);
  cplx gamma = H(n - 1, n - 1);
  double scale = 1.0 + H.norm();
  semidef_result out;
  out.lambda = rvec::Zero(m);
  out.B = cmat::Identity(n, n);
  if (std::abs(gamma) > eps * scale) {
    out.kase = 3;
    cmat E = A - beta * beta.transpose() / gamma;
    auto tk = takagi(E, eps);
    double l1 = tk.lambda(0);
    double dm = l1 > eps * scale ? 1.0 / l1 : 1.0;
    double th = std::arg(gamma);
    cplx d = dm * std::exp(cplx(0, -th));
    double a = 1.0 / (std::abs(gamma) * dm * dm * dm);
    cmat Vt = std::exp(cplx(0, -th / 2)) * tk.U;
    cmat V = Vt / std::sqrt(a);
    out.a = a;
    out.B.topLeftCorner(m, m) = V;
    out.B.col(n - 1).head(m) = -V * beta / gamma;
    out.B(n - 1, n - 1) = d;
    out.lambda = l1 > eps * scale ? rvec(tk.lambda / l1) : rvec::Zero(m);
  } else if (beta.norm() > eps * scale) {
    out.kase = 1;
    double nb = beta.norm();
    cmat V1 = unitary_to_last(beta / nb);
    cmat Ap = V1 * A * V1.transpose();
    cvec p(m);
    for (int j = 0; j + 1 < m; ++j) p(j) = -Ap(j, m - 1) / nb;
    p(m - 1) = -Ap(m - 1, m - 1) / (2 * nb);
    cmat Vt = cmat::Identity(m, m);
    double dm = 1.0;
    if (m > 1) {
      auto tk = takagi(cmat(Ap.topLeftCorner(m - 1, m - 1)), eps);
      double l1 = tk.lambda(0);
      if (l1 > eps * scale) {
        dm = 1.0 / l1;
        for (int j = 0; j + 1 < m; ++j) out.lambda(j) = tk.lambda(j) / l1;
      }
      Vt.topLeftCorner(m - 1, m - 1) = tk.U;
    }
    double sa = 1.0 / (dm * dm * nb);
    double a = sa * sa;
    cmat V2 = Vt / sa;
    out.a = a;
    out.B.topLeftCorner(m, m) = V2 * V1;
    out.B.col(n - 1).head(m) = V2 * p;
    out.B(n - 1, n - 1) = dm;
  } else {
    out.kase = 2;
    auto tk = takagi(A, eps);
    double l1 = tk.lambda(0);
    double dm = l1 > eps * scale ? 1.0 / l1 : 1.0;
    out.B.topLeftCorner(m, m) = tk.U;
    out.B(n - 1, n - 1) = dm;
    out.lambda = l1 > eps * scale ? rvec(tk.lambda / l1) : rvec::Zero(m);
  }
  return out;
}

struct PartialNFResult {
  int r = 0, s = 0;
  std::string kase = "other";
  rvec lambda;   // semidefinite cases
  cmat R;        // generic cases
  cmat H;        // third-order matrix after normalization
  FormalMap map;
  Hypersurface M_out;
  bool generic = false;
};

/// True iff the Levi form has rank n-1 and h_{n n n} is nonzero in the third-order form.
inline bool detect_generic(const Hypersurface& M) {
  auto reg = to_regular(M);
  auto tf = third_order_form(reg.first);
  if (tf.r + tf.s != M.n - 1) return false;
  cmat H = tf.h[0];
  return std::abs(H(M.n - 1, M.n - 1)) > tol::zero * (1 + H.norm());
}

/// Regular coordinates, third-order form, then the block normalization of H.
inline PartialNFResult partial_nf(const Hypersurface& M) {
  int n = M.n;
  if (n < 2) throw partial_nf_error("partial_nf: n must be at least 2");
  auto [reg, m0] = to_regular(M);
  auto tf = third_order_form(reg);
  PartialNFResult out;
  out.r = tf.r, out.s = tf.s;
  out.map = compose(tf.map, m0);
  out.M_out = tf.M;
  if (tf.r + tf.s != n - 1) {
    if (!tf.h.empty()) out.H = tf.h[0];
    return out;
  }
  cmat H = tf.h[0];
  int k = n - 1;
  cmat B;
  double a = 1.0;
  cplx gamma = H(k, k);
  double scale = 1.0 + H.norm();
  out.generic = std::abs(gamma) > tol::zero * scale;
  if (tf.s == 0) {
    auto cl = classify_semidefinite(H);
    out.kase = semidef_result::tag(cl.kase);
    out.lambda = cl.lambda;
    if (cl.kase == 3) out.R = D_lambda(cl.lambda);
    B = cl.B;
    a = cl.a;
  } else if (out.generic) {
    out.kase = "generic";
    cmat A = H.topLeftCorner(k, k);
    cvec beta = H.col(k).head(k);
    double dm = std::pow(std::abs(gamma), -1.0 / 3.0);
    cplx d = dm * std::exp(cplx(0, -std::arg(gamma)));
    B = cmat::Identity(n, n);
    B.col(k).head(k) = -beta / gamma;
    B(k, k) = d;
    // h-block is conj(R) for the model 2 Re(zbar^n z'^t R z')
    out.R = (std::conj(d) * (A - beta * beta.transpose() / gamma)).conjugate();
  } else {
    out.H = H;
    return out;
  }
  // Coordinates z = B^* z~, w = w~ / a.
  int T = M.trunc();
  FormalMap lin = linear_change(cmat(B.adjoint()).inverse(), a, n, T);
  Hypersurface cur = apply_map(tf.M, lin);
  auto [c2, q] = cancel_cubic(cur, tf.r, tf.s);
  out.M_out = c2;
  out.map = compose(q, compose(lin, out.map));
  out.H = cubic_matrix(c2.phi, k);
  return out;
}

/// Dimension bound for the stability group at a generic semidefinite degeneracy with invariant lambda.
inline long aut_dim_bound(int n, const rvec& lambda, double eps = tol::zero) {
  if (n < 2 || lambda.size() != n - 1) throw partial_nf_error("aut_dim_bound: lambda must have n-1 entries");
  for (int j = 0; j + 1 < lambda.size(); ++j)
    if (lambda(j) < lambda(j + 1) - eps) throw partial_nf_error("aut_dim_bound: lambda must be nonincreasing");
  if (lambda.minCoeff() < -eps) throw partial_nf_error("aut_dim_bound: lambda must be nonnegative");
  long base = long(n - 1) * n * (n + 1) * (n + 2) / 3;
  if (lambda.cwiseAbs().maxCoeff() <= eps) return base + 3L * n * n - n + 1;
  if (std::abs(lambda(0) - 1.0) > eps) throw partial_nf_error("aut_dim_bound: lambda_1 must be 1 or lambda must vanish");
  long sum = 0, mu = 0;
  int j = 0;
  while (j < lambda.size()) {
    if (lambda(j) <= eps) {
      ++mu, ++j;
      continue;
    }
    int m = 1;
    while (j + m < lambda.size() && std::abs(lambda(j + m) - lambda(j)) <= eps) ++m;
    sum += long(m) * (m - 1) / 2;
    j += m;
  }
  return base + 2L * n * n + n - 1 + sum + mu * mu;
}

}  // namespace crnf
