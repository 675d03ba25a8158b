#pragma once

#include <unsupported/Eigen/MatrixFunctions>
#include <optional>
#include <random>
#include <string>

#include "full_nf.hpp"
#include "partial_nf.hpp"

namespace crnf {

struct Signature {
  int r = 0, s = 0;
  std::string kase = "other";
  rvec lambda;
  cmat R;

  /// Same tags and counts, lambda (or R) within eps.
  bool matches(const Signature& o, double eps = 1e-7) const {
    if (r != o.r || s != o.s || kase != o.kase) return false;
    if (lambda.size() != o.lambda.size() || R.rows() != o.R.rows()) return false;
    if (lambda.size() && (lambda - o.lambda).cwiseAbs().maxCoeff() > eps) return false;
    if (R.size() && (R - o.R).cwiseAbs().maxCoeff() > eps) return false;
    return true;
  }
};

inline Signature invariants_signature(const Hypersurface& M) {
  auto p = partial_nf(M);
  Signature s;
  s.r = p.r, s.s = p.s, s.kase = p.kase, s.lambda = p.lambda;
  // Indefinite R is only a representative, so it is kept for display but not canonical.
  if (p.kase == "generic") s.R = p.R;
  return s;
}

struct EquivalenceReport {
  bool invariants_match = false;
  Signature sig_a, sig_b;
  bool normal_forms_match = false;
  bool compared = false;
  double max_deviation = 0.0;
  int degree = 0;
  NormalizationP P_a, P_b;
  int search_iterations = 0;
  std::string note = "comparison at fixed normalizations";
};

/// Both inputs are in the partial normal form of md; compares normal forms through the given degree.
inline EquivalenceReport equivalent_to_degree(const Hypersurface& M, const Hypersurface& Mp, const NormalizationP& P,
                                              const NormalizationP& Pp, const nf_model& md, int degree,
                                              double eps = 1e-6) {
  EquivalenceReport rep;
  rep.degree = degree;
  rep.P_a = P;
  rep.P_b = Pp;
  rep.sig_a = invariants_signature(M);
  rep.sig_b = invariants_signature(Mp);
  rep.invariants_match = rep.sig_a.matches(rep.sig_b);
  if (!rep.invariants_match) {
    rep.note = "signature mismatch; comparison skipped";
    return rep;
  }
  auto a = normal_form(M, P, md, degree);
  auto b = normal_form(Mp, Pp, md, degree);
  rep.compared = true;
  rep.max_deviation = (a.N - b.N).max_abs();
  rep.normal_forms_match = rep.max_deviation <= eps;
  return rep;
}

struct allowed_map {
  FormalMap map;  // T o P
  NormalizationP P;
  FormalMap T;
  nf_model md;
};

/// Real basis of {X : X^* I + I X = 0, X^t R + R X = 0}.
inline std::vector<cmat> stabilizer_algebra(int r, const cmat& R) {
  int k = int(R.rows());
  cmat Irs = I_rs(r, k - r);
  int nu = 2 * k * k;
  auto unpack = [&](const rvec& x) {
    cmat X(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) X(i, j) = cplx(x(2 * (i * k + j)), x(2 * (i * k + j) + 1));
    return X;
  };
  rmat C(4 * k * k, nu);
  for (int u = 0; u < nu; ++u) {
    cmat X = unpack(rvec::Unit(nu, u));
    cmat e1 = X.adjoint() * Irs + Irs * X, e2 = X.transpose() * R + R * X;
    for (int i = 0; i < k * k; ++i) {
      C(2 * i, u) = e1(i).real();
      C(2 * i + 1, u) = e1(i).imag();
      C(2 * k * k + 2 * i, u) = e2(i).real();
      C(2 * k * k + 2 * i + 1, u) = e2(i).imag();
    }
  }
  rmat K = null_space(C, 1e-10);
  std::vector<cmat> out;
  for (int j = 0; j < K.cols(); ++j) out.push_back(unpack(K.col(j)));
  return out;
}

/// Deterministic in seed; scale = 0 gives the identity.
inline allowed_map random_allowed_map(int r, const cmat& R, std::uint64_t seed, double scale, int trunc = 8) {
  int k = int(R.rows()), n = k + 1;
  if (r < 0 || r > k || 2 * r < k) throw nf_error("random_allowed_map: need r >= s");
  allowed_map out;
  out.md = nf_model{n, r, R};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  auto cz = [&]() { return cplx(N(rng), N(rng)); };

  NormalizationP P = NormalizationP::identity(n);
  cmat X = cmat::Zero(k, k);
  for (auto& G : stabilizer_algebra(r, R)) X += (0.5 * scale * N(rng)) * G;
  P.A = X.exp();
  if (R.norm() <= tol::zero) {
    P.c = std::exp(0.3 * scale * N(rng));
    P.A *= std::sqrt(P.c);
  }
  for (int j = 0; j < k; ++j) P.B(j) = 0.3 * scale * cz();
  for (int j = 0; j < k; ++j) {
    P.a[j] = HoloSeries(n, 3);
    for (auto& J : compositions(n, 3)) {
      exps e;
      e.a = J;
      P.a[j].add(e, 0.2 * scale * cz());
    }
    for (int al = 0; al < j; ++al) P.b(j, al) = 0.2 * scale * cz();
    P.cb(j) = 0.2 * scale * N(rng);
  }
  P.d = HoloSeries(n, 2);
  for (auto& J : compositions(n, 2)) {
    exps e;
    e.a = J;
    P.d.add(e, 0.2 * scale * cz());
  }
  out.P = P;

  // T in G0: f' = O(3), f^n = O(2), g = O(4), coefficients decaying with weight.
  FormalMap T = FormalMap::identity(n, trunc);
  for (int j = 0; j <= n; ++j) {
    int lo = j < k ? 3 : j == k ? 2 : 4;
    HoloSeries& h = j < n ? T.f[j] : T.g;
    for (int wdeg = lo; wdeg < trunc; ++wdeg)
      for (int m = 0; 2 * m <= wdeg; ++m)
        for (auto& J : compositions(n, wdeg - 2 * m)) {
          exps e;
          e.a = J;
          e.m = m;
          cplx c = 0.2 * scale * std::pow(0.5, wdeg - lo) * cz();
          int sa = wdeg - 2 * m;
          if (j < k && m == 0 && sa == 3) continue;
          if (j == k && m == 0 && sa == 2) continue;
          if (j < k && m == 1 && sa == 1) {
            int al = 0;
            while (J[al] == 0) ++al;
            if (al < j) continue;
            if (al == j) c = cplx(0, c.imag());
          }
          h.add(e, c);
        }
  }
  out.T = T;
  out.map = compose(T, P_map(P, out.md, trunc));
  return out;
}

/// P' with normal_form(apply_map(M, phi), P') equal to normal_form(M, P).
inline NormalizationP transported_normalization(const NormalFormResult& res, const FormalMap& phi, const nf_model& md) {
  int T = phi.trunc();
  FormalMap H = compose(compose(res.T.with_trunc(T), P_map(res.P_used, md, T)), inverse(phi));
  return factor_map(H, md).P;
}

/// Random P' near the identity minimizing the normal-form deviation; heuristic, off unless iterations > 0.
inline EquivalenceReport search_normalizations(const Hypersurface& M, const Hypersurface& Mp, const NormalizationP& P,
                                               const nf_model& md, int degree, int iterations, std::uint64_t seed,
                                               double eps = 1e-6) {
  EquivalenceReport best = equivalent_to_degree(M, Mp, P, NormalizationP::identity(md.n), md, degree, eps);
  if (!best.invariants_match) return best;
  for (int it = 0; it < iterations && !best.normal_forms_match; ++it) {
    auto cand = random_allowed_map(md.r, md.R, seed + it, 1.0, M.trunc());
    auto rep = equivalent_to_degree(M, Mp, P, cand.P, md, degree, eps);
    if (rep.max_deviation < best.max_deviation) best = rep;
  }
  best.search_iterations = iterations;
  best.note = "heuristic randomized search over normalizations";
  return best;
}

}  // namespace crnf
