#pragma once

#include <Eigen/Dense>
#include <map>
#include <tuple>
#include <vector>

#include "linalg.hpp"
#include "series.hpp"

namespace crnf {

/// All exponent vectors of length n with total degree k.
inline std::vector<std::array<int, max_vars>> compositions(int n, int k) {
  std::vector<std::array<int, max_vars>> out;
  std::array<int, max_vars> cur{};
  auto rec = [&](auto&& self, int j, int left) -> void {
    if (j == n - 1) {
      cur[j] = left;
      out.push_back(cur);
      return;
    }
    for (int x = left; x >= 0; --x) {
      cur[j] = x;
      self(self, j + 1, left - x);
    }
  };
  if (n == 0) {
    if (k == 0) out.push_back(cur);
    return out;
  }
  rec(rec, 0, k);
  return out;
}

/// Monomials z^a zbar^b s^m with |a| = k, |b| = l.
inline std::vector<exps> type_basis(int n, int k, int l, int m) {
  std::vector<exps> out;
  auto A = compositions(n, k), B = compositions(n, l);
  for (auto& a : A)
    for (auto& b : B) out.push_back(exps{a, b, m});
  return out;
}

/// Type (k,l) of a nonzero homogeneous series; (-1,-1) when empty, throws on mixed types.
inline std::pair<int, int> single_type(const MixedSeries& f) {
  std::pair<int, int> t{-1, -1};
  for (auto& [k, c] : f.terms()) {
    exps e = f.exponents(k);
    std::pair<int, int> u{f.sum_a(e), f.sum_b(e)};
    if (t.first < 0) t = u;
    else if (t != u) throw series_error("series is not of a single type");
  }
  return t;
}

/// pbar(grad, gradbar) u, with p a polynomial in z, zbar.
inline MixedSeries conj_diff(const MixedSeries& p, const MixedSeries& u) {
  MixedSeries r(u.n(), u.trunc(), u.weights());
  int n = u.n();
  for (auto& [kp, cp] : p.terms()) {
    exps ep = p.exponents(kp);
    if (ep.m != 0) throw series_error("conj_diff: operator symbol must not depend on s");
    for (auto& [ku, cu] : u.terms()) {
      exps e = u.exponents(ku);
      double f = 1.0;
      bool zero = false;
      for (int j = 0; j < n && !zero; ++j) {
        if (e.a[j] < ep.a[j] || e.b[j] < ep.b[j]) {
          zero = true;
          break;
        }
        for (int t = 0; t < ep.a[j]; ++t) f *= e.a[j] - t;
        for (int t = 0; t < ep.b[j]; ++t) f *= e.b[j] - t;
        e.a[j] -= ep.a[j];
        e.b[j] -= ep.b[j];
      }
      if (!zero) r.add(e, std::conj(cp) * cu * f);
    }
  }
  return r;
}

/// S u = -pbar(grad, gradbar)(q u).
inline MixedSeries S_apply(const MixedSeries& p, const MixedSeries& q, const MixedSeries& u) {
  return -conj_diff(p, q.as_exact(u.trunc()) * u);
}

struct fischer_result {
  MixedSeries G, H;
};

struct fischer2_result {
  MixedSeries G1, G2, H;
};

/// F = p G + H with pbar(grad, gradbar) H = 0.
inline fischer_result fischer_decompose(const MixedSeries& F, const MixedSeries& p) {
  int n = F.n(), T = F.trunc();
  fischer_result out{MixedSeries(n, T, F.weights()), F};
  auto [k, l] = single_type(F);
  auto [a, b] = single_type(p);
  if (a < 0) throw series_error("fischer_decompose: p must be nonzero");
  if (k < 0) return out;
  if (k < a || l < b) throw series_error("fischer_decompose: type of p exceeds type of F");
  MixedSeries pe = p.as_exact(T);
  std::map<int, std::vector<std::pair<exps, cplx>>> by_m;
  for (auto& [key, c] : F.terms()) {
    exps e = F.exponents(key);
    by_m[e.m].emplace_back(e, c);
  }
  for (auto& [m, terms] : by_m) {
    auto basis = type_basis(n, k - a, l - b, m);
    int d = int(basis.size());
    std::map<std::uint64_t, int> pos;
    MixedSeries probe(n, T, F.weights());
    for (int j = 0; j < d; ++j) pos[detail::pack(n, basis[j], probe.wdeg(basis[j]))] = j;
    cmat Mx = cmat::Zero(d, d);
    for (int j = 0; j < d; ++j) {
      MixedSeries u(n, T, F.weights());
      u.add(basis[j], 1.0);
      MixedSeries img = conj_diff(p, pe * u);
      for (auto& [key, c] : img.terms()) Mx(pos.at(key), j) += c;
    }
    MixedSeries Fm(n, T, F.weights());
    for (auto& [e, c] : terms) Fm.add(e, c);
    MixedSeries rhs = conj_diff(p, Fm);
    cvec y = cvec::Zero(d);
    for (auto& [key, c] : rhs.terms()) y(pos.at(key)) += c;
    cvec x = Mx.completeOrthogonalDecomposition().solve(y);
    for (int j = 0; j < d; ++j) out.G.add(basis[j], x(j));
  }
  out.H = F - pe * out.G;
  return out;
}

/// F = p G1 + q G2 + H with qbar H = 0 and pbar H in the image of S.
inline fischer2_result fischer_decompose2(const MixedSeries& F, const MixedSeries& p, const MixedSeries& q) {
  auto s1 = fischer_decompose(F, p);
  auto s2 = fischer_decompose(s1.H, q);
  return {s1.G, s2.G, s2.H};
}

}  // namespace crnf
