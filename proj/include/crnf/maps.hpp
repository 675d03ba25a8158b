#pragma once

#include <vector>

#include "linalg.hpp"
#include "series.hpp"

namespace crnf {

/// Holomorphic map (f^1..f^n, g) in (z, w), w of weight two.
struct FormalMap {
  std::vector<HoloSeries> f;
  HoloSeries g;

  int n() const { return int(f.size()); }
  int trunc() const {
    int t = g.trunc();
    for (auto& c : f) t = std::min(t, c.trunc());
    return t;
  }

  static FormalMap identity(int n, int trunc) {
    FormalMap m;
    for (int j = 0; j < n; ++j) m.f.push_back(HoloSeries::z(n, trunc, j));
    m.g = HoloSeries::last(n, trunc);
    return m;
  }

  bool approx_equal(const FormalMap& o, double eps) const {
    if (n() != o.n()) return false;
    for (int j = 0; j < n(); ++j)
      if (!f[j].approx_equal(o.f[j], eps)) return false;
    return g.approx_equal(o.g, eps);
  }

  double distance(const FormalMap& o) const {
    double d = (g - o.g).max_abs();
    for (int j = 0; j < n(); ++j) d = std::max(d, (f[j] - o.f[j]).max_abs());
    return d;
  }

  FormalMap with_trunc(int t) const {
    FormalMap m;
    for (auto& c : f) m.f.push_back(c.trunc() > t ? c.with_trunc(t) : c);
    m.g = g.trunc() > t ? g.with_trunc(t) : g;
    return m;
  }
};

/// Graph Im w = phi(z, zbar, Re w).
struct Hypersurface {
  int n = 0;
  MixedSeries phi;

  Hypersurface() = default;
  explicit Hypersurface(MixedSeries p) : n(p.n()), phi(std::move(p)) {}
  int trunc() const { return phi.trunc(); }
};

inline images<holo_tag> map_images(const FormalMap& m) {
  images<holo_tag> im;
  im.z = m.f;
  im.last = {m.g};
  return im;
}

/// a o b
inline FormalMap compose(const FormalMap& a, const FormalMap& b) {
  if (a.n() != b.n()) throw series_error("compose: mismatched dimensions");
  auto im = map_images(b);
  FormalMap r;
  for (auto& c : a.f) r.f.push_back(substitute(c, im));
  r.g = substitute(a.g, im);
  return r;
}

/// Weighted linear part: z -> A z, w -> c w + q(z).
struct linear_part {
  cmat A;
  cplx c;
  HoloSeries q;
};

inline linear_part weighted_linear(const FormalMap& m) {
  int n = m.n();
  linear_part L{cmat::Zero(n, n), 0.0, m.g.weighted_part(2)};
  for (int i = 0; i < n; ++i) {
    if (std::abs(m.f[i].constant_term()) > tol::zero)
      throw series_error("map does not fix the origin");
    for (int j = 0; j < n; ++j) {
      exps e;
      e.a[j] = 1;
      L.A(i, j) = m.f[i].coeff(e);
    }
  }
  if (m.g.order() >= 0 && m.g.order() < 2) throw series_error("map: w component has terms below weight two");
  exps e;
  e.m = 1;
  L.c = m.g.coeff(e);
  L.q.set(e, 0.0);
  return L;
}

/// Formal inverse by fixed point on the weighted linear part.
inline FormalMap inverse(const FormalMap& m) {
  int n = m.n(), T = m.trunc();
  linear_part L = weighted_linear(m);
  if (rank(L.A) < n || std::abs(L.c) <= tol::zero) throw series_error("inverse: linear part is not invertible");
  cmat Ainv = L.A.inverse();
  FormalMap lin;
  for (int i = 0; i < n; ++i) {
    HoloSeries s(n, T);
    for (int j = 0; j < n; ++j) {
      exps e;
      e.a[j] = 1;
      s.add(e, Ainv(i, j));
    }
    lin.f.push_back(s);
  }
  {
    images<holo_tag> im;
    im.z = lin.f;
    im.last = {HoloSeries(n, T)};
    HoloSeries qz = substitute(L.q.with_trunc(std::min(T, L.q.trunc())), im);
    lin.g = (1.0 / L.c) * (HoloSeries::last(n, T) - qz);
  }
  FormalMap nl = m;
  for (int i = 0; i < n; ++i) {
    HoloSeries s(n, T);
    for (int j = 0; j < n; ++j) {
      exps e;
      e.a[j] = 1;
      s.add(e, L.A(i, j));
    }
    nl.f[i] -= s;
  }
  nl.g -= L.c * HoloSeries::last(n, T) + L.q;
  // Each pass fixes one more weighted degree; the w component runs one weight ahead, so T gets a second pass.
  FormalMap x = lin.with_trunc(1);
  for (int step = 2; step <= T + 1; ++step) {
    int t = std::min(step, T);
    FormalMap xt = x;
    for (auto& c : xt.f) c = c.as_exact(t);
    xt.g = x.g.as_exact(t);
    FormalMap rhs = compose(nl.with_trunc(t), xt);
    FormalMap id = FormalMap::identity(n, t);
    for (int i = 0; i < n; ++i) rhs.f[i] = id.f[i] - rhs.f[i];
    rhs.g = id.g - rhs.g;
    x = compose(lin.with_trunc(t), rhs);
  }
  if (T < 2) x = lin.with_trunc(T);
  return x;
}

/// rho = (wbar - w)/(2i) + phi(z, zbar, (w + wbar)/2) in n+1 variables, w of weight two.
inline weight_vec graph_weights(int n) {
  weight_vec w = unit_weights();
  w[n] = 2;
  return w;
}

inline BiholoSeries holo_to_biholo(const HoloSeries& h) {
  int n = h.n();
  BiholoSeries r(n + 1, h.trunc(), graph_weights(n));
  for (auto& [k, c] : h.terms()) {
    exps e = h.exponents(k);
    exps x;
    x.a = e.a;
    x.a[n] = e.m;
    r.add(x, c);
  }
  return r;
}

inline BiholoSeries defining_function(const Hypersurface& M) {
  int n = M.n, T = M.trunc();
  weight_vec w = graph_weights(n);
  images<biholo_tag> im;
  for (int j = 0; j < n; ++j) {
    im.z.push_back(BiholoSeries::z(n + 1, T, j, w));
    im.zbar.push_back(BiholoSeries::zbar(n + 1, T, j, w));
  }
  BiholoSeries W = BiholoSeries::z(n + 1, T, n, w), Wb = BiholoSeries::zbar(n + 1, T, n, w);
  im.last = {0.5 * (W + Wb)};
  return cplx(0, -0.5) * (Wb - W) + substitute(M.phi, im);
}

/// Graph form of the real hypersurface rho = 0 (rho in (Z, Zbar) with Z_{n} = w).
inline Hypersurface graph_of(const BiholoSeries& rho, int n) {
  int T = rho.trunc();
  exps e;
  e.a[n] = 1;
  cplx alpha = rho.coeff(e);
  if (std::abs(alpha.imag()) <= tol::zero) throw series_error("graph_of: rho_w(0) must have nonzero imaginary part");
  // rho(z, zbar, s + ip, s - ip) = sum_m Q_m p^m with Q_m = sum_{j+k=m} i^j (-i)^k d_W^j d_Wbar^k rho / (j! k!) at W = Wbar = s.
  images<mixed_tag> at_s;
  for (int j = 0; j < n; ++j) {
    at_s.z.push_back(MixedSeries::z(n, T, j));
    at_s.zbar.push_back(MixedSeries::zbar(n, T, j));
  }
  at_s.z.push_back(MixedSeries::last(n, T));
  at_s.zbar.push_back(MixedSeries::last(n, T));
  int mmax = T / 2;
  std::vector<MixedSeries> Q(mmax + 1, MixedSeries(n, T));
  std::vector<BiholoSeries> dW{rho};
  for (int j = 1; j <= mmax; ++j) dW.push_back((1.0 / j) * differentiate(dW.back(), var{var::z, n}));
  for (int j = 0; j <= mmax; ++j) {
    BiholoSeries d = dW[j];
    for (int k = 0; j + k <= mmax; ++k) {
      if (k > 0) d = (1.0 / k) * differentiate(d, var{var::zbar, n});
      if (d.empty()) break;
      cplx f = std::pow(I, j) * std::pow(-I, k);
      MixedSeries sub = substitute(d, at_s);
      Q[j + k] += f * sub.as_exact(T);
    }
  }
  MixedSeries phi(n, std::min(T, 1));
  for (int t = 2; t <= T; ++t) {
    MixedSeries p = phi.as_exact(t);
    MixedSeries res = Q[mmax].with_trunc(t);
    for (int m = mmax - 1; m >= 0; --m) res = res * p + Q[m].with_trunc(t);
    phi = p + (1.0 / (2.0 * alpha.imag())) * res.weighted_part(t);
  }
  return Hypersurface(real_part(phi.as_exact(T)));
}

/// Image of M under the biholomorphism T (new coordinates = T(old)).
inline Hypersurface apply_map(const Hypersurface& M, const FormalMap& T) {
  if (T.n() != M.n) throw series_error("apply_map: mismatched dimensions");
  int n = M.n;
  int t = std::min(M.trunc(), T.trunc());
  FormalMap Ti = inverse(T.with_trunc(t));
  MixedSeries phi = M.trunc() > t ? M.phi.with_trunc(t) : M.phi;
  images<biholo_tag> im;
  for (int j = 0; j < n; ++j) {
    BiholoSeries b = holo_to_biholo(Ti.f[j]);
    im.z.push_back(b);
    im.zbar.push_back(conj(b));
  }
  BiholoSeries G = holo_to_biholo(Ti.g), Gb = conj(G);
  im.last = {0.5 * (G + Gb)};
  BiholoSeries rho = cplx(0, -0.5) * (Gb - G) + substitute(phi, im);
  return graph_of(rho, n);
}

/// Q(z, zbar, wbar) with w = Q equivalent to Im w = phi(z, zbar, Re w).
inline WbarSeries graph_to_complex(const MixedSeries& phi) {
  if (!is_real(phi)) throw series_error("graph_to_complex: phi must be real");
  int n = phi.n(), T = phi.trunc();
  exps lin;
  lin.m = 1;
  if (std::abs(phi.coeff(lin)) > tol::zero) throw series_error("graph_to_complex: phi has a linear Re w term");
  WbarSeries Q(n, std::min(T, 1));
  for (int t = 2; t <= T; ++t) {
    images<wbar_tag> im;
    for (int j = 0; j < n; ++j) {
      im.z.push_back(WbarSeries::z(n, t, j));
      im.zbar.push_back(WbarSeries::zbar(n, t, j));
    }
    WbarSeries wb = WbarSeries::last(n, t);
    im.last = {0.5 * (Q.as_exact(t) + wb)};
    Q = wb + cplx(0, 2) * substitute(phi.with_trunc(t), im);
  }
  if (T < 2) {
    images<wbar_tag> im;
    for (int j = 0; j < n; ++j) {
      im.z.push_back(WbarSeries::z(n, T, j));
      im.zbar.push_back(WbarSeries::zbar(n, T, j));
    }
    im.last = {WbarSeries(n, T)};
    Q = cplx(0, 2) * substitute(phi, im);
  }
  return Q;
}

inline MixedSeries complex_to_graph(const WbarSeries& Q) {
  int n = Q.n(), T = Q.trunc();
  MixedSeries phi(n, std::min(T, 1));
  for (int t = 2; t <= T; ++t) {
    images<mixed_tag> im;
    for (int j = 0; j < n; ++j) {
      im.z.push_back(MixedSeries::z(n, t, j));
      im.zbar.push_back(MixedSeries::zbar(n, t, j));
    }
    MixedSeries p = phi.as_exact(t), s = MixedSeries::last(n, t);
    im.last = {s - I * p};
    MixedSeries g = substitute(Q.with_trunc(t), im) - s - I * p;
    phi = p + cplx(0, -0.5) * g.weighted_part(t);
  }
  return real_part(phi.as_exact(T));
}

}  // namespace crnf
