#pragma once

#include "linalg.hpp"
#include "series.hpp"

namespace crnf {

/// <z', zbar'> = sum of eps_j |z_j|^2 over the first n-1 variables, eps = +1 for j < r.
inline MixedSeries herm_form(int n, int r, int trunc) {
  MixedSeries h(n, trunc);
  for (int j = 0; j + 1 < n; ++j) {
    exps e;
    e.a[j] = e.b[j] = 1;
    h.add(e, j < r ? 1.0 : -1.0);
  }
  return h;
}

/// p_R(z) = z'^t R z' + (z^n)^2, holomorphic.
inline MixedSeries p_R(int n, const cmat& R, int trunc) {
  if (R.rows() != n - 1 || R.cols() != n - 1) throw series_error("p_R: R must be (n-1)x(n-1)");
  MixedSeries p(n, trunc);
  for (int i = 0; i + 1 < n; ++i)
    for (int j = 0; j + 1 < n; ++j) {
      exps e;
      e.a[i] += 1;
      e.a[j] += 1;
      p.add(e, R(i, j));
    }
  exps e;
  e.a[n - 1] = 2;
  p.add(e, 1.0);
  return p;
}

/// <z', zbar'> + 2 Re(zbar^n p_R(z)).
inline MixedSeries model_phi(int n, int r, const cmat& R, int trunc) {
  MixedSeries zb = MixedSeries::zbar(n, trunc, n - 1);
  MixedSeries t = zb * p_R(n, R, trunc);
  return herm_form(n, r, trunc) + t + conj(t);
}

inline MixedSeries sphere_phi(int n, int trunc) {
  MixedSeries h(n, trunc);
  for (int j = 0; j < n; ++j) {
    exps e;
    e.a[j] = e.b[j] = 1;
    h.add(e, 1.0);
  }
  return h;
}

}  // namespace crnf
