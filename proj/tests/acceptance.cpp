#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "helpers.hpp"

using namespace crnf;
using crnf::testing::rng;

namespace {

struct outcome {
  bool ok = true;
  std::string detail;

  void check(bool cond, const std::string& what) {
    if (!cond && ok) detail = what;
    ok = ok && cond;
  }
};

rvec vec(std::initializer_list<double> xs) {
  rvec v(xs.size());
  int j = 0;
  for (double x : xs) v(j++) = x;
  return v;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

// 1
outcome takagi_suite() {
  outcome o;
  rng r(1001);
  for (int t = 0; t < 500; ++t) {
    int m = r.integer(1, 6);
    cmat E = crnf::testing::random_symmetric(r, m);
    auto tk = takagi(E);
    double res = (tk.U * E * tk.U.transpose() - D_lambda(tk.lambda)).norm();
    double uni = (tk.U.adjoint() * tk.U - cmat::Identity(m, m)).norm();
    cmat P = E * E.conjugate();
    P = cmat(0.5 * (P + P.adjoint()));
    Eigen::SelfAdjointEigenSolver<cmat> es(P);
    Eigen::JacobiSVD<cmat> sv(E);
    double sc = 1 + E.norm(), dl = 0;
    for (int j = 0; j < m; ++j) {
      dl = std::max(dl, std::abs(tk.lambda(j) * tk.lambda(j) - es.eigenvalues()(m - 1 - j)) / sc);
      dl = std::max(dl, std::abs(tk.lambda(j) - sv.singularValues()(j)));
    }
    o.check(res < 1e-9 * (1 + E.norm()), "residual " + fmt(res) + " at case " + std::to_string(t));
    o.check(uni < 1e-10, "unitarity " + fmt(uni) + " at case " + std::to_string(t));
    o.check(dl < 1e-9 * sc, "lambda mismatch " + fmt(dl) + " at case " + std::to_string(t));
  }
  return o;
}

// 2
outcome trichotomy() {
  outcome o;
  for (int n : {2, 3, 4}) {
    int m = n - 1;
    std::vector<rvec> pats{rvec::Zero(m)};
    rvec one = rvec::Zero(m);
    one(0) = 1.0;
    pats.push_back(one);
    if (m >= 2) pats.push_back(rvec::LinSpaced(m, 1.0, 0.25));
    for (auto& l : pats) {
      auto c3 = classify_semidefinite(semidef_target(3, l));
      o.check(c3.kase == 3 && c3.lambda == l, "case iii constructed input, n=" + std::to_string(n));
      auto c2 = classify_semidefinite(semidef_target(2, l));
      o.check(c2.kase == 2 && (c2.lambda - l).cwiseAbs().maxCoeff() <= 1e-12, "case ii constructed input");
      rvec li = l;
      li(m - 1) = 0.0;
      if (li.cwiseAbs().maxCoeff() > 0 && li(0) != 1.0) continue;
      auto c1 = classify_semidefinite(semidef_target(1, li));
      o.check(c1.kase == 1 && (c1.lambda - li).cwiseAbs().maxCoeff() <= 1e-12, "case i constructed input");
    }
  }
  rng r(1002);
  auto random_H = [&](int t) {
    int n = 2 + t % 3;
    cmat H = crnf::testing::random_symmetric(r, n);
    if (t % 3 == 1) H(n - 1, n - 1) = 0.0;
    if (t % 3 == 2) {
      H.col(n - 1).setZero();
      H.row(n - 1).setZero();
    }
    return H;
  };
  for (int t = 0; t < 200; ++t) {
    cmat H = random_H(t);
    auto c = classify_semidefinite(H);
    o.check(crnf::testing::count_forms(apply_basis_change(H, c.B, c.a)) == 1, "exclusivity at instance " + std::to_string(t));
  }
  for (int t = 0; t < 60; ++t) {
    cmat H = random_H(t);
    auto c = classify_semidefinite(H);
    for (int k = 0; k < 3; ++k) {
      auto c2 = classify_semidefinite(crnf::testing::random_frame_change(r, H));
      double d = (c2.lambda - c.lambda).cwiseAbs().maxCoeff();
      o.check(c2.kase == c.kase && d < 1e-7, "lambda not invariant (" + fmt(d) + ")");
    }
  }
  return o;
}

// 3
outcome tensor_pipeline() {
  outcome o;
  auto M = crnf::testing::model(3, vec({1.0, 0.5}));
  cmat g = as_matrix(levi_form(M)), gt = cmat::Zero(3, 3);
  gt(0, 0) = gt(1, 1) = 1.0;
  double dg = (g - gt).cwiseAbs().maxCoeff();
  o.check(dg < 1e-9, "Levi form deviation " + fmt(dg));
  auto h = third_tensor(M);
  o.check(!h.trivial && h.q == 1, "third tensor missing");
  if (!o.ok) return o;
  cmat H(3, 3), Ht = cmat::Zero(3, 3);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) H(a, b) = h.at({a, b}, 0);
  Ht(0, 0) = 1.0, Ht(1, 1) = 0.5, Ht(2, 2) = 1.0;
  double dh = (H - Ht).cwiseAbs().maxCoeff();
  o.check(dh < 1e-9, "h-matrix deviation " + fmt(dh));
  o.check(h.symmetry_defect() < 1e-9, "third tensor symmetry defect " + fmt(h.symmetry_defect()));
  auto c = cubic_form(M);
  double dc = 0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) dc = std::max(dc, std::abs(c.q.at({a, b}, 0) - cplx(0, 0.5) * H(a, b)));
  o.check(dc < 1e-8, "cubic form deviation " + fmt(dc));
  return o;
}

// 4
outcome nondegeneracy_suite() {
  outcome o;
  o.check(nondegeneracy(crnf::testing::sphere(2), 2) == std::optional<int>(1), "sphere is not 1-nondegenerate");
  o.check(nondegeneracy(crnf::testing::model(2, rvec::Zero(1)), 3) == std::optional<int>(2), "model is not 2-nondegenerate");
  o.check(nondegeneracy(crnf::testing::flat(2, 13), 5) == std::nullopt, "flat hyperplane reported finitely nondegenerate");
  rng r(1004);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    int d = 1 + t % 2, N = d + 1 + t % 3, T = 6;
    auto M = crnf::testing::random_generic(r, N, d, T);
    int kmax = std::min(3, M.trunc() - 2);
    auto A = E_spaces(M, kmax);
    auto B = crnf::testing::E_spaces_other_basis(r, M, kmax);
    for (int j = 0; j <= kmax; ++j) {
      o.check(A[j].dim() == B[j].dim(), "E_j dimension mismatch at input " + std::to_string(t));
      if (A[j].dim() == B[j].dim()) worst = std::max(worst, crnf::testing::span_angle(A[j].basis, B[j].basis));
    }
  }
  o.check(worst < 1e-8, "principal angle " + fmt(worst));
  return o;
}

// 5
outcome full_normal_form(const nf_model& md, std::uint64_t seed, double& seconds) {
  auto t0 = std::chrono::steady_clock::now();
  outcome o;
  int T = 8, n = md.n;
  rng r(seed);
  Hypersurface M(md.phi(T) + crnf::testing::random_real(r, n, 4, T, T, 0.3));
  NormalizationP I = NormalizationP::identity(n);
  auto res = normal_form(M, I, md, T);
  o.check(is_in_normal_space(res.N, md, 1e-9), "(a) output not in the normal space");
  o.check(check_G0(res.T, 1e-9), "(b) T violates the G0 constraints");
  auto again = normal_form(res.M_out, I, md, T);
  FormalMap id = FormalMap::identity(n, T);
  double dT = (again.T.g - id.g).max_abs();
  for (int j = 0; j < n; ++j) dT = std::max(dT, (again.T.f[j] - id.f[j]).max_abs());
  o.check(dT < 1e-9, "(c) renormalization moved by " + fmt(dT));
  double worst = 0;
  for (int s = 0; s < 20; ++s) {
    auto am = random_allowed_map(md.r, md.R, seed * 100 + s, 0.5, T);
    Hypersurface Mp = apply_map(M, am.map);
    NormalizationP Pp = transported_normalization(res, am.map, md);
    auto b = normal_form(Mp, Pp, md, T);
    worst = std::max(worst, (b.N - res.N).max_abs());
  }
  o.check(worst < 1e-6, "(d) invariance deviation " + fmt(worst));
  for (auto& d : res.per_degree)
    o.check(d.sigma_min > 1e-8 * d.sigma_max, "(e) ill-conditioned system at degree " + std::to_string(d.nu));
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.check(seconds < 60, "instance took " + fmt(seconds) + " s");
  return o;
}

outcome full_normal_form_suite() {
  outcome o;
  std::vector<nf_model> models{nf_model{2, 1, D_lambda(vec({0.0}))}, nf_model{2, 1, D_lambda(vec({1.0}))},
                               nf_model{3, 2, D_lambda(vec({0.0, 0.0}))}, nf_model{3, 2, D_lambda(vec({1.0, 0.0}))},
                               nf_model{3, 2, D_lambda(vec({1.0, 0.5}))}};
  std::uint64_t seed = 1005;
  for (auto& md : models) {
    double sec = 0;
    auto r = full_normal_form(md, seed++, sec);
    o.check(r.ok, "n=" + std::to_string(md.n) + ": " + r.detail);
  }
  return o;
}

// 6
outcome dimension_bounds() {
  outcome o;
  struct row {
    int n;
    rvec l;
    long v;
  };
  std::vector<row> table{{2, vec({0}), 19},          {2, vec({1}), 17},           {3, vec({0, 0}), 65},
                         {3, vec({1, 0}), 61},       {3, vec({1, 1}), 61},        {3, vec({1, .5}), 60},
                         {4, vec({0, 0, 0}), 165},   {4, vec({1, 0, 0}), 159},    {4, vec({1, 1, 0}), 157},
                         {4, vec({1, 1, 1}), 158},   {4, vec({1, .5, 0}), 156},   {4, vec({1, .5, .5}), 156},
                         {4, vec({1, .5, .25}), 155}, {4, vec({1, 1, .5}), 156}};
  for (auto& t : table) {
    long got = aut_dim_bound(t.n, t.l);
    o.check(got == t.v, "n=" + std::to_string(t.n) + ": got " + std::to_string(got) + ", expected " + std::to_string(t.v));
  }
  return o;
}

// 7
outcome fischer_suite() {
  outcome o;
  rng r(1007);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    int n = r.integer(1, 3), T = 8;
    int a = r.integer(0, 2), b = r.integer(0, 2 - a);
    if (a + b == 0) a = 1;
    int k = a + r.integer(0, 6 - a - b), l = b + r.integer(0, 6 - k - b);
    int m = r.integer(0, (8 - k - l) / 2);
    MixedSeries p = crnf::testing::random_type(r, n, a, b, 0, T);
    MixedSeries F = crnf::testing::random_type(r, n, k, l, m, T);
    auto d = fischer_decompose(F, p);
    double sc = 1 + F.max_abs();
    auto e = fischer_decompose(p * d.G + d.H, p);
    worst = std::max({worst, (p * d.G + d.H - F).max_abs() / sc, conj_diff(p, d.H).max_abs() / sc,
                      (e.G - d.G).max_abs() / sc, (e.H - d.H).max_abs() / sc});
  }
  for (int t = 0; t < 100; ++t) {
    int n = r.integer(2, 3), T = 9;
    cmat R = crnf::testing::random_symmetric(r, n - 1);
    MixedSeries p = herm_form(n, n - 1, T), q = p_R(n, R, T);
    int k = r.integer(2, 4), l = r.integer(1, 3), m = r.integer(0, 1);
    MixedSeries F = crnf::testing::random_type(r, n, k, l, m, T);
    auto d = fischer_decompose2(F, p, q);
    double sc = 1 + F.max_abs();
    MixedSeries pH = conj_diff(p, d.H);
    auto e = fischer_decompose2(p * d.G1 + q * d.G2 + d.H, p, q);
    worst = std::max({worst, (p * d.G1 + q * d.G2 + d.H - F).max_abs() / sc, conj_diff(q, d.H).max_abs() / sc,
                      (pH - S_apply(p, q, d.G2)).max_abs() / sc, (e.G1 - d.G1).max_abs() / sc,
                      (e.G2 - d.G2).max_abs() / sc, (e.H - d.H).max_abs() / sc});
  }
  o.check(worst < 1e-9, "worst residual " + fmt(worst));
  return o;
}

}  // namespace

int main() {
  struct criterion {
    int id;
    const char* name;
    std::function<outcome()> run;
    double limit;  // seconds, 0 for none
  };
  std::vector<criterion> all{{1, "Takagi suite", takagi_suite, 5},
                             {2, "semidefinite trichotomy", trichotomy, 10},
                             {3, "tensor pipeline", tensor_pipeline, 0},
                             {4, "nondegeneracy", nondegeneracy_suite, 0},
                             {5, "full normal form", full_normal_form_suite, 0},
                             {6, "dimension bounds", dimension_bounds, 0},
                             {7, "Fischer suite", fischer_suite, 0}};
  int failed = 0;
  for (auto& c : all) {
    auto t0 = std::chrono::steady_clock::now();
    outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit > 0) o.check(sec < c.limit, "runtime " + fmt(sec) + " s over the " + fmt(c.limit) + " s limit");
    std::printf("%s criterion %d (%s) %.2fs%s%s\n", o.ok ? "PASS" : "FAIL", c.id, c.name, sec, o.ok ? "" : ": ",
                o.detail.c_str());
    failed += !o.ok;
  }
  return failed ? 1 : 0;
}
