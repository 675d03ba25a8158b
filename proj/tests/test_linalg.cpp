#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace crnf;
using crnf::testing::rng;

namespace {

cmat diag2(cplx a, cplx b) {
  cmat m = cmat::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

cmat swap2() {
  cmat m = cmat::Zero(2, 2);
  m(0, 1) = m(1, 0) = 1.0;
  return m;
}

/// Descending eigenvalues of E conj(E), by the complex Hermitian solver.
rvec takagi_oracle_squares(const cmat& E) {
  cmat P = E * E.conjugate();
  P = cmat(0.5 * (P + P.adjoint()));
  Eigen::SelfAdjointEigenSolver<cmat> es(P);
  return es.eigenvalues().reverse();
}

}  // namespace

TEST(HermitianEig, Examples) {
  auto a = hermitian_eig(cmat::Identity(2, 2));
  EXPECT_NEAR(a.values(0), 1, 1e-14);
  EXPECT_NEAR(a.values(1), 1, 1e-14);
  auto b = hermitian_eig(diag2(-1, 3));
  EXPECT_NEAR(b.values(0), 3, 1e-14);
  EXPECT_NEAR(b.values(1), -1, 1e-14);
  auto c = hermitian_eig(swap2());
  EXPECT_NEAR(c.values(0), 1, 1e-14);
  EXPECT_NEAR(c.values(1), -1, 1e-14);
}

TEST(HermitianEig, RejectsNonHermitian) {
  cmat a = cmat::Zero(2, 2);
  a(0, 1) = 1.0;
  EXPECT_THROW(hermitian_eig(a), linalg_error);
}

TEST(HermitianEig, ResidualAndClosedForm) {
  rng r(11);
  for (int t = 0; t < 50; ++t) {
    int m = r.integer(1, 3);
    cmat a = crnf::testing::random_matrix(r, m, m);
    a = cmat(0.5 * (a + a.adjoint()));
    auto e = hermitian_eig(a);
    cmat rec = e.vectors * e.values.cast<cplx>().asDiagonal() * e.vectors.adjoint();
    EXPECT_LE((rec - a).norm(), 1e-10 * a.norm());
    for (int j = 0; j + 1 < m; ++j) EXPECT_GE(e.values(j), e.values(j + 1));
    // roots of the characteristic polynomial
    std::vector<double> roots;
    if (m == 1) roots = {a(0, 0).real()};
    if (m == 2) {
      double tr = a.trace().real(), det = a.determinant().real();
      double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
      roots = {tr / 2 + disc, tr / 2 - disc};
    }
    if (m == 3) {
      // trigonometric solution of the depressed cubic
      double q = a.trace().real() / 3;
      cmat B = a - q * cmat::Identity(3, 3);
      double p = std::sqrt((B * B).trace().real() / 6);
      double rr = std::clamp((B / p).determinant().real() / 2, -1.0, 1.0);
      double phi = std::acos(rr) / 3;
      double pi = 3.14159265358979323846;
      roots = {q + 2 * p * std::cos(phi), q + 2 * p * std::cos(phi + 2 * pi / 3), q + 2 * p * std::cos(phi + 4 * pi / 3)};
      std::sort(roots.rbegin(), roots.rend());
    }
    for (int j = 0; j < m; ++j) EXPECT_NEAR(e.values(j), roots[j], 1e-9);
  }
}

TEST(Takagi, Examples) {
  auto a = takagi(diag2(2, 1));
  EXPECT_NEAR(a.lambda(0), 2, 1e-14);
  EXPECT_NEAR(a.lambda(1), 1, 1e-14);
  auto b = takagi(swap2());
  EXPECT_NEAR(b.lambda(0), 1, 1e-14);
  EXPECT_NEAR(b.lambda(1), 1, 1e-14);
  EXPECT_LE((b.U * swap2() * b.U.transpose() - cmat::Identity(2, 2)).norm(), 1e-12);
  auto c = takagi(cmat::Zero(3, 3));
  EXPECT_EQ(c.lambda.norm(), 0.0);
  EXPECT_LE((c.U.adjoint() * c.U - cmat::Identity(3, 3)).norm(), 1e-14);
}

TEST(Takagi, RejectsNonSymmetric) {
  cmat a = cmat::Zero(2, 2);
  a(0, 1) = 1.0;
  EXPECT_THROW(takagi(a), linalg_error);
}

TEST(Takagi, RandomSuite) {
  rng r(12);
  for (int t = 0; t < 500; ++t) {
    int m = r.integer(1, 6);
    cmat E = crnf::testing::random_symmetric(r, m);
    if (t % 5 == 0 && m > 1) {
      // rank deficient
      cmat X = crnf::testing::random_matrix(r, m, m - 1);
      E = X * X.transpose();
    }
    auto tk = takagi(E);
    EXPECT_LE((tk.U * E * tk.U.transpose() - D_lambda(tk.lambda)).norm(), 1e-9 * (1 + E.norm()));
    EXPECT_LE((tk.U.adjoint() * tk.U - cmat::Identity(m, m)).norm(), 1e-10);
    // squares against eig(E conj E); sqrt of a rounding-level eigenvalue is not accurate to 1e-9
    rvec o = takagi_oracle_squares(E);
    EXPECT_LE((tk.lambda.cwiseAbs2() - o).cwiseAbs().maxCoeff(), 1e-9 * (1 + E.norm()) * (1 + E.norm()));
    // E conj(E) = E E^*, so the Takagi values are the singular values of E
    Eigen::JacobiSVD<cmat> sv(E);
    EXPECT_LE((tk.lambda - sv.singularValues()).cwiseAbs().maxCoeff(), 1e-9 * (1 + E.norm()));
    for (int j = 0; j + 1 < m; ++j) EXPECT_GE(tk.lambda(j), tk.lambda(j + 1));
  }
}

TEST(Takagi, ScaleEquivariant) {
  rng r(13);
  for (int t = 0; t < 50; ++t) {
    int m = r.integer(1, 6);
    cmat E = crnf::testing::random_symmetric(r, m);
    double s = r.uniform(0.1, 10);
    auto a = takagi(E), b = takagi(s * E);
    EXPECT_LE((b.lambda - s * a.lambda).cwiseAbs().maxCoeff(), 1e-9 * (1 + s));
  }
}

TEST(TakagiStabilizer, Examples) {
  rvec l(3);
  l << 2, 1, 0.5;
  EXPECT_TRUE(takagi_stabilizer_check(cmat::Identity(3, 3), l));
  rvec one(2);
  one << 1, 1;
  double th = 0.7;
  cmat rot(2, 2);
  rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  EXPECT_TRUE(takagi_stabilizer_check(rot, one));
  rvec two(2);
  two << 2, 1;
  EXPECT_FALSE(takagi_stabilizer_check(swap2(), two));
}

TEST(TakagiStabilizer, BlockStructure) {
  rng r(14);
  rvec l(4);
  l << 1, 1, 0, 0;
  cmat U = cmat::Zero(4, 4);
  U.topLeftCorner(2, 2) = crnf::testing::random_orthogonal(r, 2).cast<cplx>();
  U.bottomRightCorner(2, 2) = crnf::testing::random_unitary(r, 2);
  EXPECT_TRUE(takagi_stabilizer_check(U, l));
  // a complex unitary block on a nonzero repeated value is not allowed
  cmat V = U;
  V.topLeftCorner(2, 2) = crnf::testing::random_unitary(r, 2);
  EXPECT_FALSE(takagi_stabilizer_check(V, l));
  // diagonal signs are real orthogonal
  cmat S = cmat::Identity(4, 4);
  S(0, 0) = -1.0;
  EXPECT_TRUE(takagi_stabilizer_check(S, l));
  // non-unitary
  EXPECT_FALSE(takagi_stabilizer_check(2.0 * cmat::Identity(4, 4), l));
}

TEST(HatU, Examples) {
  EXPECT_EQ(is_hatU(cmat::Identity(3, 3), 2, 1), std::optional<int>(1));
  EXPECT_EQ(is_hatU(swap2(), 1, 1), std::optional<int>(-1));
  EXPECT_EQ(is_hatU(2.0 * cmat::Identity(2, 2), 2, 0), std::nullopt);
  rng r(15);
  EXPECT_EQ(is_hatU(crnf::testing::random_unitary(r, 3), 3, 0), std::optional<int>(1));
  cmat boost(2, 2);
  double t = 0.4;
  boost << std::cosh(t), std::sinh(t), std::sinh(t), std::cosh(t);
  EXPECT_EQ(is_hatU(boost, 1, 1), std::optional<int>(1));
  EXPECT_EQ(is_hatU(boost, 2, 0), std::nullopt);
}

TEST(OR, Examples) {
  cmat R = diag2(1, 0);
  EXPECT_TRUE(is_OR(cmat::Identity(2, 2), R));
  rng r(16);
  EXPECT_TRUE(is_OR(crnf::testing::random_orthogonal(r, 3).cast<cplx>(), cmat::Identity(3, 3)));
  EXPECT_FALSE(is_OR(diag2(2, 1), R));
}

TEST(Rank, ScaleAware) {
  cmat a = cmat::Zero(3, 3);
  a(0, 0) = 1e6;
  a(1, 1) = 1e-5;
  EXPECT_EQ(rank(a), 1);
  a(1, 1) = 1e-2;
  EXPECT_EQ(rank(a), 2);
  EXPECT_EQ(null_space(a).cols(), 1);
}

TEST(PrincipalAngle, SmallAnglesResolved) {
  cmat a = cmat::Zero(3, 1), b = cmat::Zero(3, 1);
  a(0, 0) = 1.0;
  double th = 1e-10;
  b(0, 0) = std::cos(th);
  b(1, 0) = std::sin(th);
  EXPECT_NEAR(max_principal_angle(a, b), th, 1e-14);
  EXPECT_EQ(max_principal_angle(a, a), 0.0);
}
