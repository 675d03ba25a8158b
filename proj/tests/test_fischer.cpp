#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace crnf;
using crnf::testing::ex;
using crnf::testing::rng;

namespace {

MixedSeries herm(int n, int T) { return herm_form(n, n - 1, T); }

/// Least-squares distance of y from the image of S on the given basis (a direct oracle).
double image_residual(const MixedSeries& p, const MixedSeries& q, const MixedSeries& y, const std::vector<exps>& basis) {
  int n = y.n(), T = y.trunc();
  std::map<std::uint64_t, int> row;
  std::vector<MixedSeries> cols;
  for (auto& e : basis) {
    MixedSeries u(n, T);
    u.add(e, 1.0);
    cols.push_back(S_apply(p, q, u));
    for (auto& [k, c] : cols.back().terms()) row.emplace(k, int(row.size()));
  }
  for (auto& [k, c] : y.terms()) row.emplace(k, int(row.size()));
  cmat A = cmat::Zero(row.size(), cols.size());
  cvec b = cvec::Zero(row.size());
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (auto& [k, c] : cols[j].terms()) A(row.at(k), j) = c;
  for (auto& [k, c] : y.terms()) b(row.at(k)) = c;
  cvec x = A.completeOrthogonalDecomposition().solve(b);
  return (A * x - b).norm();
}

}  // namespace

TEST(Fischer, SquareOfHermitianMonomial) {
  int T = 4;
  MixedSeries p = MixedSeries::z(1, T, 0) * MixedSeries::zbar(1, T, 0);
  auto r = fischer_decompose(p * p, p);
  EXPECT_LE((r.G - p).max_abs(), 1e-12);
  EXPECT_LE(r.H.max_abs(), 1e-12);
}

TEST(Fischer, ExactMultiple) {
  rng r(21);
  int n = 3, T = 8;
  MixedSeries p = herm(n, T);
  MixedSeries G0 = crnf::testing::random_type(r, n, 2, 1, 1, T);
  auto d = fischer_decompose(p * G0, p);
  EXPECT_LE((d.G - G0).max_abs(), 1e-10);
  EXPECT_LE(d.H.max_abs(), 1e-10);
}

TEST(Fischer, AlreadyInKernel) {
  int n = 2, T = 6;
  MixedSeries p = MixedSeries::z(n, T, 0) * MixedSeries::zbar(n, T, 0);
  // z2^2 zbar2 zbar1 is annihilated by d^2/dz1 dzbar1
  MixedSeries F(n, T);
  F.add(ex({0, 2}, {1, 1}), 1.0);
  auto d = fischer_decompose(F, p);
  EXPECT_TRUE(d.G.empty());
  EXPECT_LE((d.H - F).max_abs(), 1e-14);
}

TEST(Fischer, TypeErrors) {
  int n = 2, T = 6;
  MixedSeries p = MixedSeries::z(n, T, 0) * MixedSeries::zbar(n, T, 0);
  MixedSeries F = MixedSeries::z(n, T, 0) * MixedSeries::z(n, T, 1);
  EXPECT_THROW(fischer_decompose(F, p), series_error);
  MixedSeries mixed = F + p;
  EXPECT_THROW(fischer_decompose(mixed, p), series_error);
}

TEST(Fischer, RandomPropertiesAndUniqueness) {
  rng r(22);
  for (int t = 0; t < 100; ++t) {
    int n = r.integer(1, 3), T = 8;
    int a = r.integer(0, 2), b = r.integer(0, 2 - a);
    if (a + b == 0) a = 1;
    int k = a + r.integer(0, 6 - a - b), l = b + r.integer(0, 6 - k - b);
    int m = r.integer(0, (8 - k - l) / 2);
    MixedSeries p = crnf::testing::random_type(r, n, a, b, 0, T);
    MixedSeries F = crnf::testing::random_type(r, n, k, l, m, T);
    auto d = fischer_decompose(F, p);
    double scale = 1 + F.max_abs();
    EXPECT_LE((p * d.G + d.H - F).max_abs(), 1e-9 * scale);
    EXPECT_LE(conj_diff(p, d.H).max_abs(), 1e-9 * scale);
    if (!d.G.empty()) EXPECT_EQ(single_type(d.G), std::make_pair(k - a, l - b));
    auto e = fischer_decompose(p * d.G + d.H, p);
    EXPECT_LE((e.G - d.G).max_abs(), 1e-9 * scale);
    EXPECT_LE((e.H - d.H).max_abs(), 1e-9 * scale);
  }
}

TEST(Fischer2, ZeroInput) {
  int n = 3, T = 8;
  MixedSeries p = herm(n, T);
  MixedSeries q = p_R(n, cmat::Identity(n - 1, n - 1), T);
  auto d = fischer_decompose2(MixedSeries(n, T), p, q);
  EXPECT_TRUE(d.G1.empty());
  EXPECT_TRUE(d.G2.empty());
  EXPECT_TRUE(d.H.empty());
}

TEST(Fischer2, ExactMultipleOfQ) {
  // G0 with pbar(q G0) = 0 is an exact multiple in the second slot only
  int n = 2, T = 8;
  MixedSeries p = herm(n, T);                        // |z1|^2
  MixedSeries q = p_R(n, cmat::Zero(1, 1), T);       // z2^2
  MixedSeries G0(n, T);
  G0.add(ex({0, 1}, {0, 2}), 1.0);                   // z2 zbar2^2, no z1 or zbar1
  auto d = fischer_decompose2(q * G0, p, q);
  EXPECT_LE(d.G1.max_abs(), 1e-12);
  EXPECT_LE((d.G2 - G0).max_abs(), 1e-12);
  EXPECT_LE(d.H.max_abs(), 1e-12);
}

TEST(Fischer2, RandomSideConditionsAndUniqueness) {
  rng r(23);
  for (int t = 0; t < 60; ++t) {
    int n = r.integer(2, 3), T = 9;
    cmat R = crnf::testing::random_symmetric(r, n - 1);
    MixedSeries p = herm(n, T), q = p_R(n, R, T);
    int k = r.integer(2, 4), l = r.integer(1, 3), m = r.integer(0, 1);
    MixedSeries F = crnf::testing::random_type(r, n, k, l, m, T);
    auto d = fischer_decompose2(F, p, q);
    double scale = 1 + F.max_abs();
    EXPECT_LE((p * d.G1 + q * d.G2 + d.H - F).max_abs(), 1e-9 * scale);
    EXPECT_LE(conj_diff(q, d.H).max_abs(), 1e-9 * scale);
    MixedSeries pH = conj_diff(p, d.H);
    EXPECT_LE((pH - S_apply(p, q, d.G2)).max_abs(), 1e-9 * scale);
    EXPECT_LE(image_residual(p, q, pH, type_basis(n, k - 2, l, m)), 1e-9 * scale);
    auto e = fischer_decompose2(p * d.G1 + q * d.G2 + d.H, p, q);
    EXPECT_LE((e.G1 - d.G1).max_abs(), 1e-9 * scale);
    EXPECT_LE((e.G2 - d.G2).max_abs(), 1e-9 * scale);
    EXPECT_LE((e.H - d.H).max_abs(), 1e-9 * scale);
  }
}

TEST(Fischer2, TypeThreeTwoWithModelForms) {
  rng r(24);
  int n = 3, T = 9;
  cmat R = cmat::Zero(2, 2);
  R(0, 0) = 1.0;
  R(1, 1) = 0.5;
  MixedSeries p = herm(n, T), q = p_R(n, R, T);
  MixedSeries F = crnf::testing::random_type(r, n, 3, 2, 0, T);
  auto d = fischer_decompose2(F, p, q);
  EXPECT_LE((p * d.G1 + q * d.G2 + d.H - F).max_abs(), 1e-9);
  EXPECT_LE(conj_diff(q, d.H).max_abs(), 1e-9);
  EXPECT_LE(image_residual(p, q, conj_diff(p, d.H), type_basis(n, 1, 2, 0)), 1e-9);
}
