#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

namespace crnf {

using cplx = std::complex<double>;
inline constexpr cplx I{0.0, 1.0};

namespace tol {
// Zero tests and rank decisions.
inline double zero = 1e-9;
// Coefficients below this modulus are dropped from storage.
inline double prune = 1e-14;
}  // namespace tol

inline constexpr int max_vars = 6;
inline constexpr int max_trunc = 15;

using weight_vec = std::array<int, max_vars>;

inline weight_vec unit_weights() {
  weight_vec w;
  w.fill(1);
  return w;
}

// Exponent record: z^a zbar^b t^m, where t is s, w or wbar depending on the kind.
struct exps {
  std::array<int, max_vars> a{};
  std::array<int, max_vars> b{};
  int m = 0;
  bool operator==(const exps&) const = default;
};

// Series kinds. The last slot carries weight two.
struct mixed_tag {
  static constexpr bool has_b = true, has_m = true;
  static constexpr const char* name = "mixed";
};
struct holo_tag {
  static constexpr bool has_b = false, has_m = true;
  static constexpr const char* name = "holo";
};
struct biholo_tag {
  static constexpr bool has_b = true, has_m = false;
  static constexpr const char* name = "biholo";
};
struct wbar_tag {
  static constexpr bool has_b = true, has_m = true;
  static constexpr const char* name = "wbar";
};

class series_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline int field_shift(int i) { return 52 - 4 * i; }

inline std::uint64_t pack(int n, const exps& e, int wdeg) {
  std::uint64_t k = std::uint64_t(wdeg) << 56;
  for (int j = 0; j < n; ++j) k |= std::uint64_t(e.a[j]) << field_shift(j);
  for (int j = 0; j < n; ++j) k |= std::uint64_t(e.b[j]) << field_shift(n + j);
  k |= std::uint64_t(e.m) << field_shift(2 * n);
  return k;
}

inline exps unpack(int n, std::uint64_t k) {
  exps e;
  for (int j = 0; j < n; ++j) e.a[j] = int((k >> field_shift(j)) & 15u);
  for (int j = 0; j < n; ++j) e.b[j] = int((k >> field_shift(n + j)) & 15u);
  e.m = int((k >> field_shift(2 * n)) & 15u);
  return e;
}

inline int key_wdeg(std::uint64_t k) { return int(k >> 56); }

inline int wdeg_of(int n, const weight_vec& w, const exps& e) {
  int d = 2 * e.m;
  for (int j = 0; j < n; ++j) d += w[j] * (e.a[j] + e.b[j]);
  return d;
}

// All monomials of a kind up to a weighted degree, with a product table.
struct space {
  int n = 0, trunc = 0;
  weight_vec w{};
  bool has_b = true, has_m = true;
  std::vector<std::uint64_t> keys;
  std::vector<int> deg;
  std::unordered_map<std::uint64_t, int> index;

  // Row i lists (j, k) with key_i + key_j = key_k.
  std::vector<std::size_t> row;
  std::vector<std::pair<int, int>> cols;
  std::once_flag table_once;

  void build_table() {
    std::call_once(table_once, [this] {
      int M = int(keys.size());
      row.assign(M + 1, 0);
      for (int i = 0; i < M; ++i) {
        int budget = trunc - deg[i];
        for (int j = 0; j < M && deg[j] <= budget; ++j) {
          auto it = index.find(keys[i] + keys[j]);
          cols.emplace_back(j, it->second);
        }
        row[i + 1] = cols.size();
      }
    });
  }

  std::size_t table_estimate() const {
    std::vector<std::size_t> per(trunc + 1, 0);
    for (int d : deg) ++per[d];
    std::vector<std::size_t> cum(trunc + 2, 0);
    for (int d = 0; d <= trunc; ++d) cum[d + 1] = cum[d] + per[d];
    std::size_t t = 0;
    for (int d = 0; d <= trunc; ++d) t += per[d] * cum[trunc - d + 1];
    return t;
  }
};

inline void enumerate(space& sp) {
  int n = sp.n;
  int nf = 2 * n + 1;
  std::vector<int> wt(nf);
  for (int j = 0; j < n; ++j) wt[j] = wt[n + j] = sp.w[j];
  wt[2 * n] = 2;
  std::vector<bool> use(nf, true);
  if (!sp.has_b)
    for (int j = 0; j < n; ++j) use[n + j] = false;
  if (!sp.has_m) use[2 * n] = false;
  exps e;
  std::vector<int> cur(nf, 0);
  auto rec = [&](auto&& self, int f, int d) -> void {
    if (f == nf) {
      for (int j = 0; j < n; ++j) e.a[j] = cur[j], e.b[j] = cur[n + j];
      e.m = cur[2 * n];
      sp.keys.push_back(pack(n, e, d));
      return;
    }
    if (!use[f]) {
      cur[f] = 0;
      self(self, f + 1, d);
      return;
    }
    for (int x = 0; d + x * wt[f] <= sp.trunc; ++x) {
      cur[f] = x;
      self(self, f + 1, d + x * wt[f]);
    }
    cur[f] = 0;
  };
  rec(rec, 0, 0);
  std::sort(sp.keys.begin(), sp.keys.end());
  sp.deg.resize(sp.keys.size());
  for (std::size_t i = 0; i < sp.keys.size(); ++i) {
    sp.deg[i] = key_wdeg(sp.keys[i]);
    sp.index.emplace(sp.keys[i], int(i));
  }
}

inline space& get_space(int n, const weight_vec& w, int trunc, bool has_b, bool has_m) {
  static std::mutex mu;
  static std::map<std::tuple<int, weight_vec, int, bool, bool>, std::unique_ptr<space>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(n, w, trunc, has_b, has_m);
  auto it = cache.find(key);
  if (it != cache.end()) return *it->second;
  auto sp = std::make_unique<space>();
  sp->n = n;
  sp->trunc = trunc;
  sp->w = w;
  sp->has_b = has_b;
  sp->has_m = has_m;
  enumerate(*sp);
  auto& ref = *sp;
  cache.emplace(key, std::move(sp));
  return ref;
}

}  // namespace detail

// Truncated series over z (n variables), optionally zbar, and a last slot of weight two.
template <class Tag>
class basic_series {
 public:
  using tag = Tag;
  using map_type = std::map<std::uint64_t, cplx>;
  static constexpr bool has_b = Tag::has_b;
  static constexpr bool has_m = Tag::has_m;

  basic_series() = default;

  basic_series(int n, int trunc, weight_vec w = unit_weights()) : n_(n), trunc_(trunc), w_(w) {
    if (n < 0 || n > max_vars) throw series_error("series: number of variables must be in 0..6");
    if (trunc < 0 || trunc > max_trunc) throw series_error("series: trunc must be in 0..15");
    for (int j = n; j < max_vars; ++j) w_[j] = 1;
    for (int j = 0; j < n; ++j)
      if (w_[j] < 1) throw series_error("series: weights must be positive");
  }

  static basic_series constant(int n, int trunc, cplx c, weight_vec w = unit_weights()) {
    basic_series s(n, trunc, w);
    s.add(exps{}, c);
    return s;
  }

  // z_k
  static basic_series z(int n, int trunc, int k, weight_vec w = unit_weights()) {
    basic_series s(n, trunc, w);
    exps e;
    e.a[k] = 1;
    s.add(e, 1.0);
    return s;
  }

  // zbar_k
  static basic_series zbar(int n, int trunc, int k, weight_vec w = unit_weights()) {
    static_assert(has_b, "kind has no conjugate variables");
    basic_series s(n, trunc, w);
    exps e;
    e.b[k] = 1;
    s.add(e, 1.0);
    return s;
  }

  // s, w or wbar
  static basic_series last(int n, int trunc, weight_vec w = unit_weights()) {
    static_assert(has_m, "kind has no last slot");
    basic_series s(n, trunc, w);
    exps e;
    e.m = 1;
    s.add(e, 1.0);
    return s;
  }

  int n() const { return n_; }
  int trunc() const { return trunc_; }
  const weight_vec& weights() const { return w_; }
  const map_type& terms() const { return c_; }
  std::size_t size() const { return c_.size(); }
  bool empty() const { return c_.empty(); }

  exps exponents(std::uint64_t key) const { return detail::unpack(n_, key); }
  static int degree_of_key(std::uint64_t key) { return detail::key_wdeg(key); }
  int wdeg(const exps& e) const { return detail::wdeg_of(n_, w_, e); }
  std::uint64_t key(const exps& e) const { return detail::pack(n_, e, wdeg(e)); }

  cplx coeff(const exps& e) const {
    auto it = c_.find(key(e));
    return it == c_.end() ? cplx{} : it->second;
  }

  // Adds c to a coefficient; terms above trunc are discarded.
  void add(const exps& e, cplx c) {
    check_exps(e);
    int d = wdeg(e);
    if (d > trunc_) return;
    auto k = detail::pack(n_, e, d);
    add_key(k, c);
  }

  void set(const exps& e, cplx c) {
    check_exps(e);
    int d = wdeg(e);
    if (d > trunc_) return;
    auto k = detail::pack(n_, e, d);
    if (std::abs(c) <= tol::prune)
      c_.erase(k);
    else
      c_[k] = c;
  }

  void add_key(std::uint64_t k, cplx c) {
    if (detail::key_wdeg(k) > trunc_) return;
    auto it = c_.find(k);
    if (it == c_.end()) {
      if (std::abs(c) > tol::prune) c_.emplace(k, c);
      return;
    }
    it->second += c;
    if (std::abs(it->second) <= tol::prune) c_.erase(it);
  }

  // Lowest weighted degree present, or -1 for the zero series.
  int order() const { return c_.empty() ? -1 : detail::key_wdeg(c_.begin()->first); }

  double max_abs() const {
    double m = 0;
    for (auto& [k, c] : c_) m = std::max(m, std::abs(c));
    return m;
  }

  cplx constant_term() const { return coeff(exps{}); }

  basic_series with_trunc(int t) const {
    if (t > trunc_) throw series_error("with_trunc: cannot raise truncation");
    basic_series r(n_, t, w_);
    for (auto& [k, c] : c_)
      if (detail::key_wdeg(k) <= t) r.c_.emplace(k, c);
    return r;
  }

  // Raises the declared truncation without adding information; use only for exact polynomials.
  basic_series as_exact(int t) const {
    basic_series r(n_, t, w_);
    for (auto& [k, c] : c_)
      if (detail::key_wdeg(k) <= t) r.c_.emplace(k, c);
    return r;
  }

  basic_series weighted_part(int nu) const {
    basic_series r(n_, trunc_, w_);
    for (auto& [k, c] : c_)
      if (detail::key_wdeg(k) == nu) r.c_.emplace(k, c);
    return r;
  }

  basic_series weighted_range(int lo, int hi) const {
    basic_series r(n_, trunc_, w_);
    for (auto& [k, c] : c_) {
      int d = detail::key_wdeg(k);
      if (d >= lo && d <= hi) r.c_.emplace(k, c);
    }
    return r;
  }

  // Terms with |a| = k and |b| = l (plain degree, not weighted).
  basic_series type_part(int k, int l) const {
    basic_series r(n_, trunc_, w_);
    for (auto& [key, c] : c_) {
      auto e = exponents(key);
      if (sum_a(e) == k && sum_b(e) == l) r.c_.emplace(key, c);
    }
    return r;
  }

  int sum_a(const exps& e) const {
    int s = 0;
    for (int j = 0; j < n_; ++j) s += e.a[j];
    return s;
  }
  int sum_b(const exps& e) const {
    int s = 0;
    for (int j = 0; j < n_; ++j) s += e.b[j];
    return s;
  }

  basic_series& operator+=(const basic_series& o) {
    check_compat(o);
    if (o.trunc_ < trunc_) *this = with_trunc(o.trunc_);
    for (auto& [k, c] : o.c_) add_key(k, c);
    return *this;
  }
  basic_series& operator-=(const basic_series& o) {
    check_compat(o);
    if (o.trunc_ < trunc_) *this = with_trunc(o.trunc_);
    for (auto& [k, c] : o.c_) add_key(k, -c);
    return *this;
  }
  basic_series& operator*=(cplx s) {
    if (s == cplx{}) {
      c_.clear();
      return *this;
    }
    for (auto it = c_.begin(); it != c_.end();) {
      it->second *= s;
      if (std::abs(it->second) <= tol::prune)
        it = c_.erase(it);
      else
        ++it;
    }
    return *this;
  }
  basic_series& operator*=(double s) { return *this *= cplx(s); }

  friend basic_series operator+(basic_series a, const basic_series& b) { return a += b; }
  friend basic_series operator-(basic_series a, const basic_series& b) { return a -= b; }
  friend basic_series operator-(basic_series a) { return a *= -1.0; }
  friend basic_series operator*(basic_series a, cplx s) { return a *= s; }
  friend basic_series operator*(cplx s, basic_series a) { return a *= s; }
  friend basic_series operator*(basic_series a, double s) { return a *= s; }
  friend basic_series operator*(double s, basic_series a) { return a *= s; }
  friend basic_series operator*(const basic_series& a, const basic_series& b) { return mul(a, b); }

  // Same n, weights and trunc, coefficients within tolerance.
  bool approx_equal(const basic_series& o, double eps) const {
    if (n_ != o.n_) return false;
    basic_series d = *this - o;
    return d.max_abs() <= eps;
  }

  void check_compat(const basic_series& o) const {
    if (n_ != o.n_) throw series_error("series: mismatched number of variables");
    for (int j = 0; j < n_; ++j)
      if (w_[j] != o.w_[j]) throw series_error("series: mismatched variable weights");
  }

  static basic_series mul(const basic_series& a, const basic_series& b) {
    a.check_compat(b);
    int T = std::min(a.trunc_, b.trunc_);
    basic_series r(a.n_, T, a.w_);
    if (a.c_.empty() || b.c_.empty()) return r;
    const basic_series* x = &a;
    const basic_series* y = &b;
    if (x->c_.size() > y->c_.size()) std::swap(x, y);
    std::size_t pairs = x->c_.size() * y->c_.size();
    if (pairs < 4096 || r.space_ref().table_estimate() > 30'000'000) {
      std::unordered_map<std::uint64_t, cplx> acc;
      acc.reserve(pairs);
      for (auto& [kx, cx] : x->c_) {
        int dx = detail::key_wdeg(kx);
        if (dx > T) break;
        for (auto& [ky, cy] : y->c_) {
          if (dx + detail::key_wdeg(ky) > T) break;
          acc[kx + ky] += cx * cy;
        }
      }
      for (auto& [k, c] : acc)
        if (std::abs(c) > tol::prune) r.c_.emplace(k, c);
      return r;
    }
    auto& sp = r.space_ref();
    int M = int(sp.keys.size());
    std::vector<cplx> Y(M), out(M);
    for (auto& [k, c] : y->c_)
      if (detail::key_wdeg(k) <= T) Y[sp.index.at(k)] = c;
    sp.build_table();
    for (auto& [kx, cx] : x->c_) {
      if (detail::key_wdeg(kx) > T) break;
      int i = sp.index.at(kx);
      for (std::size_t p = sp.row[i]; p < sp.row[i + 1]; ++p) {
        auto [j, k] = sp.cols[p];
        out[k] += cx * Y[j];
      }
    }
    r.from_dense(out);
    return r;
  }

  detail::space& space_ref() const { return detail::get_space(n_, w_, trunc_, has_b, has_m); }

  std::vector<cplx> to_dense() const {
    auto& sp = space_ref();
    std::vector<cplx> v(sp.keys.size());
    for (auto& [k, c] : c_) v[sp.index.at(k)] = c;
    return v;
  }

  void from_dense(const std::vector<cplx>& v) {
    auto& sp = space_ref();
    c_.clear();
    for (std::size_t i = 0; i < v.size(); ++i)
      if (std::abs(v[i]) > tol::prune) c_.emplace_hint(c_.end(), sp.keys[i], v[i]);
  }

  bool operator==(const basic_series& o) const {
    return n_ == o.n_ && trunc_ == o.trunc_ && c_ == o.c_;
  }

 private:
  void check_exps(const exps& e) const {
    for (int j = 0; j < n_; ++j) {
      if (e.a[j] < 0 || e.a[j] > 15 || e.b[j] < 0 || e.b[j] > 15)
        throw series_error("series: exponent out of range");
      if (!has_b && e.b[j] != 0) throw series_error("series: kind has no conjugate variables");
    }
    if (e.m < 0 || e.m > 15) throw series_error("series: exponent out of range");
    if (!has_m && e.m != 0) throw series_error("series: kind has no last slot");
  }

  int n_ = 0;
  int trunc_ = 0;
  weight_vec w_ = unit_weights();
  map_type c_;
};

using MixedSeries = basic_series<mixed_tag>;
using HoloSeries = basic_series<holo_tag>;
using BiholoSeries = basic_series<biholo_tag>;
using WbarSeries = basic_series<wbar_tag>;

// Variable selector for differentiation.
struct var {
  enum kind_t { z, zbar, last } kind = z;
  int index = 0;
};

template <class Tag>
basic_series<Tag> differentiate(const basic_series<Tag>& a, var v) {
  int wv = v.kind == var::last ? 2 : a.weights()[v.index];
  if (v.kind != var::last && (v.index < 0 || v.index >= a.n()))
    throw series_error("differentiate: variable index out of range");
  basic_series<Tag> r(a.n(), std::max(0, a.trunc() - wv), a.weights());
  for (auto& [k, c] : a.terms()) {
    exps e = a.exponents(k);
    int* p = v.kind == var::z ? &e.a[v.index] : v.kind == var::zbar ? &e.b[v.index] : &e.m;
    if (*p == 0) continue;
    double f = *p;
    --*p;
    if (a.trunc() - wv < 0) continue;
    r.add(e, c * f);
  }
  return r;
}

// Complex conjugate: swaps z and zbar and conjugates coefficients (s stays real).
template <class Tag>
basic_series<Tag> conj(const basic_series<Tag>& a) {
  static_assert(Tag::has_b, "conj needs conjugate variables in the same kind");
  basic_series<Tag> r(a.n(), a.trunc(), a.weights());
  for (auto& [k, c] : a.terms()) {
    exps e = a.exponents(k);
    std::swap(e.a, e.b);
    r.add(e, std::conj(c));
  }
  return r;
}

template <class Tag>
bool is_real(const basic_series<Tag>& a, double eps = tol::zero) {
  return (a - conj(a)).max_abs() <= eps;
}

template <class Tag>
basic_series<Tag> real_part(const basic_series<Tag>& a) {
  return 0.5 * (a + conj(a));
}

template <class Tag>
basic_series<Tag> imag_part(const basic_series<Tag>& a) {
  return cplx(0, -0.5) * (a - conj(a));
}

// Map (k,l) -> component; components sum to the input.
template <class Tag>
std::map<std::pair<int, int>, basic_series<Tag>> type_decompose(const basic_series<Tag>& a) {
  std::map<std::pair<int, int>, basic_series<Tag>> out;
  for (auto& [k, c] : a.terms()) {
    exps e = a.exponents(k);
    auto key = std::make_pair(a.sum_a(e), a.sum_b(e));
    auto it = out.find(key);
    if (it == out.end()) it = out.emplace(key, basic_series<Tag>(a.n(), a.trunc(), a.weights())).first;
    it->second.add_key(k, c);
  }
  return out;
}

template <class Tag>
std::map<int, basic_series<Tag>> weighted_decompose(const basic_series<Tag>& a) {
  std::map<int, basic_series<Tag>> out;
  for (auto& [k, c] : a.terms()) {
    int d = detail::key_wdeg(k);
    auto it = out.find(d);
    if (it == out.end()) it = out.emplace(d, basic_series<Tag>(a.n(), a.trunc(), a.weights())).first;
    it->second.add_key(k, c);
  }
  return out;
}

// Images for every slot of a target kind, living in the result kind.
template <class RT>
struct images {
  std::vector<basic_series<RT>> z;
  std::vector<basic_series<RT>> zbar;
  std::vector<basic_series<RT>> last;  // zero or one entry
};

// Composition target(images). Each image must have order at least the weight of the
// slot it replaces; with allow_constant the target is taken as an exact polynomial.
template <class RT, class TT>
basic_series<RT> substitute(const basic_series<TT>& target, const images<RT>& im,
                            bool allow_constant = false) {
  int n = target.n();
  std::vector<bool> used_a(n, false), used_b(n, false);
  bool used_m = false;
  for (auto& [k, c] : target.terms()) {
    exps e = target.exponents(k);
    for (int j = 0; j < n; ++j) {
      used_a[j] = used_a[j] || e.a[j] > 0;
      used_b[j] = used_b[j] || e.b[j] > 0;
    }
    used_m = used_m || e.m > 0;
  }
  const basic_series<RT>* proto = nullptr;
  int T = allow_constant ? max_trunc : target.trunc();
  auto check = [&](const std::vector<basic_series<RT>>& v, std::size_t j, int w, const char* what) {
    if (j >= v.size()) throw series_error(std::string("substitute: missing image for ") + what);
    const auto& s = v[j];
    if (proto) proto->check_compat(s);
    proto = &s;
    int ord = s.order();
    if (!allow_constant && ord >= 0 && ord < w)
      throw series_error(std::string("substitute: image of ") + what + " has order below the slot weight");
    T = std::min(T, s.trunc());
  };
  for (int j = 0; j < n; ++j) {
    if (used_a[j]) check(im.z, j, target.weights()[j], "z");
    if (used_b[j]) check(im.zbar, j, target.weights()[j], "zbar");
  }
  if (used_m) check(im.last, 0, 2, "last slot");
  if (!proto) {
    // Constant target.
    int rn = !im.z.empty() ? im.z[0].n() : !im.zbar.empty() ? im.zbar[0].n() : !im.last.empty() ? im.last[0].n() : n;
    weight_vec rw = !im.z.empty() ? im.z[0].weights() : !im.zbar.empty() ? im.zbar[0].weights()
                    : !im.last.empty() ? im.last[0].weights() : unit_weights();
    int rt = std::min(T, target.trunc());
    for (auto& v : {&im.z, &im.zbar, &im.last})
      for (auto& s : *v) rt = std::min(rt, s.trunc());
    basic_series<RT> r(rn, rt, rw);
    r.add(exps{}, target.constant_term());
    return r;
  }
  int rn = proto->n();
  weight_vec rw = proto->weights();
  basic_series<RT> one = basic_series<RT>::constant(rn, T, 1.0, rw);

  auto reduce = [&](const basic_series<RT>& s) { return s.trunc() > T ? s.with_trunc(T) : s; };
  std::vector<basic_series<RT>> za(n), zb(n), lm;
  for (int j = 0; j < n; ++j) {
    if (used_a[j]) za[j] = reduce(im.z[j]);
    if (used_b[j]) zb[j] = reduce(im.zbar[j]);
  }
  if (used_m) lm.push_back(reduce(im.last[0]));

  // Memoized power products keyed by the packed exponent fields of one slot group.
  std::map<std::uint64_t, basic_series<RT>> memo_a, memo_b;
  auto mask_a = [&](const exps& e) {
    exps x;
    x.a = e.a;
    return detail::pack(n, x, 0);
  };
  auto mask_b = [&](const exps& e) {
    exps x;
    x.b = e.b;
    x.m = e.m;
    return detail::pack(n, x, 0);
  };
  auto prod_a = [&](auto&& self, const exps& e) -> const basic_series<RT>& {
    auto key = mask_a(e);
    auto it = memo_a.find(key);
    if (it != memo_a.end()) return it->second;
    int j = -1;
    for (int t = 0; t < n; ++t)
      if (e.a[t] > 0) j = t;
    if (j < 0) return memo_a.emplace(key, one).first->second;
    exps f;
    f.a = e.a;
    --f.a[j];
    basic_series<RT> v = self(self, f) * za[j];
    return memo_a.emplace(key, std::move(v)).first->second;
  };
  auto prod_b = [&](auto&& self, const exps& e) -> const basic_series<RT>& {
    auto key = mask_b(e);
    auto it = memo_b.find(key);
    if (it != memo_b.end()) return it->second;
    exps f;
    f.b = e.b;
    f.m = e.m;
    const basic_series<RT>* factor = nullptr;
    if (f.m > 0) {
      --f.m;
      factor = &lm[0];
    } else {
      int j = -1;
      for (int t = 0; t < n; ++t)
        if (f.b[t] > 0) j = t;
      if (j < 0) return memo_b.emplace(key, one).first->second;
      --f.b[j];
      factor = &zb[j];
    }
    basic_series<RT> v = self(self, f) * (*factor);
    return memo_b.emplace(key, std::move(v)).first->second;
  };

  // Group target terms by their z exponents.
  std::map<std::uint64_t, std::vector<std::pair<exps, cplx>>> groups;
  for (auto& [k, c] : target.terms()) {
    exps e = target.exponents(k);
    groups[mask_a(e)].emplace_back(e, c);
  }
  auto& sp = detail::get_space(rn, rw, T, RT::has_b, RT::has_m);
  std::vector<cplx> acc(sp.keys.size());
  for (auto& [ka, terms] : groups) {
    basic_series<RT> q(rn, T, rw);
    for (auto& [e, c] : terms) {
      const auto& pb = prod_b(prod_b, e);
      for (auto& [k, v] : pb.terms()) q.add_key(k, c * v);
    }
    const auto& pa = prod_a(prod_a, terms.front().first);
    basic_series<RT> t = pa * q;
    for (auto& [k, v] : t.terms()) acc[sp.index.at(k)] += v;
  }
  basic_series<RT> r(rn, T, rw);
  r.from_dense(acc);
  return r;
}

// Converts between kinds with the same slot layout (e.g. mixed and wbar).
template <class RT, class TT>
basic_series<RT> relabel(const basic_series<TT>& a) {
  basic_series<RT> r(a.n(), a.trunc(), a.weights());
  for (auto& [k, c] : a.terms()) r.add(a.exponents(k), c);
  return r;
}

}  // namespace crnf
