#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <memory>
#include <json.hpp>
#include <sstream>
#include <string>

#include "cr_tensors.hpp"
#include "full_nf.hpp"
#include "maps.hpp"

namespace crnf {

using json = nlohmann::json;

struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct parse_error : input_error {
  int line, column;
  parse_error(int l, int c, const std::string& msg)
      : input_error("line " + std::to_string(l) + ", column " + std::to_string(c) + ": " + msg), line(l), column(c) {}
};

// ---------------------------------------------------------------------------
// Series JSON

/// Terms sorted by weighted degree, then exponents (z, zbar, s) in descending lexicographic order.
template <class Tag>
json series_to_json(const basic_series<Tag>& a) {
  int n = a.n();
  struct row {
    int deg;
    std::vector<int> key;
    cplx c;
  };
  std::vector<row> rows;
  for (auto& [k, c] : a.terms()) {
    exps e = a.exponents(k);
    std::vector<int> key;
    for (int j = 0; j < n; ++j) key.push_back(e.a[j]);
    for (int j = 0; j < n; ++j) key.push_back(e.b[j]);
    key.push_back(e.m);
    rows.push_back({a.wdeg(e), key, c});
  }
  std::sort(rows.begin(), rows.end(), [](const row& x, const row& y) {
    if (x.deg != y.deg) return x.deg < y.deg;
    return x.key > y.key;
  });
  json terms = json::array();
  for (auto& r : rows) {
    terms.push_back({{"z", std::vector<int>(r.key.begin(), r.key.begin() + n)},
                     {"zbar", std::vector<int>(r.key.begin() + n, r.key.begin() + 2 * n)},
                     {"s", r.key[2 * n]},
                     {"re", r.c.real()},
                     {"im", r.c.imag()}});
  }
  bool real = false;
  if constexpr (Tag::has_b) real = is_real(a);
  return {{"n", n}, {"trunc", a.trunc()}, {"real", real}, {"terms", terms}};
}

template <class Tag>
basic_series<Tag> series_from_json(const json& j) {
  try {
    int n = j.at("n").get<int>(), T = j.at("trunc").get<int>();
    if (n < 1 || n > max_vars) throw input_error("series: n out of range");
    if (T < 0 || T > max_trunc) throw input_error("series: trunc out of range");
    basic_series<Tag> s(n, T);
    for (auto& t : j.at("terms")) {
      auto z = t.at("z").get<std::vector<int>>();
      auto zb = t.value("zbar", std::vector<int>(n, 0));
      if (int(z.size()) != n || int(zb.size()) != n) throw input_error("series: exponent vectors must have length n");
      exps e;
      for (int k = 0; k < n; ++k) {
        if (z[k] < 0 || zb[k] < 0) throw input_error("series: negative exponent");
        e.a[k] = z[k];
        e.b[k] = zb[k];
      }
      e.m = t.value("s", 0);
      if (e.m < 0) throw input_error("series: negative exponent");
      if (!Tag::has_b && std::any_of(zb.begin(), zb.end(), [](int x) { return x != 0; }))
        throw input_error("series: holomorphic component has zbar exponents");
      s.add(e, cplx(t.at("re").get<double>(), t.value("im", 0.0)));
    }
    return s;
  } catch (const json::exception& e) {
    throw input_error(std::string("series JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Matrices and vectors as [re, im] pairs

inline json cplx_to_json(cplx c) { return json::array({c.real(), c.imag()}); }

inline cplx cplx_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_array() || j.size() != 2) throw input_error("expected [re, im] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline json matrix_to_json(const cmat& m) {
  json out = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(cplx_to_json(m(i, k)));
    out.push_back(row);
  }
  return out;
}

inline cmat matrix_from_json(const json& j) {
  try {
    if (!j.is_array()) throw input_error("matrix: expected array of rows");
    int r = int(j.size()), c = r ? int(j[0].size()) : 0;
    cmat m(r, c);
    for (int i = 0; i < r; ++i) {
      if (!j[i].is_array() || int(j[i].size()) != c) throw input_error("matrix: ragged rows");
      for (int k = 0; k < c; ++k) m(i, k) = cplx_from_json(j[i][k]);
    }
    return m;
  } catch (const json::exception& e) {
    throw input_error(std::string("matrix JSON: ") + e.what());
  }
}

inline json vector_to_json(const cvec& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(cplx_to_json(v(i)));
  return out;
}

inline json map_to_json(const FormalMap& m) {
  json f = json::array();
  for (auto& c : m.f) f.push_back(series_to_json(c));
  return {{"f", f}, {"g", series_to_json(m.g)}};
}

inline FormalMap map_from_json(const json& j) {
  FormalMap m;
  for (auto& c : j.at("f")) m.f.push_back(series_from_json<holo_tag>(c));
  m.g = series_from_json<holo_tag>(j.at("g"));
  return m;
}

/// Missing fields keep their identity values.
inline NormalizationP normalization_from_json(const json& j, int n) {
  NormalizationP P = NormalizationP::identity(n);
  int k = n - 1;
  try {
    if (j.contains("c")) P.c = j["c"].get<double>();
    if (j.contains("A")) P.A = matrix_from_json(j["A"]);
    if (j.contains("B")) {
      if (int(j["B"].size()) != k) throw input_error("normalization: B must have n-1 entries");
      for (int i = 0; i < k; ++i) P.B(i) = cplx_from_json(j["B"][i]);
    }
    if (j.contains("b")) P.b = matrix_from_json(j["b"]);
    if (j.contains("cb")) {
      auto cb = j["cb"].get<std::vector<double>>();
      if (int(cb.size()) != k) throw input_error("normalization: cb must have n-1 entries");
      for (int i = 0; i < k; ++i) P.cb(i) = cb[i];
    }
    if (j.contains("a")) {
      if (int(j["a"].size()) != k) throw input_error("normalization: a must have n-1 entries");
      for (int i = 0; i < k; ++i) P.a[i] = series_from_json<holo_tag>(j["a"][i]);
    }
    if (j.contains("d")) P.d = series_from_json<holo_tag>(j["d"]);
  } catch (const json::exception& e) {
    throw input_error(std::string("normalization JSON: ") + e.what());
  }
  return P;
}

inline json normalization_to_json(const NormalizationP& P) {
  json a = json::array();
  for (auto& s : P.a) a.push_back(series_to_json(s));
  return {{"c", P.c},
          {"A", matrix_to_json(P.A)},
          {"B", vector_to_json(P.B)},
          {"a", a},
          {"b", matrix_to_json(P.b)},
          {"cb", std::vector<double>(P.cb.data(), P.cb.data() + P.cb.size())},
          {"d", series_to_json(P.d)}};
}

/// Nested arrays over the CR slots, then the F slot, then the characteristic index.
inline json tensor_to_json(const TensorRep& t) {
  std::function<json(std::vector<int>&)> rec = [&](std::vector<int>& J) -> json {
    json out = json::array();
    if (int(J.size()) == t.order) {
      for (int k = 0; k < t.q; ++k) {
        json row = json::array();
        for (int l = 0; l < t.d; ++l) row.push_back(cplx_to_json(t.at(J, k, l)));
        out.push_back(row);
      }
      return out;
    }
    for (int a = 0; a < t.n; ++a) {
      J.push_back(a);
      out.push_back(rec(J));
      J.pop_back();
    }
    return out;
  };
  std::vector<int> J;
  return t.trivial ? json::array() : rec(J);
}

// ---------------------------------------------------------------------------
// Expression grammar
//
//   expr   := term (('+' | '-') term)*
//   term   := unary ('*' unary)*
//   unary  := ('+' | '-') unary | power
//   power  := atom ('^' INT)?
//   atom   := NUMBER | 'i' | 'z'k | 'zb'k | 's' | '(' expr ')'

struct token {
  enum kind_t { num, ident, op, end } kind;
  std::string text;
  double value = 0;
  int line = 1, col = 1;
  bool imag = false;
};

inline std::vector<token> tokenize(const std::string& src) {
  std::vector<token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto adv = [&](std::size_t k) {
    for (std::size_t t = 0; t < k; ++t) {
      if (src[i] == '\n') ++line, col = 1;
      else ++col;
      ++i;
    }
  };
  while (i < src.size()) {
    char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      adv(1);
      continue;
    }
    token t{token::end, "", 0, line, col, false};
    if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t used = 0;
      try {
        t.value = std::stod(src.substr(i), &used);
      } catch (const std::exception&) {
        throw parse_error(line, col, "malformed number");
      }
      t.kind = token::num;
      // a trailing i makes an imaginary literal such as 3i or 0.5i
      if (i + used < src.size() && src[i + used] == 'i' &&
          (i + used + 1 == src.size() || !std::isalnum(static_cast<unsigned char>(src[i + used + 1]))))
        t.imag = true, ++used;
      t.text = src.substr(i, used);
      adv(used);
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < src.size() && std::isalnum(static_cast<unsigned char>(src[j]))) ++j;
      t.kind = token::ident;
      t.text = src.substr(i, j - i);
      adv(j - i);
    } else if (std::string("+-*^()").find(c) != std::string::npos) {
      t.kind = token::op;
      t.text = std::string(1, c);
      adv(1);
    } else {
      throw parse_error(line, col, std::string("unexpected character '") + c + "'");
    }
    out.push_back(t);
  }
  out.push_back({token::end, "", 0, line, col, false});
  return out;
}

/// Variable index of z<k> / zb<k> (1-based in the text), or 0 for anything else.
inline int variable_index(const std::string& id, bool& bar) {
  std::string digits;
  if (id.rfind("zb", 0) == 0) bar = true, digits = id.substr(2);
  else if (id.rfind("z", 0) == 0) bar = false, digits = id.substr(1);
  else return 0;
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit) || digits[0] == '0') return 0;
  return digits.size() > 2 ? 0 : std::stoi(digits);
}

/// Largest variable index used in an expression (at least 1).
inline int infer_dimension(const std::string& src) {
  int n = 1;
  for (auto& t : tokenize(src))
    if (t.kind == token::ident) {
      bool bar = false;
      n = std::max(n, variable_index(t.text, bar));
    }
  return n;
}

class expr_parser {
 public:
  expr_parser(const std::string& src, int n, int trunc) : toks_(tokenize(src)), n_(n), T_(trunc) {}

  MixedSeries parse() {
    MixedSeries r = expr();
    if (peek().kind != token::end) fail("unexpected '" + peek().text + "'");
    return r;
  }

 private:
  std::vector<token> toks_;
  std::size_t pos_ = 0;
  int n_, T_;

  const token& peek() const { return toks_[pos_]; }
  [[noreturn]] void fail(const std::string& msg) const { throw parse_error(peek().line, peek().col, msg); }
  bool accept(const char* op) {
    if (peek().kind == token::op && peek().text == op) {
      ++pos_;
      return true;
    }
    return false;
  }

  MixedSeries expr() {
    MixedSeries r = term();
    for (;;) {
      if (accept("+")) r += term();
      else if (accept("-")) r -= term();
      else return r;
    }
  }
  MixedSeries term() {
    MixedSeries r = unary();
    while (accept("*")) r = r * unary();
    return r;
  }
  MixedSeries unary() {
    if (accept("-")) return -1.0 * unary();
    if (accept("+")) return unary();
    return power();
  }
  MixedSeries power() {
    MixedSeries b = atom();
    if (!accept("^")) return b;
    if (peek().kind != token::num || peek().text.find_first_not_of("0123456789") != std::string::npos)
      fail("exponent must be a nonnegative integer");
    int k = std::stoi(peek().text);
    ++pos_;
    MixedSeries r = MixedSeries::constant(n_, T_, 1.0);
    for (int j = 0; j < k; ++j) r = r * b;
    return r;
  }
  MixedSeries atom() {
    const token& t = peek();
    if (t.kind == token::num) {
      ++pos_;
      return MixedSeries::constant(n_, T_, t.imag ? cplx(0, t.value) : cplx(t.value));
    }
    if (t.kind == token::ident) {
      if (t.text == "i") {
        ++pos_;
        return MixedSeries::constant(n_, T_, I);
      }
      if (t.text == "s") {
        ++pos_;
        return MixedSeries::last(n_, T_);
      }
      bool bar = false;
      int k = variable_index(t.text, bar);
      if (k == 0) fail("unknown identifier '" + t.text + "'");
      if (k > n_) fail("variable '" + t.text + "' exceeds dimension " + std::to_string(n_));
      ++pos_;
      return bar ? MixedSeries::zbar(n_, T_, k - 1) : MixedSeries::z(n_, T_, k - 1);
    }
    if (accept("(")) {
      MixedSeries r = expr();
      if (!accept(")")) fail("expected ')'");
      return r;
    }
    if (t.kind == token::end) fail("unexpected end of input");
    fail("unexpected '" + t.text + "'");
  }
};

inline MixedSeries parse_expression(const std::string& src, int n, int trunc) {
  return expr_parser(src, n, trunc).parse();
}

/// Graph function checks: real, no constant or linear terms.
inline void validate_hypersurface(const MixedSeries& phi) {
  if (!is_real(phi)) throw input_error("hypersurface series is not real");
  if (phi.weighted_range(0, 1).max_abs() > tol::zero) throw input_error("hypersurface series must vanish to second order at 0");
  exps lin;
  lin.m = 1;
  if (std::abs(phi.coeff(lin)) > tol::zero) throw input_error("hypersurface series has a linear Re w term");
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A file path or an inline expression; file contents are series JSON or an expression. n = 0 infers the dimension.
inline Hypersurface parse_input(const std::string& arg, int trunc, int n = 0) {
  std::ifstream probe(arg);
  std::string text = probe ? read_text(arg) : arg;
  auto first = text.find_first_not_of(" \t\r\n");
  MixedSeries phi;
  if (first != std::string::npos && text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw input_error(std::string("JSON: ") + e.what());
    }
    phi = series_from_json<mixed_tag>(j);
  } else {
    if (first == std::string::npos) throw parse_error(1, 1, "empty input");
    int dim = n > 0 ? n : infer_dimension(text);
    if (dim > max_vars) throw input_error("dimension exceeds the supported maximum");
    phi = parse_expression(text, dim, trunc);
  }
  validate_hypersurface(phi);
  return Hypersurface(phi);
}

}  // namespace crnf
