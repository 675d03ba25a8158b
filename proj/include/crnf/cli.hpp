#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cr_tensors.hpp"
#include "equivalence.hpp"
#include "full_nf.hpp"
#include "io.hpp"
#include "partial_nf.hpp"

namespace crnf {

struct JobConfig {
  std::string command;
  std::vector<std::string> inputs;
  int trunc = 8;
  std::optional<int> degree;
  double tol = 1e-9;
  std::uint64_t seed = 0;
  bool json_out = false;
  int n = 0;  // 0 infers from the expression
  int kmax = 5;
  std::string normalization;  // file path, empty for the identity
  int search = 0;
  std::vector<double> lambda;
};

struct JobResult {
  int exit_code = 0;
  std::string output;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int input = 2;
inline constexpr int numerical = 3;
}  // namespace exit_code

inline json null_or(const rvec& v) {
  if (v.size() == 0) return nullptr;
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline std::string format_report(const json& j, bool as_json) {
  if (as_json) return j.dump(2) + "\n";
  std::ostringstream os;
  for (auto& [k, v] : j.items()) os << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
  return os.str();
}

inline json invariants_report(const Hypersurface& M, int kmax) {
  GenericSubmanifold G = to_generic(M);
  int k = std::min(kmax, G.trunc() - 2);
  if (k < 0) throw input_error("truncation too small for the invariants report");
  auto E = E_spaces(G, k);
  std::optional<int> kn;
  std::vector<int> dims;
  for (int j = 0; j <= k; ++j) {
    dims.push_back(E[j].dim());
    if (!kn && E[j].dim() == G.N) kn = j;
  }
  json psi_j = json::object(), factors = json::object();
  TensorRep h;
  for (int j = 1; j <= std::min(3, G.trunc() - 2); ++j) {
    TensorRep t = psi(G, j);
    psi_j[std::to_string(j + 1)] = tensor_to_json(t);
    factors[std::to_string(j + 1)] = cplx_to_json(t.pairing_factor);
    if (j == 2) h = t;
  }
  json out;
  out["k_nondeg"] = kn ? json(*kn) : json(nullptr);
  out["kmax"] = k;
  out["dims_E"] = dims;
  out["psi"] = psi_j;
  out["pairing_factor"] = factors;
  if (G.d == 1 && G.trunc() >= 4) {
    auto c = cubic_form(G);
    json cub;
    cub["q"] = tensor_to_json(c.q);
    cub["display_factor"] = cplx_to_json(c.display_factor);
    // literal / psi_3 on the largest psi_3 component
    std::size_t best = 0;
    for (std::size_t i = 0; i < h.comp.size(); ++i)
      if (std::abs(h.comp[i]) > std::abs(h.comp[best])) best = i;
    bool ok = !h.trivial && !c.literal.trivial && h.comp.size() == c.literal.comp.size() && std::abs(h.comp[best]) > tol::zero;
    cub["cubic_ratio"] = ok ? cplx_to_json(c.literal.comp[best] / h.comp[best]) : json(nullptr);
    out["cubic"] = cub;
  }
  return out;
}

inline nf_model model_of(const PartialNFResult& p, int n) {
  if (p.kase != "semidef_iii" && p.kase != "generic")
    throw input_error("normal form requires a generic Levi degeneracy (case " + p.kase + ")");
  return nf_model{n, p.r, p.R};
}

inline json partial_report(const PartialNFResult& p, int n) {
  json out;
  out["r"] = p.r;
  out["s"] = p.s;
  out["case"] = p.kase;
  out["lambda"] = null_or(p.lambda);
  out["R"] = p.R.size() ? matrix_to_json(p.R) : json(nullptr);
  out["aut_dim_bound"] = p.kase == "semidef_iii" ? json(aut_dim_bound(n, p.lambda)) : json(nullptr);
  out["map"] = map_to_json(p.map);
  return out;
}

inline json signature_json(const Signature& s) {
  json out;
  out["r"] = s.r;
  out["s"] = s.s;
  out["case"] = s.kase;
  out["lambda"] = null_or(s.lambda);
  out["R"] = s.R.size() ? matrix_to_json(s.R) : json(nullptr);
  return out;
}

inline json equivalence_json(const EquivalenceReport& r) {
  json out;
  out["invariants_match"] = r.invariants_match;
  out["signature_a"] = signature_json(r.sig_a);
  out["signature_b"] = signature_json(r.sig_b);
  out["normal_forms_match"] = r.normal_forms_match;
  out["compared"] = r.compared;
  out["max_deviation"] = r.max_deviation;
  out["degree"] = r.degree;
  out["normalization_a"] = normalization_to_json(r.P_a);
  out["normalization_b"] = normalization_to_json(r.P_b);
  out["search_iterations"] = r.search_iterations;
  out["note"] = r.note;
  return out;
}

inline int job_degree(const JobConfig& cfg) {
  int d = cfg.degree.value_or(cfg.trunc);
  if (d < 4 || d > cfg.trunc) throw input_error("degree must satisfy 4 <= degree <= trunc");
  return d;
}

inline void need_inputs(const JobConfig& cfg, std::size_t k) {
  if (cfg.inputs.size() != k) throw input_error(cfg.command + " expects " + std::to_string(k) + " input(s)");
}

inline json run_command(const JobConfig& cfg) {
  const std::string& c = cfg.command;
  if (c == "invariants") {
    need_inputs(cfg, 1);
    return invariants_report(parse_input(cfg.inputs[0], cfg.trunc, cfg.n), cfg.kmax);
  }
  if (c == "partial-nf") {
    need_inputs(cfg, 1);
    Hypersurface M = parse_input(cfg.inputs[0], cfg.trunc, cfg.n);
    return partial_report(partial_nf(M), M.n);
  }
  if (c == "normal-form") {
    need_inputs(cfg, 1);
    Hypersurface M = parse_input(cfg.inputs[0], cfg.trunc, cfg.n);
    int degree = job_degree(cfg);
    auto p = partial_nf(M);
    nf_model md = model_of(p, M.n);
    NormalizationP P = NormalizationP::identity(M.n);
    if (!cfg.normalization.empty()) {
      try {
        P = normalization_from_json(json::parse(read_text(cfg.normalization)), M.n);
      } catch (const json::parse_error& e) {
        throw input_error(std::string("normalization JSON: ") + e.what());
      }
      if (!validate_P(P, md, std::max(cfg.tol, 1e-9))) throw input_error("normalization is not admissible for this model");
    }
    auto res = normal_form(p.M_out, P, md, degree, cfg.tol);
    json diag = json::array();
    for (auto& d : res.per_degree)
      diag.push_back({{"nu", d.nu}, {"dim", d.dim}, {"sigma_min", d.sigma_min}, {"sigma_max", d.sigma_max}, {"residual", d.residual}});
    json out;
    out["N"] = series_to_json(res.N);
    out["T"] = map_to_json(res.T);
    out["partial"] = partial_report(p, M.n);
    out["normalization"] = normalization_to_json(P);
    out["diagnostics"] = {{"per_degree", diag}};
    return out;
  }
  if (c == "equiv") {
    need_inputs(cfg, 2);
    Hypersurface A = parse_input(cfg.inputs[0], cfg.trunc, cfg.n);
    Hypersurface B = parse_input(cfg.inputs[1], cfg.trunc, cfg.n);
    if (A.n != B.n) throw input_error("inputs have different dimensions");
    int degree = job_degree(cfg);
    auto pa = partial_nf(A), pb = partial_nf(B);
    EquivalenceReport rep;
    rep.degree = degree;
    rep.sig_a = invariants_signature(A);
    rep.sig_b = invariants_signature(B);
    rep.invariants_match = rep.sig_a.matches(rep.sig_b);
    rep.P_a = rep.P_b = NormalizationP::identity(A.n);
    if (!rep.invariants_match) {
      rep.note = "signature mismatch; comparison skipped";
    } else {
      nf_model md = model_of(pa, A.n);
      // Reuse md for B: matching signatures give the same model.
      rep = cfg.search > 0 ? search_normalizations(pa.M_out, pb.M_out, rep.P_a, md, degree, cfg.search, cfg.seed)
                           : equivalent_to_degree(pa.M_out, pb.M_out, rep.P_a, rep.P_b, md, degree);
    }
    return equivalence_json(rep);
  }
  if (c == "takagi") {
    need_inputs(cfg, 1);
    std::ifstream probe(cfg.inputs[0]);
    std::string text = probe ? read_text(cfg.inputs[0]) : cfg.inputs[0];
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw input_error(std::string("matrix JSON: ") + e.what());
    }
    cmat E = matrix_from_json(j);
    if (E.rows() != E.cols()) throw input_error("takagi: matrix must be square");
    if ((E - E.transpose()).norm() > cfg.tol * (1 + E.norm())) throw input_error("takagi: matrix must be symmetric");
    auto tk = takagi(E, cfg.tol);
    json out;
    out["lambda"] = std::vector<double>(tk.lambda.data(), tk.lambda.data() + tk.lambda.size());
    out["U"] = matrix_to_json(tk.U);
    out["residual"] = (tk.U * E * tk.U.transpose() - D_lambda(tk.lambda)).norm();
    return out;
  }
  if (c == "aut-bound") {
    if (cfg.n < 2) throw input_error("aut-bound needs --n >= 2");
    rvec l = cfg.lambda.empty() ? rvec(rvec::Zero(cfg.n - 1)) : Eigen::Map<const rvec>(cfg.lambda.data(), cfg.lambda.size());
    try {
      return json{{"n", cfg.n}, {"lambda", std::vector<double>(l.data(), l.data() + l.size())}, {"aut_dim_bound", aut_dim_bound(cfg.n, l)}};
    } catch (const partial_nf_error& e) {
      throw input_error(e.what());
    }
  }
  throw input_error("unknown command '" + c + "'");
}

/// Runs one job; the tolerance is global for its duration.
inline JobResult run(const JobConfig& cfg) {
  double saved = tol::zero;
  tol::zero = cfg.tol;
  JobResult r;
  try {
    if (cfg.trunc < 1 || cfg.trunc > max_trunc) throw input_error("trunc out of range");
    r.output = format_report(run_command(cfg), cfg.json_out);
  } catch (const singular_system& e) {
    r = {exit_code::numerical, std::string("error: ") + e.what() + "\n"};
  } catch (const input_error& e) {
    r = {exit_code::input, std::string("error: ") + e.what() + "\n"};
  } catch (const partial_nf_error& e) {
    r = {exit_code::input, std::string("error: ") + e.what() + "\n"};
  } catch (const nf_error& e) {
    r = {exit_code::input, std::string("error: ") + e.what() + "\n"};
  } catch (const series_error& e) {
    r = {exit_code::input, std::string("error: ") + e.what() + "\n"};
  } catch (const std::exception& e) {
    r = {exit_code::numerical, std::string("error: ") + e.what() + "\n"};
  }
  tol::zero = saved;
  return r;
}

}  // namespace crnf
