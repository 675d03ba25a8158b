#include <CLI11.hpp>
#include <iostream>

#include "crnf/cli.hpp"

int main(int argc, char** argv) {
  crnf::JobConfig cfg;
  CLI::App app{"Normal forms of real hypersurfaces at generic Levi degeneracies"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--trunc", cfg.trunc, "truncation weight")->capture_default_str();
  app.add_option("--degree", cfg.degree, "weighted degree for normal forms (default: trunc)");
  app.add_option("--tol", cfg.tol, "zero tolerance")->capture_default_str();
  app.add_option("--seed", cfg.seed, "seed for randomized searches")->capture_default_str();
  app.add_option("--n", cfg.n, "dimension (default: largest variable index)");
  app.add_flag("--json", cfg.json_out, "JSON output");

  auto* inv = app.add_subcommand("invariants", "nondegeneracy and tensors at 0");
  inv->add_option("input", cfg.inputs, "series JSON file or expression")->required();
  inv->add_option("--kmax", cfg.kmax, "largest E_j index")->capture_default_str();

  auto* pnf = app.add_subcommand("partial-nf", "third-order normalization and classification");
  pnf->add_option("input", cfg.inputs, "series JSON file or expression")->required();

  auto* nf = app.add_subcommand("normal-form", "full normal form through --degree");
  nf->add_option("input", cfg.inputs, "series JSON file or expression")->required();
  nf->add_option("--normalization", cfg.normalization, "normalization JSON file");

  auto* eq = app.add_subcommand("equiv", "compare two hypersurfaces");
  eq->add_option("inputs", cfg.inputs, "A B")->required()->expected(2);
  eq->add_option("--search", cfg.search, "random normalizations to try (heuristic)")->capture_default_str();

  auto* tk = app.add_subcommand("takagi", "Takagi factorization of a symmetric matrix");
  std::string matrix;
  tk->add_option("matrix", matrix, "matrix JSON file or inline JSON")->required();

  auto* ab = app.add_subcommand("aut-bound", "stability group dimension bound");
  ab->add_option("lambda", cfg.lambda, "lambda entries (default: zero)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : crnf::exit_code::input;
  }
  for (auto* s : {inv, pnf, nf, eq, tk, ab})
    if (s->parsed()) cfg.command = s->get_name();
  if (tk->parsed()) cfg.inputs = {matrix};

  auto r = crnf::run(cfg);
  (r.exit_code == 0 ? std::cout : std::cerr) << r.output;
  return r.exit_code;
}
