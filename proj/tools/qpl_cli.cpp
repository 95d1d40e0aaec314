#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "qpl/app.hpp"

int main(int argc, char** argv) {
  CLI::App cli{"Quasiperiodic solutions of natural Lagrangian systems on chart manifolds"};
  cli.require_subcommand(1);
  qpl::AppOptions opt;
  std::uint64_t seed = 0;
  int trunc = 0, grid = 0;
  double window = 0.0;
  for (const char* name : {"check", "solve", "verify", "dichotomy", "all"}) {
    CLI::App* sub = cli.add_subcommand(name);
    sub->add_option("problem", opt.problem, "problem file")->required();
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--trunc", trunc, "Fourier truncation N")->check(CLI::NonNegativeNumber);
    sub->add_option("--grid", grid, "torus grid points per axis")->check(CLI::PositiveNumber);
    sub->add_option("--window", window, "time window T")->check(CLI::PositiveNumber);
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--format", opt.format, "report, csv or both")
        ->check(CLI::IsMember({"report", "csv", "both"}));
    sub->add_option("--solution", opt.solution, "report or field file from a previous solve");
  }
  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : qpl::kExitError;
  }
  CLI::App* sub = cli.get_subcommands().front();
  opt.command = sub->get_name();
  if (sub->count("--seed")) opt.seed = seed;
  if (sub->count("--trunc")) opt.trunc = trunc;
  if (sub->count("--grid")) opt.grid = grid;
  if (sub->count("--window")) opt.window = window;
  return qpl::run(opt, std::cout, std::cerr);
}
