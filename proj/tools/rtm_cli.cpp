// rtm: command-line front end for the aggregator-prosumer market model.
#include "rtm/bilevel_oracle.hpp"
#include "rtm/cvx_solver.hpp"
#include "rtm/harness.hpp"
#include "rtm/io.hpp"
#include "rtm/llp_solver.hpp"
#include "rtm/market_model.hpp"
#include "rtm/reduction.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace rtm;

constexpr int kExitFailure = 1;
constexpr int kExitHypothesis = 2;
constexpr int kExitInfeasible = 3;

struct Common {
  std::string input;
  std::string output;
  std::uint64_t seed = 0;
  double tol = 0.0;  // 0 keeps the defaults
  bool force = false;
  int threads = 1;
  std::string mode = "both";
};

void emit(const Common& c, const std::string& text) {
  if (c.output.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(c.output);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + c.output);
  out << text;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

MarketInstance load(const Common& c) {
  if (c.input.empty()) throw Error(ErrorCode::kIo, "--input is required");
  return assemble(read_market_data(c.input));
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kHypothesisViolated:
      return kExitHypothesis;
    case ErrorCode::kInfeasible:
    case ErrorCode::kInfeasibleBlock:
      return kExitInfeasible;
    default:
      return kExitFailure;
  }
}

void add_common(CLI::App* cmd, Common& c, bool needs_input = true) {
  if (needs_input) cmd->add_option("-i,--input", c.input, "instance JSON")->required();
  cmd->add_option("-o,--output", c.output, "output file (stdout if omitted)");
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--tol", c.tol, "solver residual target (solve) or relative gap (compare)");
  cmd->add_flag("--force", c.force, "report hypothesis failures as warnings");
  cmd->add_option("--threads", c.threads, "worker threads for grid search")->check(CLI::PositiveNumber);
  cmd->add_option("--mode", c.mode, "bound mode")->check(CLI::IsMember({"both", "lower_only", "upper_only"}));
}

int cmd_gen(const Common& c, GeneratorConfig cfg) {
  cfg.seed = c.seed;
  emit(c, dump(to_json(generate(cfg))));
  return 0;
}

int cmd_validate(const Common& c) {
  const MarketInstance inst = load(c);
  const ReducedModel reduced = compute_reduced(inst);
  const ValidationReport report = validate(inst, &reduced);
  emit(c, dump(to_json(report)));
  for (auto name : {kCheckBounds, kCheckWeights, kCheckTotal, kCheckFeasible}) {
    if (!report.at(name).passed) return kExitInfeasible;
  }
  if (!report.hypotheses_hold(parse_bound_mode(c.mode)) && !c.force) return kExitHypothesis;
  return report.at(kCheckBounded).passed ? 0 : kExitFailure;
}

int cmd_reduce(const Common& c, bool dense) {
  const MarketInstance inst = load(c);
  const ReducedModel reduced = compute_reduced(inst);
  if (dense) {
    std::ostringstream os;
    write_dense(os, reduced);
    emit(c, os.str());
    return 0;
  }
  const Matrix M = reduced.M.dense();
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) rows.push_back(vector_to_json(M.row(i).transpose()));
  const ReductionIdentities ids = reduction_identities(reduced, inst);
  Json j;
  j["M"] = std::move(rows);
  j["r"] = vector_to_json(reduced.r);
  j["psd"] = {{"passed", reduced.cert_psd.passed}, {"min_eigenvalue", reduced.cert_psd.min_eigenvalue}};
  j["m_matrix"] = {{"passed", reduced.cert_mmatrix.passed},
                   {"max_offdiagonal", reduced.cert_mmatrix.max_offdiagonal}};
  j["identities"] = {{"annihilation", ids.annihilation}, {"equality", ids.equality}};
  emit(c, dump(j));
  return 0;
}

CvxOptions cvx_options(const Common& c) {
  CvxOptions opt;
  opt.mode = parse_bound_mode(c.mode);
  opt.force = c.force;
  if (c.tol > 0.0) opt.qp.eps_abs = c.tol;
  return opt;
}

int cmd_solve(const Common& c) {
  const MarketInstance inst = load(c);
  const ReducedModel reduced = compute_reduced(inst);
  BilevelSolution sol = solve_cvx(reduced, inst, cvx_options(c));
  const BilevelCertificate cert = certify_bilevel(inst, reduced, sol);
  sol.certified = cert.passed;
  sol.consistency = cert.response_residual;
  Json j = to_json(sol);
  j["demand"] = vector_to_json(inst.s - sol.y);
  emit(c, dump(j));
  return sol.status == SolveStatus::kSolved ? 0 : kExitFailure;
}

struct OracleFlags {
  int steps = 0;
  int rounds = 5;
  int refine_starts = 4;
  int multistart = 0;
};

int cmd_oracle(const Common& c, const OracleFlags& f) {
  const MarketInstance inst = load(c);
  const ReducedModel reduced = compute_reduced(inst);
  OracleOptions opt;
  opt.mode = parse_bound_mode(c.mode);
  opt.threads = c.threads;
  opt.refine_starts = f.refine_starts;
  OracleResult res;
  if (f.multistart > 0) {
    res = oracle_multistart(inst, reduced, f.multistart, c.seed, opt);
  } else {
    const int steps = f.steps > 0 ? f.steps : grid_steps_for_budget(inst.K, 2e5);
    res = oracle_grid(inst, default_x_max(inst, reduced), steps, f.rounds, opt);
  }
  emit(c, dump(to_json(res)));
  return 0;
}

int cmd_compare(const Common& c, const OracleFlags& f) {
  const MarketInstance inst = load(c);
  CompareOptions opt;
  opt.mode = parse_bound_mode(c.mode);
  opt.force = c.force;
  opt.threads = c.threads;
  opt.coarse_steps = f.steps;
  opt.refine_rounds = f.rounds;
  opt.refine_starts = f.refine_starts;
  if (c.tol > 0.0) opt.relative_gap = c.tol;
  const CompareReport rep = run_compare(inst, opt);
  emit(c, dump(to_json(rep)));
  std::cerr << (rep.pass ? "PASS" : "FAIL") << " gap " << rep.gap << " allowed " << rep.allowed_gap << "\n";
  return rep.pass ? 0 : kExitFailure;
}

std::vector<std::pair<int, int>> parse_sizes(const std::string& text) {
  std::vector<std::pair<int, int>> sizes;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw Error(ErrorCode::kParse, "size '" + item + "' is not n:K");
    sizes.emplace_back(std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1)));
  }
  return sizes;
}

int cmd_bench(const Common& c, const std::string& sizes_text, int seeds) {
  std::vector<std::uint64_t> seed_list;
  for (int s = 0; s < seeds; ++s) seed_list.push_back(c.seed + static_cast<std::uint64_t>(s));
  const auto records = run_bench(parse_sizes(sizes_text), seed_list);
  std::ostringstream os;
  write_bench_csv(os, records);
  emit(c, os.str());
  std::cerr << "log-log slope (cvx): " << loglog_slope(records, "cvx") << "\n";
  return 0;
}

int cmd_simulate(const Common& c, int intervals, const std::string& prices_path) {
  if (c.input.empty()) throw Error(ErrorCode::kIo, "--input is required");
  const MarketData data = read_market_data(c.input);
  std::ifstream in(prices_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + prices_path);
  PriceSeries prices;
  try {
    prices = read_price_series(in);
  } catch (const Error& e) {
    throw Error(e.code(), prices_path + ": " + e.what());
  }
  emit(c, dump(to_json(run_simulate(data, intervals, prices, c.force))));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aggregator-prosumer real-time market: bilevel pricing via its convex surrogate"};
  app.require_subcommand(1);

  Common common;
  GeneratorConfig gen_cfg;
  bool no_hypothesis = false;
  auto* gen = app.add_subcommand("gen", "generate a random instance");
  add_common(gen, common, false);
  gen->add_option("-n,--prosumers", gen_cfg.n, "number of prosumers")->check(CLI::PositiveNumber);
  gen->add_option("-K,--horizon", gen_cfg.K, "time steps")->check(CLI::PositiveNumber);
  gen->add_flag("--no-hypothesis", no_hypothesis, "draw bounds that may break the convexity hypotheses");

  auto* val = app.add_subcommand("validate", "check invariants and hypotheses");
  add_common(val, common);

  bool dense = false;
  auto* red = app.add_subcommand("reduce", "compute M and r");
  add_common(red, common);
  red->add_flag("--dense", dense, "plain-text matrix dump (rows of M, then r)");

  auto* sol = app.add_subcommand("solve", "solve the convex surrogate");
  add_common(sol, common);

  OracleFlags oflags;
  auto* ora = app.add_subcommand("oracle", "grid or multistart search on the bilevel objective");
  add_common(ora, common);
  ora->add_option("--steps", oflags.steps, "grid points per axis (0 picks from budget)");
  ora->add_option("--rounds", oflags.rounds, "refinement rounds");
  ora->add_option("--refine-starts", oflags.refine_starts, "grid points refined");
  ora->add_option("--multistart", oflags.multistart, "use multistart local search with this many starts");

  auto* cmp = app.add_subcommand("compare", "convex solve against the grid oracle");
  add_common(cmp, common);
  cmp->add_option("--steps", oflags.steps, "grid points per axis (0 picks from budget)");
  cmp->add_option("--rounds", oflags.rounds, "refinement rounds");
  cmp->add_option("--refine-starts", oflags.refine_starts, "grid points refined");

  std::string sizes = "1:20,10:20,100:20,960:20";
  int bench_seeds = 3;
  auto* ben = app.add_subcommand("bench", "time solve_cvx over instance sizes");
  add_common(ben, common, false);
  ben->add_option("--sizes", sizes, "comma-separated n:K pairs");
  ben->add_option("--seeds", bench_seeds, "instances per size")->check(CLI::PositiveNumber);

  int intervals = 1;
  std::string prices_path;
  auto* sim = app.add_subcommand("simulate", "receding-horizon settlement");
  add_common(sim, common);
  sim->add_option("-T,--intervals", intervals, "market intervals")->check(CLI::PositiveNumber);
  sim->add_option("--prices", prices_path, "CSV interval,k,price")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      gen_cfg.hypothesis_mode = !no_hypothesis;
      return cmd_gen(common, gen_cfg);
    }
    if (*val) return cmd_validate(common);
    if (*red) return cmd_reduce(common, dense);
    if (*sol) return cmd_solve(common);
    if (*ora) return cmd_oracle(common, oflags);
    if (*cmp) return cmd_compare(common, oflags);
    if (*ben) return cmd_bench(common, sizes, bench_seeds);
    if (*sim) return cmd_simulate(common, intervals, prices_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
