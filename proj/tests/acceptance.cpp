// Acceptance sweep: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include "rtm/bilevel_oracle.hpp"
#include "rtm/cvx_solver.hpp"
#include "rtm/harness.hpp"
#include "rtm/llp_solver.hpp"
#include "rtm/reduction.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace rtm;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

constexpr std::pair<int, int> kSweepSizes[] = {{1, 2}, {1, 3}, {2, 2}, {1, 4}, {2, 3}};

MarketInstance sweep_instance(std::uint64_t seed) {
  const auto [n, K] = kSweepSizes[seed % std::size(kSweepSizes)];
  GeneratorConfig cfg;
  cfg.n = n;
  cfg.K = K;
  cfg.seed = seed;
  return assemble(generate(cfg));
}

Outcome compare_sweep(BoundMode mode, int count, std::uint64_t first_seed) {
  int failures = 0;
  int hypothesis_misses = 0;
  double worst_ratio = 0.0;
  double worst_response = 0.0;
  double worst_undercut = 0.0;  // convex φ minus oracle φ, positive if oracle is lower
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = first_seed + static_cast<std::uint64_t>(i);
    const MarketInstance inst = sweep_instance(seed);
    const ReducedModel red = compute_reduced(inst);
    if (!validate(inst, &red).hypotheses_hold(mode)) ++hypothesis_misses;
    CompareOptions opt;
    opt.mode = mode;
    const CompareReport rep = run_compare(inst, opt);
    worst_ratio = std::max(worst_ratio, rep.gap / rep.allowed_gap);
    worst_response = std::max(worst_response, rep.certificate.response_residual);
    worst_undercut = std::max(worst_undercut, rep.convex.phi - rep.oracle.best_phi);
    const bool ok = rep.pass && rep.certificate.response_residual <= 1e-6;
    if (!ok) {
      ++failures;
      std::printf("  seed %llu m=%d phi_cvx=%.9g phi_oracle=%.9g cert=%d\n", static_cast<unsigned long long>(seed),
                  inst.m(), rep.convex.phi, rep.oracle.best_phi, rep.certificate.passed ? 1 : 0);
    }
  }
  std::ostringstream os;
  os << count << " instances, " << failures << " failures, hypothesis misses " << hypothesis_misses
     << ", worst gap/allowed " << worst_ratio << ", worst response residual " << worst_response
     << ", max (phi_cvx - phi_oracle) " << worst_undercut;
  return {failures == 0 && hypothesis_misses == 0, os.str()};
}

Outcome criterion1() { return compare_sweep(BoundMode::kBoth, 200, 0); }

Outcome criterion2() {
  const Outcome lower = compare_sweep(BoundMode::kLowerOnly, 100, 1000);
  const Outcome upper = compare_sweep(BoundMode::kUpperOnly, 100, 2000);
  return {lower.pass && upper.pass, "lower_only: " + lower.detail + "; upper_only: " + upper.detail};
}

struct Draw {
  Matrix R;
  Matrix F;
  Vector c;
  Vector d;
};

Matrix gaussian(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> g;
  return Matrix::NullaryExpr(rows, cols, [&] { return g(rng); });
}

Draw random_draw(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dim(2, 12);
  const int m = dim(rng);
  const int k = std::uniform_int_distribution<int>(1, m - 1)(rng);
  const Matrix A = gaussian(rng, m, m);
  Draw d;
  d.R = A * A.transpose() / m + 0.1 * Matrix::Identity(m, m);
  d.F = gaussian(rng, k, m);
  d.c = gaussian(rng, m, 1);
  d.d = gaussian(rng, k, 1);
  return d;
}

Draw structured_draw(std::mt19937_64& rng) {
  const int n = std::uniform_int_distribution<int>(1, 5)(rng);
  const int K = std::uniform_int_distribution<int>(1, 8)(rng);
  std::uniform_real_distribution<double> log_q(std::log(0.1), std::log(10.0));
  Draw d;
  Vector q(n * K);
  for (int j = 0; j < n * K; ++j) q(j) = std::exp(log_q(rng));
  d.R = q.asDiagonal();
  d.F = AggregationOperator(n, K).dense();
  d.c = gaussian(rng, n * K, 1);
  d.d = gaussian(rng, n, 1);
  return d;
}

struct CertificateSweep {
  int psd_failures = 0;
  int mmatrix_failures = 0;
  double worst_annihilation = 0.0;
  double worst_equality = 0.0;
};

const CertificateSweep& certificate_sweep() {
  static const CertificateSweep sweep = [] {
    CertificateSweep s;
    std::mt19937_64 rng(20240601);
    auto record = [&](const ReducedModel& red, const Draw& d) {
      const ReductionIdentities ids = reduction_identities(red, d.F, d.d);
      s.worst_annihilation = std::max(s.worst_annihilation, ids.annihilation);
      s.worst_equality = std::max(s.worst_equality, ids.equality);
    };
    for (int i = 0; i < 1000; ++i) {
      const Draw d = random_draw(rng);
      const ReducedModel red = compute_reduced(d.R, d.F, d.c, d.d, ReductionPath::kDense);
      if (!check_psd(red.M).passed) ++s.psd_failures;
      record(red, d);
    }
    for (int i = 0; i < 1000; ++i) {
      const Draw d = structured_draw(rng);
      // Both paths must certify; the dense one does not know the structure.
      for (ReductionPath path : {ReductionPath::kDense, ReductionPath::kBlock}) {
        const ReducedModel red = compute_reduced(d.R, d.F, d.c, d.d, path);
        if (!check_mmatrix(red.M).passed) ++s.mmatrix_failures;
        record(red, d);
      }
    }
    return s;
  }();
  return sweep;
}

Outcome criterion3() {
  const CertificateSweep& s = certificate_sweep();
  std::ostringstream os;
  os << "1000 general draws, " << s.psd_failures << " PSD failures; 1000 structured draws, " << s.mmatrix_failures
     << " M-matrix failures";
  return {s.psd_failures == 0 && s.mmatrix_failures == 0, os.str()};
}

Outcome criterion4() {
  const CertificateSweep& s = certificate_sweep();
  std::ostringstream os;
  os << "max |M F^T| = " << s.worst_annihilation << ", max |F r - d| = " << s.worst_equality;
  return {s.worst_annihilation <= 1e-10 && s.worst_equality <= 1e-10, os.str()};
}

Outcome criterion5() {
  double worst_gap = 0.0;
  double worst_kkt = 0.0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    GeneratorConfig cfg;
    cfg.n = 1 + static_cast<int>(seed % 4);
    cfg.K = 1 + static_cast<int>((seed / 4) % 8);
    cfg.seed = 5000 + seed;
    cfg.hypothesis_mode = seed % 2 == 0;
    const MarketInstance inst = assemble(generate(cfg));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> price(0.0, 8.0);
    const Vector x = Vector::NullaryExpr(inst.m(), [&] { return price(rng); });
    const LlpSolution a = solve_llp(inst, x);
    const GeneralLlp g = GeneralLlp::from_instance(inst);
    const LlpSolution b = solve_llp_general(g, x);
    worst_gap = std::max(worst_gap, (a.y - b.y).cwiseAbs().maxCoeff());
    worst_kkt = std::max({worst_kkt, kkt_residual(inst, x, a), kkt_residual(g, x, b)});
  }

  MarketData fa;
  fa.K = 2;
  fa.grid_prices = {1, 1};
  fa.prosumers = {ProsumerProfile{{2, 2}, {1, 1}, {0, 0}, {4, 4}, 2, {1, 3}}};
  const MarketInstance inst = assemble(fa);
  double fixture_err = 0.0;
  Vector want(2);
  want << 0, 2;
  for (double t : {0.0, 1.0}) {
    fixture_err = std::max(fixture_err, (solve_llp(inst, Vector::Constant(2, t)).y - want).cwiseAbs().maxCoeff());
  }
  std::ostringstream os;
  os << "500 pairs: max |y_bisect - y_split| = " << worst_gap << ", max KKT residual = " << worst_kkt
     << "; fixture error = " << fixture_err;
  return {worst_gap <= 1e-7 && worst_kkt <= 1e-8 && fixture_err <= 1e-9, os.str()};
}

Outcome criterion6() {
  std::ostringstream os;
  bool ok = true;
  double worst_time = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    GeneratorConfig cfg;
    cfg.n = 200;
    cfg.K = 96;
    cfg.seed = seed;
    const MarketInstance inst = assemble(generate(cfg));
    const auto t0 = std::chrono::steady_clock::now();
    const ReducedModel red = compute_reduced(inst);
    const BilevelSolution sol = solve_cvx(red, inst);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    worst_time = std::max(worst_time, dt);
    ok = ok && dt < 10.0 && sol.status == SolveStatus::kSolved && certify_bilevel(inst, red, sol).passed;
  }
  os << "n=200 K=96 worst solve " << worst_time << " s";

  bool rejected = false;
  try {
    GeneratorConfig cfg;
    cfg.K = 7;
    const MarketInstance inst = assemble(generate(cfg));
    oracle_grid(inst, Vector::Ones(7), 3, 0);
  } catch (const Error& e) {
    rejected = e.code() == ErrorCode::kDimensionTooLarge;
  }
  ok = ok && rejected;
  os << "; oracle at m=7 " << (rejected ? "rejected" : "NOT rejected");

  const auto records = run_bench({{1, 20}, {10, 20}, {100, 20}, {960, 20}}, {0, 1, 2});
  const double slope = loglog_slope(records, "cvx");
  ok = ok && slope < 2.0;
  os << "; log-log slope over m in {20, 200, 2000, 19200} = " << slope;
  return {ok, os.str()};
}

Outcome criterion7() {
  MarketData data = read_market_data(std::string(RTM_FIXTURE_DIR) + "/fixture_a.json");
  const MarketInstance inst = assemble(data);
  const CompareReport rep = run_compare(inst);
  const BilevelSolution& s = rep.convex;
  const Vector h = reconstruct_demand(inst, s.y);
  const bool ok = rep.pass && s.x.cwiseAbs().maxCoeff() <= 1e-8 && std::abs(s.y(0)) <= 1e-8 &&
                  std::abs(s.y(1) - 2.0) <= 1e-8 && std::abs(s.phi + 2.0) <= 1e-8 &&
                  (h - Vector::Ones(2)).cwiseAbs().maxCoeff() <= 1e-8;
  std::ostringstream os;
  os << "x=(" << s.x(0) << "," << s.x(1) << ") y=(" << s.y(0) << "," << s.y(1) << ") phi=" << s.phi
     << " oracle phi=" << rep.oracle.best_phi << " h=(" << h(0) << "," << h(1) << ")";
  return {ok, os.str()};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"C1 convex vs oracle, both bounds", criterion1},
      {"C2 convex vs oracle, one-sided bounds", criterion2},
      {"C3 PSD and M-matrix certificates", criterion3},
      {"C4 reduction identities", criterion4},
      {"C5 lower-level solver agreement", criterion5},
      {"C6 scaling", criterion6},
      {"C7 fixture end to end", criterion7},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", name, out.detail.c_str(), dt);
    std::fflush(stdout);
    if (!out.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
