#include "rtm/harness.hpp"

#include "rtm/llp_solver.hpp"
#include "rtm/reduction.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace rtm {

namespace {

// Uniform draw on [0, 1) from the top 53 bits, identical on every platform.
class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}

  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double in(const Range& r) { return r.lo + (r.hi - r.lo) * unit(); }
  // (lo, hi]
  double open_low(const Range& r) { return r.hi - (r.hi - r.lo) * unit(); }

 private:
  std::mt19937_64 rng_;
};

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

MarketData generate(const GeneratorConfig& cfg) {
  if (cfg.n < 1 || cfg.K < 1) throw Error(ErrorCode::kDimensionMismatch, "generator needs n ≥ 1 and K ≥ 1");
  Draw draw(cfg.seed);
  MarketData data;
  data.K = cfg.K;
  for (int k = 0; k < cfg.K; ++k) data.grid_prices.push_back(draw.in(cfg.price));

  const auto K = static_cast<std::size_t>(cfg.K);
  for (int i = 0; i < cfg.n; ++i) {
    ProsumerProfile pr;
    pr.q.resize(K);
    pr.s.resize(K);
    pr.h0.resize(K);
    pr.h_lb.resize(K);
    pr.h_ub.resize(K);
    for (std::size_t k = 0; k < K; ++k) pr.q[k] = draw.in(cfg.q);
    do {
      for (std::size_t k = 0; k < K; ++k) pr.s[k] = draw.in(cfg.s);
    } while (sum(pr.s) <= 1e-6 && cfg.s.hi > 0.0);

    std::vector<double> raw(K);
    for (std::size_t k = 0; k < K; ++k) raw[k] = draw.open_low(cfg.h0);
    pr.h_tot = draw.in(cfg.total_fraction) * sum(pr.s);
    const double scale = pr.h_tot / sum(raw);
    for (std::size_t k = 0; k < K; ++k) pr.h0[k] = raw[k] * scale;
    // Scaling can leave the sum a few ulps away from h_tot.
    pr.h_tot = sum(pr.h0);

    for (std::size_t k = 0; k < K; ++k) {
      if (cfg.hypothesis_mode) {
        pr.h_lb[k] = 0.0;
        pr.h_ub[k] = std::max(pr.s[k], pr.h0[k]) * (1.0 + 0.5 * draw.unit());
      } else {
        pr.h_lb[k] = draw.in(cfg.lb_fraction) * pr.h0[k];
        pr.h_ub[k] = std::max(pr.h0[k], draw.in(cfg.ub_factor) * pr.s[k]);
      }
    }
    data.prosumers.push_back(std::move(pr));
  }
  return data;
}

int grid_steps_for_budget(int m, double budget, int cap) {
  const int steps = static_cast<int>(std::floor(std::pow(budget, 1.0 / std::max(1, m)) + 1e-9));
  return std::clamp(steps, 2, cap);
}

CompareReport run_compare(const MarketInstance& inst, const CompareOptions& opt) {
  CompareReport rep;
  const ReducedModel reduced = compute_reduced(inst, opt.tol);

  CvxOptions cvx_opt;
  cvx_opt.mode = opt.mode;
  cvx_opt.force = opt.force;
  cvx_opt.tol = opt.tol;
  rep.convex = solve_cvx(reduced, inst, cvx_opt);
  rep.certificate = certify_bilevel(inst, reduced, rep.convex, opt.tol);
  rep.convex.certified = rep.certificate.passed;
  rep.convex.consistency = rep.certificate.response_residual;

  OracleOptions or_opt;
  or_opt.mode = opt.mode;
  or_opt.refine_starts = opt.refine_starts;
  or_opt.threads = opt.threads;
  or_opt.tol = opt.tol;
  const int steps = opt.coarse_steps > 0 ? opt.coarse_steps : grid_steps_for_budget(inst.K, opt.grid_budget);
  rep.oracle = oracle_grid(inst, default_x_max(inst, reduced), steps, opt.refine_rounds, or_opt);

  rep.gap = std::abs(rep.convex.phi - rep.oracle.best_phi);
  rep.allowed_gap = opt.relative_gap * (1.0 + std::abs(rep.oracle.best_phi));
  rep.argmin_distance = (rep.convex.x - rep.oracle.best_x).cwiseAbs().maxCoeff();
  rep.pass = rep.gap <= rep.allowed_gap && rep.certificate.passed;
  return rep;
}

Json to_json(const CompareReport& rep) {
  Json j;
  j["result"] = rep.pass ? "PASS" : "FAIL";
  j["phi_cvx"] = rep.convex.phi;
  j["phi_oracle"] = rep.oracle.best_phi;
  j["gap"] = rep.gap;
  j["allowed_gap"] = rep.allowed_gap;
  j["argmin_distance"] = rep.argmin_distance;
  j["certificate"] = {{"passed", rep.certificate.passed},
                      {"response_residual", rep.certificate.response_residual},
                      {"objective_residual", rep.certificate.objective_residual}};
  j["convex"] = to_json(rep.convex);
  j["oracle"] = to_json(rep.oracle);
  return j;
}

std::vector<BenchRecord> run_bench(const std::vector<std::pair<int, int>>& sizes,
                                   const std::vector<std::uint64_t>& seeds) {
  using Clock = std::chrono::steady_clock;
  std::vector<BenchRecord> out;
  for (const auto& [n, K] : sizes) {
    for (std::uint64_t seed : seeds) {
      GeneratorConfig cfg;
      cfg.n = n;
      cfg.K = K;
      cfg.seed = seed;
      const MarketInstance inst = assemble(generate(cfg));

      const auto t0 = Clock::now();
      const ReducedModel reduced = compute_reduced(inst);
      const BilevelSolution sol = solve_cvx(reduced, inst);
      const auto t1 = Clock::now();
      const LlpSolution llp = solve_llp(inst, sol.x);
      const auto t2 = Clock::now();

      BenchRecord cvx{inst.m(), n, K, seed, "cvx", std::chrono::duration<double>(t1 - t0).count(), sol.iterations,
                      sol.phi, sol.primal_residual, sol.dual_residual};
      BenchRecord bis{inst.m(), n, K, seed, "llp_bisection", std::chrono::duration<double>(t2 - t1).count(),
                      llp.iterations, aggregator_cost(sol.x, llp.y, inst.p), llp.kkt_residual, llp.kkt_residual};
      out.push_back(cvx);
      out.push_back(bis);
    }
  }
  return out;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
  out << "m,n,K,seed,solver,wall_time_s,iterations,phi,primal_residual,dual_residual\n";
  out << std::setprecision(17);
  for (const auto& r : records) {
    out << r.m << ',' << r.n << ',' << r.K << ',' << r.seed << ',' << r.solver << ',' << r.wall_time << ','
        << r.iterations << ',' << r.phi << ',' << r.primal_residual << ',' << r.dual_residual << '\n';
  }
}

std::vector<BenchRecord> read_bench_csv(std::istream& in) {
  std::vector<BenchRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("m,", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) {
      throw Error(ErrorCode::kParse, "bench csv line " + std::to_string(line_no) + ": expected 10 columns");
    }
    try {
      BenchRecord r;
      r.m = std::stoi(cells[0]);
      r.n = std::stoi(cells[1]);
      r.K = std::stoi(cells[2]);
      r.seed = std::stoull(cells[3]);
      r.solver = cells[4];
      r.wall_time = std::stod(cells[5]);
      r.iterations = std::stoi(cells[6]);
      r.phi = std::stod(cells[7]);
      r.primal_residual = std::stod(cells[8]);
      r.dual_residual = std::stod(cells[9]);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kParse, "bench csv line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return out;
}

double loglog_slope(const std::vector<BenchRecord>& records, const std::string& solver) {
  std::map<int, std::vector<double>> by_m;
  for (const auto& r : records) {
    if (r.solver == solver) by_m[r.m].push_back(r.wall_time);
  }
  if (by_m.size() < 2) throw Error(ErrorCode::kDimensionMismatch, "slope needs at least two sizes");
  std::vector<double> lx;
  std::vector<double> ly;
  for (auto& [m, times] : by_m) {
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];
    lx.push_back(std::log(static_cast<double>(m)));
    ly.push_back(std::log(std::max(median, 1e-9)));
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  return num / den;
}

PriceSeries read_price_series(std::istream& in) {
  PriceSeries series;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a;
    std::string b;
    std::string c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c)) {
      throw Error(ErrorCode::kParse, "price series line " + std::to_string(line_no) + ": expected interval,k,price");
    }
    if (line_no == 1 && a == "interval") continue;
    try {
      const double price = std::stod(c);
      if (!std::isfinite(price)) throw std::invalid_argument("non-finite");
      series[std::stoi(a)][std::stoi(b)] = price;
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kParse, "price series line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return series;
}

namespace {

// Euclidean projection of v onto {Σ h = total, lo ≤ h ≤ hi} via a shift
// h = clip(v + τ).
std::vector<double> project_onto_total(const std::vector<double>& v, const std::vector<double>& lo,
                                       const std::vector<double>& hi, double total) {
  auto at = [&](double tau) {
    std::vector<double> h(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) h[k] = std::clamp(v[k] + tau, lo[k], hi[k]);
    return h;
  };
  double a = -1.0;
  double b = 1.0;
  while (sum(at(a)) > total) a *= 2.0;
  while (sum(at(b)) < total) b *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    if (sum(at(mid)) < total) {
      a = mid;
    } else {
      b = mid;
    }
  }
  return at(0.5 * (a + b));
}

template <typename T>
std::vector<T> tail(const std::vector<T>& v, std::size_t from) {
  return std::vector<T>(v.begin() + static_cast<std::ptrdiff_t>(from), v.end());
}

}  // namespace

std::vector<Settlement> run_simulate(const MarketData& data, int intervals, const PriceSeries& prices, bool force) {
  const int K = data.K;
  if (intervals < 1 || intervals > K) {
    throw Error(ErrorCode::kDimensionMismatch, "interval count must be between 1 and K");
  }
  const int n = static_cast<int>(data.prosumers.size());
  std::vector<double> consumed(n, 0.0);
  std::vector<Settlement> out;

  for (int t = 0; t < intervals; ++t) {
    const auto from = static_cast<std::size_t>(t);
    auto row = prices.find(t);
    std::vector<double> grid;
    for (int k = t; k < K; ++k) {
      if (row == prices.end() || !row->second.contains(k)) {
        throw Error(ErrorCode::kParse,
                    "price series has no entry for interval " + std::to_string(t) + ", step " + std::to_string(k));
      }
      grid.push_back(row->second.at(k));
    }

    std::vector<ProsumerProfile> profiles;
    for (int i = 0; i < n; ++i) {
      const ProsumerProfile& full = data.prosumers[i];
      ProsumerProfile pr;
      pr.q = tail(full.q, from);
      pr.s = tail(full.s, from);
      pr.h_lb = tail(full.h_lb, from);
      pr.h_ub = tail(full.h_ub, from);
      pr.h_tot = full.h_tot - consumed[i];
      pr.h0 = tail(full.h0, from);
      const double pref = sum(pr.h0);
      bool inside = pref > 0.0;
      if (inside) {
        for (std::size_t k = 0; k < pr.h0.size(); ++k) {
          pr.h0[k] *= pr.h_tot / pref;
          inside = inside && pr.h0[k] >= pr.h_lb[k] && pr.h0[k] <= pr.h_ub[k];
        }
      }
      if (!inside) pr.h0 = project_onto_total(tail(full.h0, from), pr.h_lb, pr.h_ub, pr.h_tot);
      pr.h_tot = sum(pr.h0);
      profiles.push_back(std::move(pr));
    }

    const MarketInstance inst = assemble(profiles, grid);
    const ReducedModel reduced = compute_reduced(inst);
    CvxOptions opt;
    opt.force = force;
    const BilevelSolution sol = solve_cvx(reduced, inst, opt);
    const Vector demand = inst.s - sol.y;

    Settlement st;
    st.interval = t;
    st.grid_price = grid.front();
    st.hypotheses_hold = validate(inst, &reduced).hypotheses_hold(BoundMode::kBoth);
    st.x.resize(n);
    st.y.resize(n);
    st.demand.resize(n);
    const int L = inst.K;
    for (int i = 0; i < n; ++i) {
      const int j = i * L;
      st.x(i) = sol.x(j);
      st.y(i) = sol.y(j);
      st.demand(i) = demand(j);
      consumed[i] += demand(j);
      st.phi += (sol.x(j) - inst.p(j)) * sol.y(j);
    }
    out.push_back(std::move(st));
  }
  return out;
}

Json to_json(const std::vector<Settlement>& settlements) {
  Json arr = Json::array();
  for (const auto& s : settlements) {
    arr.push_back({{"interval", s.interval},
                   {"grid_price", s.grid_price},
                   {"phi", s.phi},
                   {"x", vector_to_json(s.x)},
                   {"y", vector_to_json(s.y)},
                   {"demand", vector_to_json(s.demand)},
                   {"hypotheses_hold", s.hypotheses_hold}});
  }
  return arr;
}

}  // namespace rtm
