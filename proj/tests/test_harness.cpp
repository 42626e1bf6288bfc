#include "rtm/harness.hpp"
#include "rtm/io.hpp"
#include "rtm/llp_solver.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rtm;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rtm_test_" + name);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIo;
}

}  // namespace

TEST(Generate, Deterministic) {
  GeneratorConfig cfg;
  cfg.n = 2;
  cfg.K = 3;
  cfg.seed = 7;
  const std::string a = to_json(generate(cfg)).dump(2);
  const std::string b = to_json(generate(cfg)).dump(2);
  EXPECT_EQ(a, b);
  cfg.seed = 8;
  EXPECT_NE(a, to_json(generate(cfg)).dump(2));
}

TEST(Generate, HypothesisModeShape) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    GeneratorConfig cfg;
    cfg.n = 3;
    cfg.K = 4;
    cfg.seed = seed;
    for (const ProsumerProfile& pr : generate(cfg).prosumers) {
      double total = 0;
      for (int k = 0; k < 4; ++k) {
        ASSERT_EQ(pr.h_lb[k], 0.0);
        ASSERT_GE(pr.h_ub[k], pr.s[k]);
        ASSERT_GT(pr.h0[k], 0.0);
        ASSERT_GE(pr.q[k], 0.5);
        ASSERT_LE(pr.q[k], 2.0);
        total += pr.h0[k];
      }
      ASSERT_NEAR(total, pr.h_tot, 1e-12);
    }
  }
}

TEST(GridSteps, Budget) {
  EXPECT_EQ(grid_steps_for_budget(2, 2e5), 61);
  EXPECT_EQ(grid_steps_for_budget(4, 2e5), 21);
  EXPECT_EQ(grid_steps_for_budget(6, 2e5), 7);
  EXPECT_EQ(grid_steps_for_budget(40, 2e5), 2);
}

TEST(Io, MarketDataRoundTrip) {
  GeneratorConfig cfg;
  cfg.n = 3;
  cfg.K = 5;
  cfg.seed = 3;
  const MarketData data = generate(cfg);
  const auto path = temp_file("instance.json");
  write_json(path, to_json(data));
  const MarketData back = read_market_data(path);
  EXPECT_EQ(to_json(back).dump(), to_json(data).dump());
  std::filesystem::remove(path);
}

TEST(Io, CheckedInFixture) {
  const MarketData d = read_market_data(rtm::test::fixture_path("fixture_a.json"));
  EXPECT_EQ(to_json(d).dump(), to_json(rtm::test::fixture_a_data()).dump());
}

TEST(Io, ParseErrorsCarryContext) {
  const auto path = temp_file("broken.json");
  {
    std::ofstream out(path);
    out << "{\n  \"K\": 2,\n  \"grid_prices\": [1, \n}\n";
  }
  try {
    read_market_data(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
  }
  std::filesystem::remove(path);
  EXPECT_EQ(code_of([] { read_market_data("/nonexistent/instance.json"); }), ErrorCode::kIo);
}

TEST(Io, RejectsBadValues) {
  Json j = to_json(rtm::test::fixture_a_data());
  Json neg = j;
  neg["prosumers"][0]["q"][1] = -1.0;
  EXPECT_EQ(code_of([&] { market_data_from_json(neg); }), ErrorCode::kParse);
  Json short_arr = j;
  short_arr["prosumers"][0]["s"] = Json::array({1.0});
  EXPECT_EQ(code_of([&] { market_data_from_json(short_arr); }), ErrorCode::kParse);
  Json missing = j;
  missing["prosumers"][0].erase("h_tot");
  EXPECT_EQ(code_of([&] { market_data_from_json(missing); }), ErrorCode::kParse);
  Json nan = j;
  nan["grid_prices"][0] = std::nan("");
  EXPECT_EQ(code_of([&] { market_data_from_json(nan); }), ErrorCode::kParse);
}

TEST(Io, SolutionRoundTrip) {
  const MarketInstance inst = rtm::test::fixture_a();
  const ReducedModel red = compute_reduced(inst);
  BilevelSolution sol = solve_cvx(red, inst);
  sol.certified = true;
  sol.consistency = 0.0;
  const Json j = to_json(sol);
  EXPECT_EQ(to_json(bilevel_solution_from_json(Json::parse(j.dump()))).dump(), j.dump());

  const LlpSolution llp = solve_llp(inst, Vector::Ones(2));
  const Json lj = to_json(llp);
  EXPECT_EQ(to_json(llp_solution_from_json(Json::parse(lj.dump()))).dump(), lj.dump());
}

TEST(Bench, CsvRoundTrip) {
  const auto records = run_bench({{1, 4}, {2, 4}}, {0, 1});
  ASSERT_EQ(records.size(), 8u);
  std::stringstream ss;
  write_bench_csv(ss, records);
  const auto back = read_bench_csv(ss);
  ASSERT_EQ(back.size(), records.size());
  std::stringstream again;
  write_bench_csv(again, back);
  std::stringstream first;
  write_bench_csv(first, records);
  EXPECT_EQ(first.str(), again.str());
}

TEST(Bench, SlopeOfSyntheticRecords) {
  std::vector<BenchRecord> recs;
  for (int m : {10, 100, 1000}) {
    BenchRecord r;
    r.m = m;
    r.solver = "cvx";
    r.wall_time = 1e-6 * m;
    recs.push_back(r);
  }
  EXPECT_NEAR(loglog_slope(recs, "cvx"), 1.0, 1e-9);
}

TEST(Bench, SmallSizesWithinBudget) {
  const auto records = run_bench({{1, 20}, {10, 20}, {100, 20}}, {0, 1, 2});
  for (const auto& r : records) EXPECT_LT(r.wall_time, 10.0);
}

TEST(PriceSeries, ParsesWithAndWithoutHeader) {
  std::istringstream a("interval,k,price\n0,0,1.5\n0,1,2\n");
  const PriceSeries pa = read_price_series(a);
  EXPECT_EQ(pa.at(0).at(1), 2.0);
  std::istringstream b("1,2,0.25\n");
  EXPECT_EQ(read_price_series(b).at(1).at(2), 0.25);
  std::istringstream bad("0,zero,1\n");
  EXPECT_THROW(read_price_series(bad), Error);
}

TEST(Simulate, StationaryInputsGiveIdenticalSettlements) {
  ProsumerProfile pr{{1, 1, 1}, {1, 1, 1}, {0, 0, 0}, {3, 3, 3}, 3, {2, 2, 2}};
  MarketData data;
  data.K = 3;
  data.grid_prices = {1, 1, 1};
  data.prosumers = {pr, pr};
  PriceSeries prices;
  for (int t = 0; t < 3; ++t) {
    for (int k = 0; k < 3; ++k) prices[t][k] = 1.0;
  }
  const auto out = run_simulate(data, 3, prices);
  ASSERT_EQ(out.size(), 3u);
  for (std::size_t t = 1; t < 3; ++t) {
    EXPECT_LE((out[t].x - out[0].x).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((out[t].y - out[0].y).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((out[t].demand - out[0].demand).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(out[t].phi, out[0].phi, 1e-8);
  }
}

TEST(Simulate, MissingIntervalIsAnError) {
  PriceSeries prices;
  prices[0][0] = 1;
  prices[0][1] = 1;
  EXPECT_EQ(code_of([&] { run_simulate(rtm::test::fixture_a_data(), 2, prices); }), ErrorCode::kParse);
}

TEST(Compare, FixtureA) {
  const CompareReport rep = run_compare(rtm::test::fixture_a());
  EXPECT_TRUE(rep.pass);
  EXPECT_LE(rep.gap, 1e-3);
  EXPECT_NEAR(rep.convex.phi, -2.0, 1e-8);
  EXPECT_EQ(to_json(rep)["result"], "PASS");
}

TEST(Compare, TwoByThreeSeedSeven) {
  GeneratorConfig cfg;
  cfg.n = 2;
  cfg.K = 3;
  cfg.seed = 7;
  for (BoundMode mode : {BoundMode::kBoth, BoundMode::kLowerOnly, BoundMode::kUpperOnly}) {
    CompareOptions opt;
    opt.mode = mode;
    const CompareReport rep = run_compare(assemble(generate(cfg)), opt);
    EXPECT_TRUE(rep.pass) << to_string(mode);
    EXPECT_GE(rep.oracle.best_phi, rep.convex.phi - 1e-6);
  }
}
