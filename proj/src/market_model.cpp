#include "rtm/market_model.hpp"

#include "rtm/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace rtm {

namespace {

std::string profile_field(std::size_t index, std::string_view field) {
  std::ostringstream os;
  os << "prosumer " << index << " field '" << field << "'";
  return os.str();
}

[[noreturn]] void invalid(std::size_t index, std::string_view field, std::string_view why) {
  throw Error(ErrorCode::kInvalidProfile, profile_field(index, field) + ": " + std::string(why));
}

}  // namespace

Vector AggregationOperator::apply(const Vector& y) const {
  if (y.size() != cols()) throw Error(ErrorCode::kDimensionMismatch, "E y: wrong vector length");
  Vector out(n_);
  for (int i = 0; i < n_; ++i) out(i) = -y.segment(i * K_, K_).sum();
  return out;
}

Vector AggregationOperator::apply_transpose(const Vector& lam) const {
  if (lam.size() != n_) throw Error(ErrorCode::kDimensionMismatch, "Eᵀ λ: wrong vector length");
  Vector out(cols());
  for (int i = 0; i < n_; ++i) out.segment(i * K_, K_).setConstant(-lam(i));
  return out;
}

Matrix AggregationOperator::dense() const {
  Matrix F = Matrix::Zero(n_, cols());
  for (int i = 0; i < n_; ++i) F.block(i, i * K_, 1, K_).setConstant(-1.0);
  return F;
}

Vector MarketInstance::preferred_demand() const {
  return (c.array() / q.array()).matrix() + s;
}

Vector MarketInstance::demand_lower_bound() const { return s - u; }

void check_profile(const ProsumerProfile& pr, std::size_t index, const Tolerances& tol) {
  const std::size_t K = pr.q.size();
  if (K == 0) invalid(index, "q", "horizon must be at least one step");
  const std::pair<std::string_view, const std::vector<double>*> fields[] = {
      {"q", &pr.q}, {"h0", &pr.h0}, {"h_lb", &pr.h_lb}, {"h_ub", &pr.h_ub}, {"s", &pr.s}};
  for (const auto& [name, values] : fields) {
    if (values->size() != K) {
      throw Error(ErrorCode::kDimensionMismatch, profile_field(index, name) + ": length differs from q");
    }
    for (double v : *values) {
      if (!std::isfinite(v)) invalid(index, name, "non-finite entry");
    }
  }
  if (!std::isfinite(pr.h_tot)) invalid(index, "h_tot", "non-finite");

  for (std::size_t k = 0; k < K; ++k) {
    if (!(pr.q[k] > 0.0)) invalid(index, "q", "weights must be positive");
    if (pr.s[k] < 0.0) invalid(index, "s", "generation must be nonnegative");
    if (pr.h_lb[k] < 0.0) invalid(index, "h_lb", "lower bound must be nonnegative");
    if (pr.h_lb[k] > pr.h_ub[k]) invalid(index, "h_ub", "upper bound below lower bound");
    if (pr.h0[k] < pr.h_lb[k] || pr.h0[k] > pr.h_ub[k]) {
      invalid(index, "h0", "preferred demand outside [h_lb, h_ub]");
    }
  }
  const double total = std::accumulate(pr.h0.begin(), pr.h0.end(), 0.0);
  if (std::abs(total - pr.h_tot) > tol.feasibility * (1.0 + std::abs(pr.h_tot))) {
    std::ostringstream os;
    os << "sum of preferred demand " << total << " differs from h_tot " << pr.h_tot;
    invalid(index, "h_tot", os.str());
  }
}

MarketInstance assemble(std::span<const ProsumerProfile> profiles, std::span<const double> grid_prices,
                        const Tolerances& tol) {
  if (profiles.empty()) throw Error(ErrorCode::kDimensionMismatch, "no prosumers");
  const std::size_t K = profiles.front().horizon();
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].horizon() != K) {
      throw Error(ErrorCode::kDimensionMismatch, profile_field(i, "q") + ": horizon differs from prosumer 0");
    }
  }
  if (grid_prices.size() != K) {
    throw Error(ErrorCode::kDimensionMismatch, "grid_prices length differs from the horizon");
  }
  for (double v : grid_prices) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidProfile, "grid_prices: non-finite entry");
  }
  for (std::size_t i = 0; i < profiles.size(); ++i) check_profile(profiles[i], i, tol);

  MarketInstance inst;
  inst.n = static_cast<int>(profiles.size());
  inst.K = static_cast<int>(K);
  const int m = inst.m();
  inst.q.resize(m);
  inst.c.resize(m);
  inst.ell.resize(m);
  inst.u.resize(m);
  inst.p.resize(m);
  inst.s.resize(m);
  inst.d.resize(inst.n);
  inst.h_tot.resize(inst.n);

  for (int i = 0; i < inst.n; ++i) {
    const ProsumerProfile& pr = profiles[i];
    double gen = 0.0;
    for (int k = 0; k < inst.K; ++k) {
      const int j = i * inst.K + k;
      inst.q(j) = pr.q[k];
      inst.c(j) = pr.q[k] * (pr.h0[k] - pr.s[k]);
      inst.ell(j) = pr.s[k] - pr.h_ub[k];
      inst.u(j) = pr.s[k] - pr.h_lb[k];
      inst.p(j) = grid_prices[k];
      inst.s(j) = pr.s[k];
      gen += pr.s[k];
    }
    inst.h_tot(i) = pr.h_tot;
    inst.d(i) = pr.h_tot - gen;

    const double lo = inst.ell.segment(i * inst.K, inst.K).sum();
    const double hi = inst.u.segment(i * inst.K, inst.K).sum();
    const double target = -inst.d(i);
    const double slack = tol.feasibility * (1.0 + std::abs(target));
    if (target < lo - slack || target > hi + slack) {
      std::ostringstream os;
      os << "prosumer " << i << ": required net exchange " << target << " outside [" << lo << ", " << hi << "]";
      throw Error(ErrorCode::kInfeasibleBlock, os.str());
    }
  }
  return inst;
}

MarketInstance assemble(const MarketData& data, const Tolerances& tol) {
  if (data.K != static_cast<int>(data.grid_prices.size())) {
    throw Error(ErrorCode::kDimensionMismatch, "K differs from grid_prices length");
  }
  return assemble(std::span<const ProsumerProfile>(data.prosumers), std::span<const double>(data.grid_prices), tol);
}

MarketInstance prosumer_block(const MarketInstance& inst, int i) {
  if (i < 0 || i >= inst.n) throw Error(ErrorCode::kDimensionMismatch, "prosumer index out of range");
  const int K = inst.K;
  MarketInstance b;
  b.n = 1;
  b.K = K;
  b.q = inst.q.segment(i * K, K);
  b.c = inst.c.segment(i * K, K);
  b.ell = inst.ell.segment(i * K, K);
  b.u = inst.u.segment(i * K, K);
  b.p = inst.p.segment(i * K, K);
  b.s = inst.s.segment(i * K, K);
  b.d = inst.d.segment(i, 1);
  b.h_tot = inst.h_tot.segment(i, 1);
  return b;
}

bool ValidationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const CheckResult& ValidationReport::at(std::string_view name) const {
  for (const auto& c : checks) {
    if (c.name == name) return c;
  }
  throw Error(ErrorCode::kDimensionMismatch, "no check named '" + std::string(name) + "'");
}

bool ValidationReport::hypotheses_hold(BoundMode mode) const {
  auto ok = [this](std::string_view name) {
    for (const auto& c : checks) {
      if (c.name == name) return c.passed;
    }
    return true;
  };
  switch (mode) {
    case BoundMode::kBoth:
      return ok(kCheckEllNonpositive) && ok(kCheckUNonnegative) && ok(kCheckUAboveR);
    case BoundMode::kLowerOnly:
      return ok(kCheckEllNonpositive);
    case BoundMode::kUpperOnly:
      return ok(kCheckUNonnegative) && ok(kCheckUAboveR) && ok(kCheckMMatrix);
  }
  return false;
}

namespace {

// Collects indices where slack(j) fails `good`; margin is the smallest slack.
template <typename Slack, typename Good>
CheckResult coordinate_check(std::string_view name, int count, Slack slack, Good good) {
  CheckResult res;
  res.name = std::string(name);
  res.margin = kInf;
  for (int j = 0; j < count; ++j) {
    const double v = slack(j);
    res.margin = std::min(res.margin, v);
    if (!good(v)) res.offending.push_back(j);
  }
  res.passed = res.offending.empty();
  return res;
}

}  // namespace

ValidationReport validate(const MarketInstance& inst, const ReducedModel* reduced, const Tolerances& tol) {
  ValidationReport report;
  const int m = inst.m();
  const int K = inst.K;
  auto nonneg = [](double v) { return v >= 0.0; };

  report.checks.push_back(coordinate_check(kCheckWeights, m, [&](int j) { return inst.q(j); },
                                           [](double v) { return v > 0.0; }));
  report.checks.push_back(coordinate_check(kCheckBounds, m, [&](int j) { return inst.u(j) - inst.ell(j); }, nonneg));

  const Vector h0 = inst.preferred_demand();
  report.checks.push_back(coordinate_check(
      kCheckTotal, inst.n,
      [&](int i) { return -std::abs(h0.segment(i * K, K).sum() - inst.h_tot(i)); },
      [&](double v) { return v >= -tol.feasibility * (1.0 + inst.h_tot.cwiseAbs().maxCoeff()); }));

  report.checks.push_back(coordinate_check(
      kCheckFeasible, inst.n,
      [&](int i) {
        const double target = -inst.d(i);
        return std::min(target - inst.ell.segment(i * K, K).sum(), inst.u.segment(i * K, K).sum() - target);
      },
      [&](double v) { return v >= -tol.feasibility; }));

  report.checks.push_back(coordinate_check(kCheckBounded, inst.n, [&](int i) { return -inst.d(i); },
                                           [&](double v) { return v >= -tol.feasibility; }));

  report.checks.push_back(coordinate_check(kCheckEllNonpositive, m, [&](int j) { return -inst.ell(j); }, nonneg));
  report.checks.push_back(coordinate_check(kCheckUNonnegative, m, [&](int j) { return inst.u(j); }, nonneg));

  auto strict = [&](double v) { return v > tol.strict_margin; };
  if (reduced != nullptr) {
    if (reduced->r.size() != m) throw Error(ErrorCode::kDimensionMismatch, "reduced model size differs from instance");
    report.checks.push_back(coordinate_check(kCheckUAboveR, m, [&](int j) { return inst.u(j) - reduced->r(j); }, strict));
    CheckResult mm;
    mm.name = std::string(kCheckMMatrix);
    mm.passed = reduced->cert_mmatrix.passed;
    mm.margin = -reduced->cert_mmatrix.max_offdiagonal;
    report.checks.push_back(mm);
  } else {
    // u - r equals h0 - h_lb once Σ h0 = h_tot.
    const Vector h_lb = inst.demand_lower_bound();
    report.checks.push_back(coordinate_check(kCheckUAboveR, m, [&](int j) { return h0(j) - h_lb(j); }, strict));
  }
  return report;
}

Vector reconstruct_demand(const MarketInstance& inst, const Vector& y, const Tolerances& tol) {
  if (y.size() != inst.m()) throw Error(ErrorCode::kDimensionMismatch, "response length differs from m");
  const double violation = (inst.E().apply(y) - inst.d).cwiseAbs().maxCoeff();
  if (violation > tol.equality) {
    std::ostringstream os;
    os << "|Ey - d| = " << violation;
    throw Error(ErrorCode::kEqualityViolated, os.str());
  }
  return inst.s - y;
}

NetExchange split_net_exchange(const Vector& y) {
  return {y.cwiseMax(0.0), (-y).cwiseMax(0.0)};
}

}  // namespace rtm
