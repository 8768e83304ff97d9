#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "cnnforge/engine.hpp"
#include "cnnforge/templates.hpp"
#include "test_support.hpp"

using namespace cnnforge;
using cnnforge::testing::max_abs_diff;
using cnnforge::testing::random_field;
using cnnforge::testing::random_template;

TEST(PwlOutput, LinearAndSaturatedRegions) {
  EXPECT_EQ(pwl_output(0.0), 0.0);
  EXPECT_EQ(pwl_output(0.5), 0.5);
  EXPECT_EQ(pwl_output(-0.25), -0.25);
  EXPECT_EQ(pwl_output(2.0), 1.0);
  EXPECT_EQ(pwl_output(-3.0), -1.0);
  EXPECT_EQ(pwl_output(1.0), 1.0);
  EXPECT_THROW(pwl_output(std::nan("")), ContractError);
  EXPECT_THROW(pwl_output(INFINITY), ContractError);
}

TEST(Neighborhood, InteriorCellHasNineInGridPositions) {
  GridSpec g{5, 5, 1, Boundary::zero};
  auto n = neighborhood_offsets(g, 2, 2);
  ASSERT_EQ(n.size(), 9u);
  for (const auto& c : n) {
    EXPECT_FALSE(c.virtual_cell);
    EXPECT_LE(std::max(std::abs(c.dk), std::abs(c.dl)), 1);
    EXPECT_EQ(c.row, 2 + c.dk);
    EXPECT_EQ(c.col, 2 + c.dl);
  }
}

TEST(Neighborhood, CornerWithZeroBoundaryHasFiveVirtualCells) {
  GridSpec g{4, 4, 1, Boundary::zero};
  auto n = neighborhood_offsets(g, 0, 0);
  ASSERT_EQ(n.size(), 9u);
  int virt = 0;
  for (const auto& c : n) virt += c.virtual_cell;
  EXPECT_EQ(virt, 5);
}

TEST(Neighborhood, CornerWithReplicateBoundaryRepeatsEdgeCells) {
  GridSpec g{4, 4, 1, Boundary::replicate};
  auto n = neighborhood_offsets(g, 0, 0);
  ASSERT_EQ(n.size(), 9u);
  std::set<std::pair<int, int>> distinct;
  for (const auto& c : n) {
    EXPECT_FALSE(c.virtual_cell);
    EXPECT_GE(c.row, 0);
    EXPECT_GE(c.col, 0);
    distinct.insert({c.row, c.col});
  }
  // the clamped 3x3 window of a corner covers the 2x2 corner block
  EXPECT_EQ(distinct.size(), 4u);
}

TEST(Neighborhood, LargerRadiusAndErrors) {
  GridSpec g{9, 9, 2, Boundary::zero};
  EXPECT_EQ(neighborhood_offsets(g, 4, 4).size(), 25u);
  EXPECT_THROW(neighborhood_offsets(g, 9, 0), ContractError);
  EXPECT_THROW(neighborhood_offsets(g, 0, -1), ContractError);
  EXPECT_THROW(neighborhood_offsets(GridSpec{0, 3, 1, Boundary::zero}, 0, 0), ContractError);
}

TEST(CellDerivative, SingleCellTerms) {
  IntegrationConfig cfg;
  TemplateSet t;
  CellField x(1, 1, 2.0), u(1, 1, 0.0);
  EXPECT_DOUBLE_EQ(cell_derivative(x, u, t, cfg)(0, 0), -2.0);

  t.bias = 1.0;
  EXPECT_DOUBLE_EQ(cell_derivative(CellField(1, 1, 0.0), u, t, cfg)(0, 0), 1.0);

  TemplateSet ff;
  ff.b[4] = 1.0;
  EXPECT_DOUBLE_EQ(cell_derivative(CellField(1, 1, 0.0), CellField(1, 1, 0.5), ff, cfg)(0, 0), 0.5);
}

TEST(CellDerivative, CapacitanceAndLeakResistance) {
  IntegrationConfig cfg;
  cfg.capacitance = 2.0;
  cfg.r_x = 4.0;
  TemplateSet t;
  t.bias = 1.0;
  // (1/C)(-x/R + I) = 0.5 * (-2/4 + 1)
  EXPECT_DOUBLE_EQ(cell_derivative(CellField(1, 1, 2.0), CellField(1, 1, 0.0), t, cfg)(0, 0), 0.25);
}

TEST(CellDerivative, NonlinearTemplateUsesOutputDifferences) {
  IntegrationConfig cfg;
  TemplateSet t;
  t.d[5] = 1.0;  // right neighbour
  CellField x(1, 2);
  x(0, 0) = 0.2;
  x(0, 1) = 3.0;  // y = 1
  CellField u(1, 2, 0.0);
  const double z = 1.0 - 0.2;
  t.d_nl = Nonlinearity::identity;
  EXPECT_NEAR(cell_derivative(x, u, t, cfg)(0, 0), -0.2 + z, 1e-15);
  t.d_nl = Nonlinearity::cubic_diff;
  EXPECT_NEAR(cell_derivative(x, u, t, cfg)(0, 0), -0.2 + z * z * z, 1e-15);
  t.d_nl = Nonlinearity::pwl_diff;
  x(0, 0) = -3.0;  // difference 2 saturates to 1
  EXPECT_NEAR(cell_derivative(x, u, t, cfg)(0, 0), 3.0 + 1.0, 1e-15);
}

TEST(CellDerivative, RejectsMismatchedShapes) {
  EXPECT_THROW(cell_derivative(CellField(2, 2), CellField(2, 3), TemplateSet{}, IntegrationConfig{}), ContractError);
}

TEST(SteadyStateBound, FormulaAndPreconditions) {
  IntegrationConfig cfg;
  TemplateSet t;
  EXPECT_DOUBLE_EQ(steady_state_bound(t, cfg), 1.0);
  t.b.fill(1.0 / 9.0);
  EXPECT_NEAR(steady_state_bound(t, cfg), 2.0, 1e-15);
  TemplateSet c;
  c.a[4] = 2.0;
  c.bias = 0.5;
  EXPECT_DOUBLE_EQ(steady_state_bound(c, cfg), 3.5);
  c.cst[0] = 0.1;
  EXPECT_THROW(steady_state_bound(c, cfg), ContractError);
  TemplateSet d;
  d.d[3] = -1.0;
  EXPECT_THROW(steady_state_bound(d, cfg), ContractError);
}

TEST(RunTransient, LeakDecayMatchesClosedForm) {
  Rng rng(3);
  const CellField x0 = random_field(rng, 6, 7, -3.0, 3.0);
  const CellField u = random_field(rng, 6, 7);
  TemplateSet zero;
  zero.t_final = 5.0;
  IntegrationConfig cfg;
  cfg.dt = 0.01;
  cfg.checkpoint_times = {0.5, 1.0, 2.0, 3.7, 5.0};
  auto r = run_transient(u, x0, zero, cfg);
  ASSERT_EQ(r.outputs.size(), 5u);
  for (const auto& cp : r.outputs) {
    for (std::size_t q = 0; q < x0.size(); ++q)
      EXPECT_NEAR(cp.y.values()[q], pwl_output(x0.values()[q] * std::exp(-cp.time)), 1e-6);
  }
  for (std::size_t q = 0; q < x0.size(); ++q)
    EXPECT_NEAR(r.final_state.values()[q], x0.values()[q] * std::exp(-5.0), 1e-6);
}

TEST(RunTransient, LeakTimeConstantScalesWithRC) {
  TemplateSet zero;
  zero.t_final = 2.0;
  IntegrationConfig cfg;
  cfg.dt = 0.01;
  cfg.capacitance = 2.0;
  cfg.r_x = 0.5;  // tau = 1
  cfg.checkpoint_times = {2.0};
  auto r = run_transient(CellField(1, 1), CellField(1, 1, 0.8), zero, cfg);
  EXPECT_NEAR(r.final_state(0, 0), 0.8 * std::exp(-2.0), 1e-7);
}

TEST(RunTransient, LocalMeanConvergesToConstant) {
  const double c = 0.4;
  TemplateSet mean = builtin_oracles().entries[2];
  mean.t_final = 12.0;
  IntegrationConfig cfg;
  cfg.boundary = Boundary::replicate;  // constant field stays constant up to the border
  auto r = run_transient(CellField(8, 8, c), mean, cfg);
  for (double v : r.outputs.back().y.values()) EXPECT_NEAR(v, pwl_output(c), 1e-4);
}

TEST(RunTransient, IdentityPassReproducesInput) {
  Rng rng(11);
  const CellField u = random_field(rng, 10, 9);
  TemplateSet id = builtin_oracles().entries[1];
  id.t_final = 10.0;
  auto r = run_transient(u, CellField(10, 9, 0.0), id, IntegrationConfig{});
  EXPECT_LE(max_abs_diff(r.outputs.back().y, u), 1e-3);
}

TEST(RunTransient, BiasDriveSaturates) {
  TemplateSet drive = builtin_oracles().entries[3];
  drive.t_final = 10.0;
  auto r = run_transient(CellField(5, 5, 0.0), CellField(5, 5, 0.0), drive, IntegrationConfig{});
  for (double v : r.final_state.values()) EXPECT_NEAR(v, 1.0, 1e-3);
  for (double v : r.outputs.back().y.values()) EXPECT_NEAR(v, 1.0, 1e-3);
}

TEST(RunTransient, OutputsStayInRangeAndOneEntryPerCheckpoint) {
  Rng rng(5);
  IntegrationConfig cfg;
  cfg.checkpoint_times = {0.3, 0.6, 0.9};
  for (int trial = 0; trial < 30; ++trial) {
    TemplateSet t = random_template(rng, 1.0, 0.9);
    auto u = random_field(rng, 7, 7);
    auto r = run_transient(u, t, cfg);
    ASSERT_EQ(r.outputs.size(), 3u);
    for (const auto& cp : r.outputs)
      for (double v : cp.y.values()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
      }
  }
}

TEST(RunTransient, CheckpointsBeforeTFinalStillIntegrateToTheEnd) {
  TemplateSet zero;
  zero.t_final = 2.0;
  IntegrationConfig cfg;
  cfg.dt = 0.01;
  cfg.checkpoint_times = {0.5};
  auto r = run_transient(CellField(1, 1), CellField(1, 1, 1.0), zero, cfg);
  ASSERT_EQ(r.outputs.size(), 1u);
  EXPECT_NEAR(r.final_state(0, 0), std::exp(-2.0), 1e-8);
}

TEST(RunTransient, EulerConvergesToRk4AtFirstOrder) {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    TemplateSet t = random_template(rng, 0.5, 2.0);
    auto u = random_field(rng, 8, 8);
    IntegrationConfig rk;
    rk.dt = 0.005;
    auto a = run_transient(u, t, rk);
    IntegrationConfig eu = rk;
    eu.method = Method::euler;
    eu.dt = 0.002;
    const double coarse = max_abs_diff(a.final_state, run_transient(u, t, eu).final_state);
    eu.dt = 0.001;
    const double fine = max_abs_diff(a.final_state, run_transient(u, t, eu).final_state);
    EXPECT_LE(fine, 5e-2) << "trial " << trial;
    EXPECT_NEAR(coarse / fine, 2.0, 0.25) << "trial " << trial;
  }
}

TEST(RunTransient, DeterministicBitForBit) {
  Rng rng(8);
  TemplateSet t = random_template(rng, 1.0, 2.5);
  auto u = random_field(rng, 16, 12);
  auto a = run_transient(u, t, IntegrationConfig{});
  auto b = run_transient(u, t, IntegrationConfig{});
  EXPECT_EQ(a.final_state, b.final_state);
  EXPECT_EQ(a.outputs.back().y, b.outputs.back().y);
}

// Equality of shifted responses on cells whose dependency cone stays inside
// the grid: each derivative evaluation widens the cone by one cell.
static void check_shift_invariance(Method method, int steps, Boundary boundary) {
  Rng rng(77);
  const int n = 30, s1 = 2, s2 = 3;
  TemplateSet t = random_template(rng, 0.6);
  IntegrationConfig cfg;
  cfg.method = method;
  cfg.boundary = boundary;
  cfg.dt = 0.05;
  t.t_final = cfg.dt * steps;
  CellField u(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) u(i, j) = rng.uniform(-1, 1);
  CellField v(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) v(i, j) = (i - s1 >= 0 && j - s2 >= 0) ? u(i - s1, j - s2) : 0.0;
  auto ru = run_transient(u, t, cfg);
  auto rv = run_transient(v, t, cfg);
  const int cone = steps * (method == Method::rk4 ? 4 : 1);
  int checked = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int pi = i - s1, pj = j - s2;
      auto inside = [&](int a, int b) { return a - cone >= 0 && b - cone >= 0 && a + cone < n && b + cone < n; };
      if (pi < 0 || pj < 0 || !inside(i, j) || !inside(pi, pj)) continue;
      EXPECT_NEAR(rv.final_state(i, j), ru.final_state(pi, pj), 1e-9);
      ++checked;
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(RunTransient, SpaceInvarianceSingleStep) {
  check_shift_invariance(Method::euler, 1, Boundary::zero);
  check_shift_invariance(Method::rk4, 1, Boundary::zero);
}

TEST(RunTransient, SpaceInvarianceSeveralSteps) {
  check_shift_invariance(Method::euler, 4, Boundary::zero);
  check_shift_invariance(Method::rk4, 2, Boundary::replicate);
}

TEST(RunTransient, UnstableStateCouplingDiverges) {
  TemplateSet t;
  t.cst[4] = 12.0;
  t.t_final = 5.0;
  try {
    run_transient(CellField(4, 4, 0.5), t, IntegrationConfig{});
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.time(), 0.0);
    EXPECT_LT(e.time(), 5.0);
    EXPECT_NE(std::string(e.what()).find("divergent dynamics"), std::string::npos);
  }
}

TEST(RunTransient, ConfigurableBlowUpGuard) {
  TemplateSet drive;
  drive.bias = 1.0;
  drive.t_final = 5.0;
  IntegrationConfig cfg;
  cfg.blowup_guard = 0.5;
  EXPECT_THROW(run_transient(CellField(2, 2, 0.0), drive, cfg), DivergenceError);
}

TEST(RunTransient, RejectsInvalidConfig) {
  TemplateSet t;
  t.t_final = 1.0;
  IntegrationConfig cfg;
  cfg.dt = 2.0;
  EXPECT_THROW(run_transient(CellField(2, 2), t, cfg), ContractError);
  cfg.dt = 0.1;
  cfg.checkpoint_times = {0.5, 0.5};
  EXPECT_THROW(run_transient(CellField(2, 2), t, cfg), ContractError);
  cfg.checkpoint_times = {1.5};
  EXPECT_THROW(run_transient(CellField(2, 2), t, cfg), ContractError);
  cfg.checkpoint_times = {};
  t.bias = NAN;
  EXPECT_THROW(run_transient(CellField(2, 2), t, cfg), ContractError);
}

TEST(RunTransient, BoundaryNeverExceededForClassicTemplates) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    TemplateSet t;
    for (double& v : t.a) v = rng.uniform(-2, 2);
    for (double& v : t.b) v = rng.uniform(-2, 2);
    t.bias = rng.uniform(-1, 1);
    t.t_final = 3.0;
    IntegrationConfig cfg;
    cfg.checkpoint_times = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
    const double bound = steady_state_bound(t, cfg);
    auto u = random_field(rng, 5, 5);
    auto r = run_transient(u, t, cfg);
    for (double v : r.final_state.values()) EXPECT_LE(std::fabs(v), bound);
  }
}
