#include <gtest/gtest.h>

#include <cmath>

#include "cnnforge/engine.hpp"
#include "cnnforge/reference.hpp"
#include "test_support.hpp"

using namespace cnnforge;
using cnnforge::testing::max_abs_diff;
using cnnforge::testing::random_field;
using cnnforge::testing::random_template;

TEST(Reference, OneEulerStepOfConstantDrive) {
  TemplateSet t;
  t.bias = 1.0;
  t.t_final = 0.1;
  IntegrationConfig cfg;
  cfg.method = Method::euler;
  cfg.dt = 0.1;
  auto r = simulate_reference(CellField(1, 1), CellField(1, 1, 0.0), t, cfg);
  EXPECT_DOUBLE_EQ(r.final_state(0, 0), 0.1);
}

TEST(Reference, DecayMatchesExponential) {
  TemplateSet t;
  t.t_final = 3.0;
  IntegrationConfig cfg;
  cfg.dt = 0.01;
  auto r = simulate_reference(CellField(3, 3), CellField(3, 3, 1.7), t, cfg);
  for (double v : r.final_state.values()) EXPECT_NEAR(v, 1.7 * std::exp(-3.0), 1e-7);
}

TEST(Reference, MatchesEngineOnRandomCases) {
  Rng rng(1234);
  for (int trial = 0; trial < 25; ++trial) {
    TemplateSet t = random_template(rng, 0.8, 1.5);
    IntegrationConfig cfg;
    cfg.method = trial % 2 ? Method::euler : Method::rk4;
    cfg.boundary = trial % 3 ? Boundary::zero : Boundary::replicate;
    cfg.dt = 0.05;
    cfg.checkpoint_times = {0.5, 1.5};
    auto u = random_field(rng, 8, 8);
    auto x0 = random_field(rng, 8, 8, -2, 2);
    auto a = run_transient(u, x0, t, cfg);
    auto b = simulate_reference(u, x0, t, cfg);
    ASSERT_EQ(a.outputs.size(), b.outputs.size());
    for (std::size_t k = 0; k < a.outputs.size(); ++k) {
      EXPECT_EQ(a.outputs[k].time, b.outputs[k].time);
      EXPECT_LE(max_abs_diff(a.outputs[k].y, b.outputs[k].y), 1e-9);
    }
    EXPECT_LE(max_abs_diff(a.final_state, b.final_state), 1e-9);
  }
}

TEST(Reference, SameDivergenceBehaviour) {
  TemplateSet t;
  t.cst[4] = 10.0;
  t.t_final = 4.0;
  IntegrationConfig cfg;
  double te = -1, tr = -2;
  try {
    run_transient(CellField(4, 4, 0.3), t, cfg);
  } catch (const DivergenceError& e) {
    te = e.time();
  }
  try {
    simulate_reference(CellField(4, 4, 0.3), CellField(4, 4, 0.3), t, cfg);
  } catch (const DivergenceError& e) {
    tr = e.time();
  }
  EXPECT_DOUBLE_EQ(te, tr);
}

TEST(Reference, LimitedToSmallGrids) {
  TemplateSet t;
  EXPECT_THROW(simulate_reference(CellField(33, 4), CellField(33, 4), t, IntegrationConfig{}), ContractError);
}
