#include <gtest/gtest.h>

#include "cnnforge/decision.hpp"
#include "cnnforge/rng.hpp"

using namespace cnnforge;

namespace {

std::vector<Classification> votes(const std::string& pid, std::size_t c1, std::size_t c2) {
  std::vector<Classification> out;
  for (std::size_t k = 0; k < c1 + c2; ++k)
    out.push_back({pid, "L", "m" + std::to_string(k), k < c1 ? 0.9 : 0.1, k < c1 ? Label::class1 : Label::class2});
  return out;
}

MetricsReport counts(std::size_t tp, std::size_t fn, std::size_t fp, std::size_t tn) {
  MetricsReport r;
  r.tp = tp;
  r.fn = fn;
  r.fp = fp;
  r.tn = tn;
  return r;
}

}  // namespace

TEST(Voting, MajorityAndTieBreak) {
  EXPECT_EQ(decide_patient(votes("P1", 60, 37)).decided, Label::class1);
  EXPECT_EQ(decide_patient(votes("P1", 48, 49)).decided, Label::class2);
  auto tie = decide_patient(votes("P2", 2, 2));
  EXPECT_EQ(tie.decided, Label::class2);
  EXPECT_EQ(tie.m_used, 4u);
  EXPECT_EQ(tie.patient_id, "P2");
}

TEST(Voting, ExhaustiveSmallCounts) {
  for (std::size_t m = 1; m <= 9; ++m)
    for (std::size_t c1 = 0; c1 <= m; ++c1) {
      auto d = decide_patient(votes("P", c1, m - c1));
      EXPECT_EQ(d.decided, 2 * c1 > m ? Label::class1 : Label::class2) << c1 << "/" << m;
      EXPECT_EQ(d.votes_class1 + d.votes_class2, m);
    }
}

TEST(Voting, Errors) {
  EXPECT_THROW(decide_patient({}), ContractError);
  auto mixed = votes("P1", 1, 1);
  mixed[1].patient_id = "P2";
  EXPECT_THROW(decide_patient(mixed), ContractError);
}

TEST(Recist, Categories) {
  EXPECT_EQ(recist_assess(50, 0, true).category, Response::CR);
  EXPECT_EQ(recist_assess(50, 30, false).category, Response::PR);
  EXPECT_EQ(recist_assess(50, 45, false).category, Response::SD);
  EXPECT_EQ(recist_assess(50, 65, false).category, Response::PD);
  EXPECT_EQ(recist_to_class(Response::PR), Label::class1);
  EXPECT_EQ(recist_to_class(Response::SD), Label::class1);
  EXPECT_EQ(recist_to_class(Response::CR), Label::class1);
  EXPECT_EQ(recist_to_class(Response::PD), Label::class2);
}

TEST(Recist, ThresholdsAreInclusive) {
  EXPECT_EQ(recist_assess(100, 70, false).category, Response::PR);
  EXPECT_EQ(recist_assess(100, 70.0001, false).category, Response::SD);
  EXPECT_EQ(recist_assess(100, 120, false).category, Response::PD);
  EXPECT_EQ(recist_assess(100, 119.9999, false).category, Response::SD);
  for (double b : {20.0, 33.3, 47.1, 81.9, 123.4}) {
    EXPECT_EQ(recist_assess(b, 0.7 * b, false).category, Response::PR) << b;
    EXPECT_EQ(recist_assess(b, 1.2 * b, false).category, Response::PD) << b;
  }
}

TEST(Recist, EligibilityAndErrors) {
  EXPECT_TRUE(recist_eligible(20.0));
  EXPECT_FALSE(recist_eligible(19.99));
  EXPECT_THROW(recist_eligible(0.0), ContractError);
  EXPECT_THROW(recist_assess(50, 10, true), ContractError);
  EXPECT_THROW(recist_assess(0, 10, false), ContractError);
  EXPECT_THROW(recist_assess(50, -1, false), ContractError);
}

TEST(Metrics, ReportedFigures) {
  auto a = counts(14, 1, 14, 1);
  EXPECT_EQ(a.accuracy_text(), "50.00");
  auto b = counts(14, 1, 1, 14);
  EXPECT_EQ(b.accuracy_text(), "93.33");
  EXPECT_EQ(b.sensitivity_text(), "93.33");
  EXPECT_EQ(b.specificity_text(), "93.33");
  auto c = counts(15, 0, 2, 13);
  EXPECT_EQ(c.accuracy_text(), "93.33");
  EXPECT_EQ(c.sensitivity_text(), "100.00");
  EXPECT_EQ(c.specificity_text(), "86.66");
}

TEST(Metrics, UndefinedDenominator) {
  auto r = counts(0, 0, 3, 4);
  EXPECT_EQ(r.sensitivity_text(), "undefined");
  EXPECT_FALSE(r.sensitivity().has_value());
  EXPECT_EQ(r.specificity_text(), "57.14");
  EXPECT_NE(r.to_text().find("sensitivity  undefined"), std::string::npos);
}

TEST(Metrics, ComputedFromOutcomes) {
  std::vector<DecisionOutcome> o;
  auto add = [&](Label decided, Label truth, int n) {
    for (int k = 0; k < n; ++k) o.push_back({decide_votes("P", decided == Label::class1, decided != Label::class1), truth});
  };
  add(Label::class1, Label::class1, 15);
  add(Label::class1, Label::class2, 2);
  add(Label::class2, Label::class2, 13);
  auto r = compute_metrics(o);
  EXPECT_EQ(r.tp, 15u);
  EXPECT_EQ(r.fp, 2u);
  EXPECT_EQ(r.tn, 13u);
  EXPECT_EQ(r.fn, 0u);
  EXPECT_EQ(r.to_csv(), "tp,fn,fp,tn,accuracy,sensitivity,specificity\n15,0,2,13,93.33,100.00,86.66\n");
  EXPECT_THROW(compute_metrics({}), ContractError);
}

TEST(Metrics, PropertyRandomCounts) {
  Rng rng(12);
  for (int trial = 0; trial < 2000; ++trial) {
    auto r = counts(rng.index(40), rng.index(40), rng.index(40), rng.index(40));
    const std::size_t n = r.tp + r.fn + r.fp + r.tn;
    if (n == 0) continue;
    const double acc = std::stod(r.accuracy_text());
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 100.0);
    EXPECT_LE(acc, *r.accuracy() * 100.0 + 1e-9);
    EXPECT_GT(acc, *r.accuracy() * 100.0 - 0.01 - 1e-9);
    if (r.tp + r.fn > 0) {
      const double sens = std::stod(r.sensitivity_text());
      EXPECT_LE(sens, *r.sensitivity() * 100.0 + 1e-9);
    }
  }
}
