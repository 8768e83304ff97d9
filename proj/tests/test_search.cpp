#include <gtest/gtest.h>

#include <cmath>

#include "cnnforge/search.hpp"
#include "cnnforge/synth.hpp"
#include "test_support.hpp"

using namespace cnnforge;

namespace {

struct Fixture {
  std::vector<PreparedLesion> train, val;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    const auto root = cnnforge::testing::scratch_dir("search_data");
    SynthConfig sc;
    sc.per_class(12, 6);
    sc.image_size = 48;
    auto rows = generate_synth(sc, root);
    AugmentConfig ac;
    ac.grid_w = ac.grid_h = 16;
    Fixture out;
    for (const auto& r : rows) {
      PreparedLesion p{r.lesion_id, r.patient_id, r.label,
                       prepare_input(read_pgm(resolve_image_path(root + "/manifest.csv", r.image_path)), ac)};
      (r.split == Split::train ? out.train : out.val).push_back(std::move(p));
    }
    return out;
  }();
  return f;
}

AugmentConfig grid16() {
  AugmentConfig ac;
  ac.grid_w = ac.grid_h = 16;
  return ac;
}

SearchConfig search_cfg(int target) {
  SearchConfig sc;
  sc.target_count = target;
  sc.max_proposals = 60;
  sc.eval_subset = 1.0;
  sc.rng_seed = 5;
  return sc;
}

ClassifierFactory small_mlp() {
  TrainConfig tc;
  tc.hidden_units = 8;
  tc.learning_rate = 0.01;
  tc.max_epochs = 15;
  return mlp_factory(tc);
}

}  // namespace

TEST(Search, AcceptsOnlyImprovements) {
  std::vector<SearchEvent> seen;
  auto report = search_templates(fixture().train, fixture().val, search_cfg(3), small_mlp(), grid16(),
                                 [&](const SearchEvent& e) { seen.push_back(e); });
  EXPECT_EQ(report.accepted.size(), 3u);
  EXPECT_EQ(seen.size(), report.history.size());
  double last = report.initial_validation_loss;
  EXPECT_NEAR(last, std::log(2.0), 1e-15);
  std::size_t accepted = 0;
  for (const auto& e : report.history) {
    if (e.accepted) {
      EXPECT_LT(e.validation_loss, last);
      last = e.validation_loss;
      ++accepted;
      EXPECT_EQ(report.accepted.entries[accepted - 1].name, "m" + std::to_string(accepted));
    } else if (e.note.empty()) {
      EXPECT_GE(e.validation_loss, last);
    } else {
      EXPECT_EQ(e.note, "divergent");
    }
  }
  EXPECT_EQ(accepted, 3u);
  EXPECT_EQ(report.final_validation_loss, last);
  EXPECT_NO_THROW(report.accepted.validate());
  EXPECT_EQ(report.history_csv().substr(0, 38), "proposal,validation_loss,accepted,note");
}

TEST(Search, DeterministicForSeed) {
  auto a = search_templates(fixture().train, fixture().val, search_cfg(2), small_mlp(), grid16());
  auto b = search_templates(fixture().train, fixture().val, search_cfg(2), small_mlp(), grid16());
  EXPECT_EQ(a.accepted, b.accepted);
  EXPECT_EQ(a.history_csv(), b.history_csv());
}

TEST(Search, NoProposalsFails) {
  auto cfg = search_cfg(3);
  cfg.max_proposals = 0;
  try {
    search_templates(fixture().train, fixture().val, cfg, small_mlp(), grid16());
    FAIL() << "expected SearchError";
  } catch (const SearchError& e) {
    EXPECT_TRUE(e.report().history.empty());
    EXPECT_EQ(e.kind(), ErrorKind::divergence);
  }
}

TEST(Search, InputValidation) {
  EXPECT_THROW(search_templates({}, fixture().val, search_cfg(1), small_mlp(), grid16()), ContractError);
  auto odd = fixture().val;
  odd[0].input = CellField(8, 8);
  EXPECT_THROW(search_templates(fixture().train, odd, search_cfg(1), small_mlp(), grid16()), ContractError);
}

TEST(Search, StratifiedSubsetKeepsBothClasses) {
  const auto& train = fixture().train;
  auto idx = detail::stratified_subset(train, 0.01, 3);
  ASSERT_EQ(idx.size(), 2u);
  EXPECT_NE(train[idx[0]].label, train[idx[1]].label);
  EXPECT_EQ(detail::stratified_subset(train, 0.25, 3), detail::stratified_subset(train, 0.25, 3));
  EXPECT_EQ(detail::stratified_subset(train, 1.0, 3).size(), train.size());
}
