#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "bpa/checklist.hpp"

using bpa::ChecklistAssessment;

namespace {

ChecklistAssessment from_mask(unsigned mask) {
  std::array<bool, 7> flags{};
  for (int i = 0; i < 7; ++i) flags[static_cast<size_t>(i)] = (mask >> i) & 1u;
  return ChecklistAssessment::from_flags(flags);
}

}  // namespace

TEST(Checklist, ScoresEveryAssessment) {
  for (unsigned mask = 0; mask < 128; ++mask) {
    const auto a = from_mask(mask);
    int expected = 0;
    for (int i = 0; i < 7; ++i) {
      if ((mask >> i) & 1u) expected += i < 3 ? 2 : 1;
    }
    EXPECT_EQ(bpa::total_score(a), expected) << "mask " << mask;
    EXPECT_EQ(bpa::is_malignant(a), expected >= 3) << "mask " << mask;
  }
}

TEST(Checklist, Examples) {
  EXPECT_EQ(bpa::total_score(from_mask(0)), 0);
  EXPECT_FALSE(bpa::is_malignant(from_mask(0)));

  ChecklistAssessment apn_only;
  apn_only.atypical_pigment_network = true;
  EXPECT_EQ(bpa::total_score(apn_only), 2);
  EXPECT_FALSE(bpa::is_malignant(apn_only));

  ChecklistAssessment apn_streaks = apn_only;
  apn_streaks.irregular_streaks = true;
  EXPECT_EQ(bpa::total_score(apn_streaks), 3);
  EXPECT_TRUE(bpa::is_malignant(apn_streaks));

  EXPECT_EQ(bpa::total_score(from_mask(127)), 10);
}

TEST(Checklist, AddingAStructureNeverLowersTheScore) {
  for (unsigned mask = 0; mask < 128; ++mask) {
    for (int bit = 0; bit < 7; ++bit) {
      const unsigned more = mask | (1u << bit);
      EXPECT_GE(bpa::total_score(from_mask(more)), bpa::total_score(from_mask(mask)));
      if (bpa::is_malignant(from_mask(mask))) EXPECT_TRUE(bpa::is_malignant(from_mask(more)));
    }
  }
}

TEST(Checklist, JsonRoundTrip) {
  for (unsigned mask = 0; mask < 128; ++mask) {
    const auto a = from_mask(mask);
    const nlohmann::json j = a;
    EXPECT_EQ(j.get<ChecklistAssessment>(), a);
  }
}

TEST(Checklist, RejectsMalformedJson) {
  nlohmann::json j = from_mask(0);
  j["atypical_pigment_network"] = "yes";
  EXPECT_ANY_THROW(j.get<ChecklistAssessment>());
  nlohmann::json missing = from_mask(0);
  missing.erase("regression_structures");
  EXPECT_ANY_THROW(missing.get<ChecklistAssessment>());
}
