#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include "fox/counting.hpp"

using namespace fox;

TEST(VisitationTable, RecordVisit) {
  VisitationTable t;
  EXPECT_EQ(t.record_visit("a"), 1u);
  EXPECT_EQ(t.record_visit("a"), 2u);
  EXPECT_EQ(t.record_visit("b"), 1u);
  EXPECT_EQ(t.count("a"), 2u);
  EXPECT_EQ(t.count("b"), 1u);
  EXPECT_EQ(t.count("c"), 0u);
}

TEST(VisitationTable, ExplorationReward) {
  VisitationTable t;
  t.record_visit("k");
  EXPECT_EQ(t.exploration_reward("k"), 1.0);
  for (int k = 0; k < 3; ++k) t.record_visit("k");
  EXPECT_EQ(t.exploration_reward("k"), 0.5);
  for (int k = 0; k < 96; ++k) t.record_visit("k");
  EXPECT_DOUBLE_EQ(t.exploration_reward("k"), 0.1);
}

TEST(VisitationTable, RewardBeforeVisitIsContractError) {
  VisitationTable t;
  EXPECT_THROW(t.exploration_reward("never"), ContractError);
}

TEST(VisitationTable, Coverage) {
  VisitationTable t;
  EXPECT_EQ(t.coverage(), 0u);
  for (int k = 0; k < 3; ++k) t.record_visit("x");
  EXPECT_EQ(t.coverage(), 1u);
  for (const char* key : {"a", "b", "c", "d"}) t.record_visit(key);
  EXPECT_EQ(t.coverage(), 5u);
}

TEST(VisitationTable, RewardNonIncreasingPerKey) {
  VisitationTable t;
  double prev = 2.0;
  for (int k = 0; k < 200; ++k) {
    t.record_visit("z");
    const double r = t.exploration_reward("z");
    EXPECT_LE(r, prev);
    prev = r;
  }
}

TEST(VisitationTable, CountsMatchTally) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> pick(0, 40);
  VisitationTable t;
  std::vector<std::string> seq;
  for (int k = 0; k < 5000; ++k) {
    seq.push_back("key" + std::to_string(pick(rng)));
    t.record_visit(seq.back());
  }
  std::map<std::string, std::uint64_t> tally;
  for (const auto& s : seq) ++tally[s];
  EXPECT_EQ(t.coverage(), tally.size());
  EXPECT_EQ(t.total_visits(), seq.size());
  for (const auto& [k, n] : tally) EXPECT_EQ(t.count(k), n);
}

TEST(VisitationTable, CsvDumpSortedByKey) {
  VisitationTable t;
  t.record_visit("b");
  t.record_visit("a");
  t.record_visit("b");
  std::ostringstream os;
  t.write_csv(os);
  EXPECT_EQ(os.str(), "key,count\n\"a\",1\n\"b\",2\n");
}

TEST(CountTarget, ParseNames) {
  EXPECT_EQ(parse_count_target("formation"), CountTarget::formation);
  EXPECT_EQ(parse_count_target("joint_observation"), CountTarget::joint_observation);
  EXPECT_EQ(parse_count_target("individual"), CountTarget::individual_observation);
  EXPECT_THROW(parse_count_target("bogus"), ConfigError);
}
