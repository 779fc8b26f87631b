#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "seqadv/core/checkpoint.hpp"
#include "seqadv/eval/report.hpp"

using namespace seqadv;

namespace {

double brute_force_auc(const ScoredSet& s) {
  double good = 0.0, pairs = 0.0;
  for (const auto& p : s)
    for (const auto& n : s)
      if (p.label == 1 && n.label == 0) {
        pairs += 1.0;
        good += p.score > n.score ? 1.0 : p.score == n.score ? 0.5 : 0.0;
      }
  return good / pairs;
}

ScoredSet random_set(Rng& rng, std::size_t n) {
  ScoredSet s;
  const bool coarse = rng.index(2) == 0;  // coarse scores force ties
  for (std::size_t i = 0; i < n; ++i) {
    const double score = coarse ? static_cast<double>(rng.index(5)) / 4.0 : rng.uniform_open();
    s.push_back({static_cast<int>(rng.index(2)), score});
  }
  s[0].label = 0;
  s[1].label = 1;
  return s;
}

}  // namespace

TEST(Auc, KnownValues) {
  EXPECT_EQ(auc({{0, 0.1}, {0, 0.2}, {1, 0.3}, {1, 0.9}}), 1.0);
  EXPECT_EQ(auc({{0, 0.5}, {1, 0.5}, {0, 0.5}, {1, 0.5}}), 0.5);
  EXPECT_EQ(auc({{0, 0.1}, {0, 0.4}, {1, 0.3}, {1, 0.8}}), 0.75);
}

TEST(Auc, SingleClassAndBadInputAreErrors) {
  EXPECT_THROW(auc({{1, 0.3}, {1, 0.4}}), std::invalid_argument);
  EXPECT_THROW(auc({{0, 0.3}, {2, 0.4}}), std::invalid_argument);
  EXPECT_THROW(auc({{0, NAN}, {1, 0.4}}), std::invalid_argument);
}

TEST(Auc, EqualsBruteForcePairCountingExactly) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    const ScoredSet s = random_set(rng, 2 + rng.index(199));
    ASSERT_EQ(auc(s), brute_force_auc(s)) << "seed " << seed;
  }
}

TEST(Auc, FlippedLabelsSumToOne) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    ScoredSet s = random_set(rng, 2 + rng.index(100));
    const double a = auc(s);
    for (auto& x : s) x.label = 1 - x.label;
    EXPECT_NEAR(a + auc(s), 1.0, 1e-12);
  }
}

TEST(Auc, InvariantUnderIncreasingTransforms) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    ScoredSet s = random_set(rng, 2 + rng.index(100));
    const double a = auc(s);
    ScoredSet t = s;
    for (auto& x : t) x.score = std::exp(3.0 * x.score) - 7.0;
    EXPECT_EQ(auc(t), a);
  }
}

TEST(DetectionRate, CountsAtOrAboveThreshold) {
  const std::vector<double> all = {0.5, 0.9, 1.0}, none = {0.0, 0.49, 0.4999999};
  EXPECT_EQ(detection_rate(all), 1.0);
  EXPECT_EQ(detection_rate(none), 0.0);
  EXPECT_THROW(detection_rate(std::vector<double>{}), std::invalid_argument);
  Rng rng(3);
  std::vector<double> scores(100);
  std::size_t hits = 0;
  for (double& v : scores) hits += (v = rng.uniform_open()) >= 0.5;
  EXPECT_EQ(detection_rate(scores), static_cast<double>(hits) / 100.0);
}

TEST(Csv, NumbersRoundTripExactly) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-1e3, 1e3) * std::pow(10.0, static_cast<double>(rng.index(20)) - 10);
    EXPECT_EQ(parse_number(format_number(v)), v);
  }
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_THROW(parse_number("0.5x"), std::runtime_error);
}

TEST(Csv, EmptyReportIsHeaderOnly) {
  EXPECT_EQ(table1_csv({}), "config,train_auc,test_auc\n");
  EXPECT_EQ(table2_csv({}),
            "config,train_original,train_adversarial,test_original,test_adversarial,"
            "length_inflation,null_fraction\n");
}

TEST(Csv, TablesRoundTrip) {
  Rng rng(2);
  std::vector<VictimRow> t1;
  std::vector<AttackRow> t2;
  for (auto name : kVictimNames) {
    t1.push_back({std::string(name), rng.uniform_open(), rng.uniform_open()});
    t2.push_back({std::string(name), rng.uniform_open(), rng.uniform_open(), rng.uniform_open(),
                  rng.uniform_open(), 1.0 + rng.uniform_open(), rng.uniform_open()});
  }
  const std::string csv1 = table1_csv(t1), csv2 = table2_csv(t2);
  EXPECT_EQ(std::count(csv1.begin(), csv1.end(), '\n'), 7);
  EXPECT_EQ(parse_table1(csv1), t1);
  EXPECT_EQ(parse_table2(csv2), t2);
  const TransferMatrix m{{"LSTM", "BiLSTM"}, {{0.1, 0.8}, {0.7, 0.05}}};
  EXPECT_EQ(parse_transfer(transfer_csv(m)), m);
  EXPECT_THROW(parse_table1("config,auc\n"), std::runtime_error);
}

TEST(Report, EmitWritesFilesAndSurfacesPath) {
  const auto dir = std::filesystem::temp_directory_path() / "seqadv_eval_emit";
  std::filesystem::remove_all(dir);
  Report r;
  r.victims = {{"LSTM", 0.9, 0.8}};
  emit_report(dir, r);
  EXPECT_EQ(parse_table1(read_file(dir / "table1.csv")), r.victims);
  EXPECT_TRUE(parse_table2(read_file(dir / "table2.csv")).empty());
  EXPECT_FALSE(std::filesystem::exists(dir / "transfer.csv"));
  std::filesystem::create_directories(dir / "blocked");
  try {
    write_file(dir / "blocked", "x");
    FAIL() << "expected a write error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("blocked"), std::string::npos);
  }
}

TEST(Report, AttackRowRatesAndStatistics) {
  // A victim that flags everything; rates are then 1 regardless of content.
  SequenceClassifier victim({Direction::Forward, Head::Average, 3, 3, 4}, "victim");
  victim.initialize(1);
  zero_parameters(victim.params());
  victim.params().at("victim.out.b")[1] = 5.0;
  std::vector<AttackSample> train = {{{0, 1}, {0, 3, 1}, {1}, 2, 1}};
  std::vector<AttackSample> test = {{{0, 1}, {0, 1}, {}, 2, 2}, {{2}, {2, 2}, {1}, 1, 0}};
  const AttackRow row = attack_row("LSTM", victim, train, test);
  EXPECT_EQ(row.train_original, 1.0);
  EXPECT_EQ(row.test_adversarial, 1.0);
  EXPECT_DOUBLE_EQ(row.length_inflation, (1.0 + 2.0) / 2.0);
  EXPECT_DOUBLE_EQ(row.null_fraction, 2.0 / 3.0);
}

TEST(Report, TransferMatrixShapeAndDiagonal) {
  SequenceClassifier flag_all({Direction::Forward, Head::Average, 3, 3, 4}, "a");
  flag_all.initialize(1);
  zero_parameters(flag_all.params());
  flag_all.params().at("a.out.b")[1] = 5.0;
  SequenceClassifier flag_none = flag_all;
  flag_none.params().at("a.out.b")[1] = -5.0;
  const std::vector<std::vector<Sequence>> crafted = {{{0, 1}, {2}}, {{3}}};
  const auto m = transfer_matrix({"all", "none"}, {&flag_all, &flag_none}, crafted);
  ASSERT_EQ(m.rate.size(), 2u);
  ASSERT_EQ(m.rate[0].size(), 2u);
  EXPECT_EQ(m.rate[0][0], 1.0);
  EXPECT_EQ(m.rate[1][1], 0.0);
  EXPECT_EQ(m.rate[0][1], 0.0);
  EXPECT_THROW(transfer_matrix({"all"}, {&flag_all}, {{{0}}}), std::invalid_argument);
}
