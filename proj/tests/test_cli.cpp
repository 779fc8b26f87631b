#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "seqadv/cli/pipeline.hpp"

using namespace seqadv;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("seqadv_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

cli::RunConfig tiny_config(const fs::path& out) {
  cli::RunConfig c;
  for (auto [k, v] : std::initializer_list<std::pair<const char*, const char*>>{
           {"corpus_size", "100"},
           {"victim_hidden", "4"},
           {"victim_attention_hidden", "4"},
           {"generator_hidden", "4"},
           {"substitute_hidden", "4"},
           {"substitute_attention_hidden", "4"},
           {"victim_epochs", "2"},
           {"attack_epochs", "3"},
           {"attack_patience", "1"},
           {"victims", "LSTM"},
           {"attacks", "LSTM"}})
    c.set(k, v);
  c.set("out", out.string());
  return c;
}

std::string run(const cli::RunConfig& c, void (*cmd)(const cli::RunConfig&, std::ostream&)) {
  std::ostringstream log;
  cmd(c, log);
  return log.str();
}

int exit_code(const std::string& args) {
  const int status = std::system((std::string(SEQADV_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, ParsesCommentsAndRejectsUnknownKeys) {
  const auto c = cli::parse_config("# comment\n\n seed = 7  # trailing\ntemp=0.5\n", "x.conf");
  EXPECT_EQ(c.integer("seed"), 7u);
  EXPECT_EQ(c.real("temp"), 0.5);
  EXPECT_EQ(c.integer("vocab_size"), 30u);
  try {
    cli::parse_config("seed = 1\ncolour = red\n", "x.conf");
    FAIL() << "expected a usage error";
  } catch (const cli::UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("x.conf:2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
  }
  EXPECT_THROW(cli::parse_config("seed\n", "x.conf"), cli::UsageError);
  EXPECT_THROW(cli::parse_config("seed = -1\n", "x.conf").integer("seed"), cli::UsageError);
  EXPECT_THROW(cli::parse_config("temp = hot\n", "x.conf").real("temp"), cli::UsageError);
  EXPECT_THROW(cli::parse_config("transfer = maybe\n", "x.conf").flag("transfer"), cli::UsageError);
}

TEST(Config, PathsResolveAgainstConfigFile) {
  const fs::path dir = fresh_dir("paths");
  write_file(dir / "sub" / "run.conf", "out = artifacts\n");
  EXPECT_EQ(cli::load_config(dir / "sub" / "run.conf").path("out"), dir / "sub" / "artifacts");
  write_file(dir / "abs.conf", "out = /var/x\n");
  EXPECT_EQ(cli::load_config(dir / "abs.conf").path("out"), fs::path("/var/x"));
  EXPECT_THROW(cli::load_config(dir / "missing.conf"), cli::UsageError);
}

TEST(Config, DumpRoundTrips) {
  cli::RunConfig c;
  c.set("temp", "0.3");
  c.set("out", "/tmp/o");
  const std::string d = c.dump();
  EXPECT_EQ(cli::parse_config(d, "dump").dump(), d);
}

TEST(Config, SixVictimNamesAcceptedOthersRejected) {
  for (auto n : kVictimNames) EXPECT_NO_THROW(cli::victim_index(std::string(n)));
  try {
    cli::victim_index("GRU");
    FAIL() << "expected a usage error";
  } catch (const cli::UsageError& e) {
    for (auto n : kVictimNames) EXPECT_NE(std::string(e.what()).find(n), std::string::npos);
  }
  const auto vc = cli::victim_config(cli::RunConfig{}, "LSTM");
  EXPECT_EQ(vc.direction, Direction::Forward);
  EXPECT_EQ(vc.head, Head::LastState);
}

TEST(Commands, CorpusCreatesFilesDeterministically) {
  const fs::path dir = fresh_dir("corpus");
  cli::RunConfig c;
  c.set("out", (dir / "a" / "b").string());
  const std::string log = run(c, cli::cmd_corpus);
  EXPECT_NE(log.find("1000 examples"), std::string::npos);
  const std::string text = read_file(dir / "a" / "b" / "corpus.jsonl");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1000);
  EXPECT_TRUE(fs::exists(dir / "a" / "b" / "splits.json"));
  c.set("out", (dir / "c").string());
  run(c, cli::cmd_corpus);
  EXPECT_EQ(read_file(dir / "c" / "corpus.jsonl"), text);
  EXPECT_EQ(read_file(dir / "c" / "splits.json"), read_file(dir / "a" / "b" / "splits.json"));

  c.set("motif_min_length", "30");
  c.set("motif_max_length", "30");
  EXPECT_THROW(run(c, cli::cmd_corpus), cli::UsageError);
}

TEST(Commands, PipelineArtifactsAreConsistentAndReproducible) {
  const fs::path dir = fresh_dir("pipeline");
  const cli::Layout l{dir / "run"};
  const cli::RunConfig c = tiny_config(l.root);
  run(c, cli::cmd_corpus);
  std::ostringstream log;
  cli::cmd_train_victim(c, "LSTM", log);

  // The emitted AUC row matches a recomputation from the saved checkpoint.
  const auto rows = parse_csv(read_file(l.victim("LSTM").string() + ".auc.csv"));
  ASSERT_EQ(rows.size(), 2u);
  const auto d = cli::load_dataset(c);
  const auto again = cli::victim_aucs(load_classifier(l.victim("LSTM")), d);
  EXPECT_EQ(parse_number(rows[1][1]), again.train_auc);
  EXPECT_EQ(parse_number(rows[1][2]), again.validation_auc);
  EXPECT_EQ(parse_number(rows[1][3]), again.test_auc);

  cli::cmd_train_attack(c, "LSTM", log);
  const auto attack_log = parse_csv(read_file(l.attack("LSTM") / "log.csv"));
  const std::size_t epochs = attack_log.size() - 1;
  EXPECT_GE(epochs, 1u);
  EXPECT_LE(epochs, 3u);
  for (std::size_t i = 1; i < attack_log.size(); ++i)
    EXPECT_EQ(attack_log[i][0], std::to_string(i));
  const std::string adv = read_file(l.attack("LSTM") / "adversarial_test.jsonl");
  EXPECT_EQ(static_cast<std::size_t>(std::count(adv.begin(), adv.end(), '\n')),
            cli::ids(d.subset(Subset::Test), 1).size());

  cli::cmd_evaluate(c, std::nullopt, log);
  const auto t1 = parse_table1(read_file(l.report() / "table1.csv"));
  const auto t2 = parse_table2(read_file(l.report() / "table2.csv"));
  ASSERT_EQ(t1.size(), 1u);
  ASSERT_EQ(t2.size(), 1u);
  EXPECT_EQ(t1[0].test_auc, again.test_auc);
  EXPECT_GE(t2[0].length_inflation, 1.0);

  // Re-running evaluation, and the whole pipeline, reproduces the bytes.
  const std::string table2 = read_file(l.report() / "table2.csv");
  cli::cmd_evaluate(c, std::nullopt, log);
  EXPECT_EQ(read_file(l.report() / "table2.csv"), table2);

  const cli::Layout l2{dir / "again"};
  const cli::RunConfig c2 = tiny_config(l2.root);
  run(c2, cli::cmd_corpus);
  cli::cmd_train_victim(c2, "LSTM", log);
  cli::cmd_train_attack(c2, "LSTM", log);
  cli::cmd_evaluate(c2, std::nullopt, log);
  for (const fs::path rel : {"victims/LSTM.ckpt", "attacks/LSTM/generator.ckpt",
                             "attacks/LSTM/substitute.ckpt", "attacks/LSTM/adversarial_test.jsonl",
                             "report/table1.csv", "report/table2.csv"})
    EXPECT_EQ(read_file(l2.root / rel), read_file(l.root / rel)) << rel;

  // Evaluating from the dumped effective config gives the same tables.
  const auto dumped = cli::load_config(l.report() / "evaluate.conf");
  fs::remove_all(l.report());
  cli::cmd_evaluate(dumped, std::nullopt, log);
  EXPECT_EQ(read_file(l.report() / "table2.csv"), table2);
}

TEST(Commands, ZeroWeightVictimHasChanceAuc) {
  const fs::path dir = fresh_dir("zero");
  cli::RunConfig c = tiny_config(dir);
  c.set("attacks", "");
  run(c, cli::cmd_corpus);
  SequenceClassifier v(cli::victim_config(c, "LSTM"), "victim");
  v.initialize(1);
  zero_parameters(v.params());
  save_classifier(cli::layout(c).victim("LSTM"), v);
  run(c, [](const cli::RunConfig& rc, std::ostream& os) { cli::cmd_evaluate(rc, std::nullopt, os); });
  const auto t1 = parse_table1(read_file(dir / "report" / "table1.csv"));
  ASSERT_EQ(t1.size(), 1u);
  EXPECT_EQ(t1[0].train_auc, 0.5);
  EXPECT_EQ(t1[0].test_auc, 0.5);
}

TEST(Commands, MissingInputsAndVocabularyMismatchAreErrors) {
  const fs::path dir = fresh_dir("errors");
  cli::RunConfig c = tiny_config(dir);
  std::ostringstream log;
  EXPECT_THROW(cli::cmd_train_victim(c, "LSTM", log), std::runtime_error);
  run(c, cli::cmd_corpus);
  try {
    cli::cmd_evaluate(c, std::nullopt, log);
    FAIL() << "expected a missing checkpoint error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("LSTM.ckpt"), std::string::npos);
  }
  cli::cmd_train_victim(c, "LSTM", log);
  c.set("vocab_size", "31");
  try {
    cli::cmd_train_attack(c, "LSTM", log);
    FAIL() << "expected a vocabulary error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("incompatible vocabulary"), std::string::npos);
  }
}

TEST(Binary, ExitCodes) {
  const fs::path dir = fresh_dir("binary");
  write_file(dir / "bad.conf", "colour = red\n");
  write_file(dir / "ok.conf", "corpus_size = 50\nout = o\n");
  EXPECT_EQ(exit_code("--help"), 0);
  EXPECT_EQ(exit_code(""), 1);
  EXPECT_EQ(exit_code("frobnicate"), 1);
  EXPECT_EQ(exit_code("corpus --config " + (dir / "bad.conf").string()), 1);
  EXPECT_EQ(exit_code("train-victim --config " + (dir / "ok.conf").string() + " --victim GRU"), 1);
  EXPECT_EQ(exit_code("corpus --config " + (dir / "ok.conf").string() + " --seed 3"), 0);
  EXPECT_TRUE(fs::exists(dir / "o" / "corpus.jsonl"));
  EXPECT_EQ(exit_code("evaluate --config " + (dir / "ok.conf").string()), 2);
}
