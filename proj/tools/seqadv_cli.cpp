#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "seqadv/cli/pipeline.hpp"

using namespace seqadv;

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> seed, victim, out, epochs, temp, gamma, lr, insert_len;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "key = value configuration file");
  cmd->add_option("--seed", f.seed, "global seed");
  cmd->add_option("--out", f.out, "output directory");
}

void add_training(CLI::App* cmd, Flags& f) {
  cmd->add_option("--epochs", f.epochs, "maximum epochs");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
}

void add_attack(CLI::App* cmd, Flags& f) {
  cmd->add_option("--temp", f.temp, "Gumbel-Softmax temperature");
  cmd->add_option("--gamma", f.gamma, "null-symbol penalty weight");
  cmd->add_option("--insert-len", f.insert_len, "insertions proposed after each symbol");
}

cli::RunConfig effective_config(const Flags& f, const std::string& command) {
  cli::RunConfig c = f.config.empty() ? cli::RunConfig{} : cli::load_config(f.config);
  if (f.seed) c.set("seed", *f.seed);
  // Flags are relative to the working directory, config values to the file.
  if (f.out) c.set("out", std::filesystem::absolute(*f.out).string());
  const std::string stage = command == "train-victim" ? "victim_" : "attack_";
  if (f.epochs) c.set(stage + "epochs", *f.epochs);
  if (f.lr) c.set(stage + "lr", *f.lr);
  if (f.temp) c.set("temp", *f.temp);
  if (f.gamma) c.set("gamma", *f.gamma);
  if (f.insert_len) c.set("insert_len", *f.insert_len);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box adversarial insertion attacks on RNN sequence classifiers"};
  app.require_subcommand(1);
  Flags f;
  auto* corpus = app.add_subcommand("corpus", "generate the synthetic corpus and splits");
  add_common(corpus, f);
  auto* victim = app.add_subcommand("train-victim", "train one victim classifier");
  add_common(victim, f);
  add_training(victim, f);
  victim->add_option("--victim", f.victim, "victim variant")->required();
  auto* attack = app.add_subcommand("train-attack", "train the generator against one victim");
  add_common(attack, f);
  add_training(attack, f);
  add_attack(attack, f);
  attack->add_option("--victim", f.victim, "attacked victim variant")->required();
  auto* evaluate = app.add_subcommand("evaluate", "write the AUC and detection-rate tables");
  add_common(evaluate, f);
  evaluate->add_option("--victim", f.victim, "evaluate only this victim");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const cli::RunConfig c = effective_config(f, command);
    if (command == "corpus") cli::cmd_corpus(c, std::cout);
    if (command == "train-victim") cli::cmd_train_victim(c, *f.victim, std::cout);
    if (command == "train-attack") cli::cmd_train_attack(c, *f.victim, std::cout);
    if (command == "evaluate") cli::cmd_evaluate(c, f.victim, std::cout);
  } catch (const cli::UsageError& e) {
    std::cerr << "seqadv " << command << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "seqadv " << command << ": " << e.what() << '\n';
    return 2;
  }
  return 0;
}
