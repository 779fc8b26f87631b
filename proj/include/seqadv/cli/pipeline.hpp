#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqadv/attack/io.hpp"
#include "seqadv/attack/trainer.hpp"
#include "seqadv/corpus/corpus.hpp"
#include "seqadv/eval/report.hpp"
#include "seqadv/seqnets/model_io.hpp"
#include "seqadv/seqnets/training.hpp"

namespace seqadv::cli {

/// Bad invocation or configuration; the CLI exits with status 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> d = {
      {"seed", "1"},
      {"out", "out"},
      // corpus
      {"vocab_size", "30"},
      {"corpus_size", "1000"},
      {"malware_fraction", "0.7"},
      {"min_length", "20"},
      {"max_length", "100"},
      {"motif_count", "5"},
      {"motif_min_length", "4"},
      {"motif_max_length", "6"},
      {"motif_core_length", "3"},
      {"label_noise", "0"},
      {"max_sequence_length", "200"},
      // victims
      {"victims", "LSTM,BiLSTM,LSTM-Average,BiLSTM-Average,LSTM-Attention,BiLSTM-Attention"},
      {"victim_hidden", "32"},
      {"victim_attention_hidden", "32"},
      {"victim_lr", "0.005"},
      {"victim_epochs", "150"},
      {"victim_patience", "30"},
      {"victim_batch_size", "16"},
      {"victim_clip_norm", "0"},
      // attack
      {"attacks", "LSTM-Attention,BiLSTM"},
      {"generator_hidden", "32"},
      {"substitute_hidden", "32"},
      {"substitute_attention_hidden", "32"},
      {"attack_lr", "0.01"},
      {"attack_epochs", "100"},
      {"attack_patience", "10"},
      {"attack_batch_size", "16"},
      {"attack_clip_norm", "0"},
      {"temp", "10"},
      {"gamma", "0.01"},
      {"insert_len", "1"},
      // evaluation
      {"transfer", "false"},
  };
  return d;
}

/// Flat key = value configuration with defaults merged. Relative paths are
/// resolved against `base_dir`, the directory of the config file.
class RunConfig {
 public:
  RunConfig() : values_(config_defaults()), base_dir_(std::filesystem::current_path()) {}

  void set(const std::string& key, const std::string& value) {
    if (!values_.contains(key)) throw UsageError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::logic_error("no config key " + key);
    return it->second;
  }

  std::uint64_t integer(const std::string& key) const {
    const std::string& v = str(key);
    std::size_t used = 0;
    unsigned long long n = 0;
    try {
      n = std::stoull(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty() || v[0] == '-')
      throw UsageError("config '" + key + "' must be a non-negative integer, got '" + v + "'");
    return n;
  }

  double real(const std::string& key) const {
    const std::string& v = str(key);
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty())
      throw UsageError("config '" + key + "' must be a number, got '" + v + "'");
    return x;
  }

  bool flag(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError("config '" + key + "' must be true or false, got '" + v + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(str(key));
    for (std::string item; std::getline(in, item, ',');)
      if (!item.empty()) out.push_back(item);
    return out;
  }

  std::filesystem::path path(const std::string& key) const {
    std::filesystem::path p(str(key));
    return p.is_absolute() ? p : base_dir_ / p;
  }

  void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }
  const std::filesystem::path& base_dir() const { return base_dir_; }

  /// Effective configuration, one "key = value" per line, with the output
  /// directory made absolute so the dump can be re-run from anywhere.
  std::string dump() const {
    std::string out;
    for (const auto& [k, v] : values_)
      out += k + " = " + (k == "out" ? std::filesystem::absolute(path("out")).lexically_normal().string() : v) + '\n';
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline RunConfig parse_config(const std::string& text, const std::string& where) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError(where + ":" + std::to_string(n) + ": expected 'key = value'");
    try {
      cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(where + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw UsageError("config file not found: " + file.string());
  RunConfig cfg = parse_config(read_file(file), file.string());
  cfg.set_base_dir(std::filesystem::absolute(file).parent_path());
  return cfg;
}

// ---------------------------------------------------------------------------
// Derived settings

inline CorpusSpec corpus_spec(const RunConfig& c) {
  CorpusSpec s;
  s.vocab_size = c.integer("vocab_size");
  s.size = c.integer("corpus_size");
  s.malware_fraction = c.real("malware_fraction");
  s.min_length = c.integer("min_length");
  s.max_length = c.integer("max_length");
  s.motif_count = c.integer("motif_count");
  s.motif_min_length = c.integer("motif_min_length");
  s.motif_max_length = c.integer("motif_max_length");
  s.motif_core_length = c.integer("motif_core_length");
  s.label_noise = c.real("label_noise");
  s.seed = derive_seed(c.integer("seed"), {1});
  return s;
}

inline std::uint64_t split_seed(const RunConfig& c) { return derive_seed(c.integer("seed"), {2}); }

inline std::size_t victim_index(const std::string& name) {
  for (std::size_t i = 0; i < kVictimNames.size(); ++i)
    if (kVictimNames[i] == name) return i;
  std::string valid;
  for (auto n : kVictimNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
  throw UsageError("unknown victim '" + name + "'; valid names: " + valid);
}

inline VictimConfig victim_config(const RunConfig& c, const std::string& name) {
  victim_index(name);
  auto [dir, head] = *parse_victim_name(name);
  return {dir, head, c.integer("victim_hidden"), c.integer("victim_attention_hidden"),
          c.integer("vocab_size")};
}

inline GumbelConfig gumbel_config(const RunConfig& c) {
  GumbelConfig g{c.real("temp"), c.integer("insert_len"), c.real("gamma")};
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return g;
}

/// Noise seed for generating evaluation examples against one victim.
inline std::uint64_t evaluation_seed(const RunConfig& c, const std::string& name) {
  return derive_seed(c.integer("seed"), {8, victim_index(name)});
}

// ---------------------------------------------------------------------------
// Artifact layout

struct Layout {
  std::filesystem::path root;

  std::filesystem::path corpus() const { return root / "corpus.jsonl"; }
  std::filesystem::path splits() const { return root / "splits.json"; }
  std::filesystem::path victim(const std::string& name) const { return root / "victims" / name; }
  std::filesystem::path attack(const std::string& name) const { return root / "attacks" / name; }
  std::filesystem::path report() const { return root / "report"; }
};

inline Layout layout(const RunConfig& c) { return {c.path("out")}; }

struct Dataset {
  Corpus corpus;
  Splits splits;

  Corpus subset(Subset s) const { return select(corpus, splits[s]); }
};

inline Dataset load_dataset(const RunConfig& c) {
  const Layout l = layout(c);
  for (const auto& p : {l.corpus(), l.splits()})
    if (!std::filesystem::exists(p))
      throw std::runtime_error("missing " + p.string() + " (run the corpus command first)");
  Dataset d{load_corpus(l.corpus(), c.integer("vocab_size")), load_splits(l.splits())};
  truncate(d.corpus, c.integer("max_sequence_length"));
  return d;
}

inline std::vector<Sequence> sequences(const Corpus& c, int label = -1) {
  std::vector<Sequence> out;
  for (const auto& e : c)
    if (label < 0 || e.label == label) out.push_back(e.sequence);
  return out;
}

inline std::vector<int> labels(const Corpus& c) {
  std::vector<int> out;
  for (const auto& e : c) out.push_back(e.label);
  return out;
}

inline std::vector<std::size_t> ids(const Corpus& c, int label = -1) {
  std::vector<std::size_t> out;
  for (const auto& e : c)
    if (label < 0 || e.label == label) out.push_back(e.id);
  return out;
}

inline SequenceClassifier load_victim(const RunConfig& c, const std::string& name) {
  victim_index(name);
  const auto base = layout(c).victim(name);
  if (!std::filesystem::exists(base.string() + ".ckpt"))
    throw std::runtime_error("missing victim checkpoint " + base.string() + ".ckpt");
  return load_classifier(base);
}

inline AttackModel load_attack_for(const RunConfig& c, const std::string& name) {
  const auto dir = layout(c).attack(name);
  if (!std::filesystem::exists(dir / "generator.ckpt"))
    throw std::runtime_error("missing attack checkpoint " + (dir / "generator.ckpt").string());
  return load_attack(dir);
}

// ---------------------------------------------------------------------------
// Commands

inline void cmd_corpus(const RunConfig& c, std::ostream& log) {
  const Layout l = layout(c);
  CorpusSpec spec = corpus_spec(c);
  Corpus corpus;
  Splits splits;
  try {
    corpus = generate_corpus(spec);
    splits = split(corpus, split_seed(c));
  } catch (const std::exception& e) {
    throw UsageError(std::string("invalid corpus spec: ") + e.what());
  }
  save_corpus(l.corpus(), corpus);
  save_splits(l.splits(), splits);
  write_file(l.root / "corpus.conf", c.dump());
  std::size_t mal = 0;
  for (const auto& e : corpus) mal += e.label;
  log << "corpus: " << corpus.size() << " examples, " << mal << " malware -> " << l.corpus().string()
      << '\n';
  for (Subset s : kSubsets) {
    std::size_t m = 0;
    for (std::size_t id : splits[s]) m += corpus[id].label;
    log << "  " << subset_name(s) << ": " << splits[s].size() << " (" << m << " malware)\n";
  }
}

struct VictimAucRow {
  double train_auc, validation_auc, test_auc;
};

inline VictimAucRow victim_aucs(const SequenceClassifier& v, const Dataset& d) {
  auto score = [&](Subset s) {
    const Corpus part = d.subset(s);
    return auc(make_scored(labels(part), v.predict_all(sequences(part))));
  };
  return {score(Subset::VictimTrain), score(Subset::VictimValidation), score(Subset::Test)};
}

inline void cmd_train_victim(const RunConfig& c, const std::string& name, std::ostream& log) {
  const VictimConfig vc = victim_config(c, name);
  const std::size_t idx = victim_index(name);
  const Dataset d = load_dataset(c);
  const Corpus train = d.subset(Subset::VictimTrain), val = d.subset(Subset::VictimValidation);

  SequenceClassifier victim(vc, "victim");
  victim.initialize(derive_seed(c.integer("seed"), {3, idx}));
  ClassifierTrainOptions opt;
  opt.epochs = c.integer("victim_epochs");
  opt.batch_size = c.integer("victim_batch_size");
  opt.lr = c.real("victim_lr");
  opt.patience = c.integer("victim_patience");
  opt.clip_norm = c.real("victim_clip_norm");
  opt.seed = derive_seed(c.integer("seed"), {4, idx});
  const auto result = train_classifier(victim, sequences(train), labels(train), sequences(val),
                                       labels(val), opt);

  const auto base = layout(c).victim(name);
  save_classifier(base, victim);
  std::string log_csv = "epoch,train_loss,validation_auc\n";
  for (const auto& e : result.log)
    log_csv += std::to_string(e.epoch) + ',' + format_number(e.train_loss) + ',' +
               format_number(e.validation_auc) + '\n';
  write_file(base.string() + ".log.csv", log_csv);
  const VictimAucRow row = victim_aucs(victim, d);
  write_file(base.string() + ".auc.csv",
             "config,train_auc,validation_auc,test_auc\n" + name + ',' + format_number(row.train_auc) +
                 ',' + format_number(row.validation_auc) + ',' + format_number(row.test_auc) + '\n');
  write_file(base.string() + ".conf", c.dump());
  log << name << ": " << result.log.size() << " epochs, best " << result.best_epoch
      << "; AUC train " << row.train_auc << " validation " << row.validation_auc << " test "
      << row.test_auc << '\n';
}

inline void cmd_train_attack(const RunConfig& c, const std::string& name, std::ostream& log) {
  const std::size_t idx = victim_index(name);
  const std::size_t M = c.integer("vocab_size");
  const SequenceClassifier victim = load_victim(c, name);
  if (victim.config().input_dim != M)
    throw std::runtime_error("incompatible vocabulary: victim checkpoint expects " +
                             std::to_string(victim.config().input_dim) + " symbols, corpus has " +
                             std::to_string(M));
  const Dataset d = load_dataset(c);
  const Corpus train = d.subset(Subset::AttackerTrain);
  const Corpus val = d.subset(Subset::AttackerValidation);
  const Corpus test = d.subset(Subset::Test);
  const auto malware = sequences(train, 1), benign = sequences(train, 0);
  const auto val_malware = sequences(val, 1);

  const std::uint64_t seed = c.integer("seed");
  AttackModel m{Generator({M, c.integer("generator_hidden")}),
                make_substitute(M, c.integer("substitute_hidden"),
                                c.integer("substitute_attention_hidden")),
                gumbel_config(c)};
  m.generator.initialize(derive_seed(seed, {5, idx}));
  m.substitute.initialize(derive_seed(seed, {6, idx}));
  AttackTrainOptions opt;
  opt.gumbel = m.gumbel;
  opt.epochs = c.integer("attack_epochs");
  opt.patience = c.integer("attack_patience");
  opt.batch_size = c.integer("attack_batch_size");
  opt.generator_lr = opt.substitute_lr = c.real("attack_lr");
  opt.clip_norm = c.real("attack_clip_norm");
  opt.seed = derive_seed(seed, {7, idx});

  VictimOracle oracle(victim);
  const auto result = train_attack(m.generator, m.substitute, oracle,
                                   {malware, benign, val_malware}, opt, [&](const AttackEpoch& e) {
                                     log << name << " epoch " << e.epoch << ": L_S "
                                         << e.substitute_loss << " L_G " << e.generator_loss
                                         << " validation success " << e.validation_success << '\n';
                                   });

  const auto dir = layout(c).attack(name);
  save_attack(dir, m);
  std::string log_csv = "epoch,substitute_loss,generator_loss,validation_success\n";
  for (const auto& e : result.log)
    log_csv += std::to_string(e.epoch) + ',' + format_number(e.substitute_loss) + ',' +
               format_number(e.generator_loss) + ',' + format_number(e.validation_success) + '\n';
  write_file(dir / "log.csv", log_csv);

  const auto test_ids = ids(test, 1);
  auto samples = generate(m.generator, m.gumbel, sequences(test, 1), test_ids,
                          evaluation_seed(c, name), &m.substitute);
  label_samples(oracle, samples);
  write_file(dir / "adversarial_test.jsonl", adversarial_jsonl(samples, test_ids));
  write_file(dir / "attack.conf", c.dump());
  log << name << ": best epoch " << result.best_epoch << ", validation success "
      << result.best_success << '\n';
}

/// Adversarial examples for one subset's malware, generated with the
/// evaluation noise of the attacked victim.
inline std::vector<AttackSample> evaluation_samples(const RunConfig& c, const std::string& name,
                                                    const AttackModel& m, const Corpus& part) {
  return generate(m.generator, m.gumbel, sequences(part, 1), ids(part, 1), evaluation_seed(c, name),
                  &m.substitute);
}

inline Report build_report(const RunConfig& c, const std::vector<std::string>& victims,
                           const std::vector<std::string>& attacks, bool transfer) {
  const Dataset d = load_dataset(c);
  Report r;
  for (const auto& name : victims) {
    const auto row = victim_aucs(load_victim(c, name), d);
    r.victims.push_back({name, row.train_auc, row.test_auc});
  }
  const Corpus train = d.subset(Subset::AttackerTrain), test = d.subset(Subset::Test);
  std::vector<SequenceClassifier> attacked;
  std::vector<std::vector<Sequence>> crafted;
  for (const auto& name : attacks) {
    attacked.push_back(load_victim(c, name));
    const AttackModel m = load_attack_for(c, name);
    if (m.generator.config().vocab_size != c.integer("vocab_size"))
      throw std::runtime_error("incompatible vocabulary in attack " + name);
    const auto test_samples = evaluation_samples(c, name, m, test);
    r.attacks.push_back(
        attack_row(name, attacked.back(), evaluation_samples(c, name, m, train), test_samples));
    crafted.push_back(adversarial_sequences(test_samples));
  }
  if (transfer) {
    if (attacks.size() < 2) throw UsageError("transfer matrix needs at least two attacks");
    std::vector<const SequenceClassifier*> ptrs;
    for (const auto& v : attacked) ptrs.push_back(&v);
    r.transfer = transfer_matrix(attacks, ptrs, crafted);
  }
  return r;
}

inline void cmd_evaluate(const RunConfig& c, const std::optional<std::string>& only,
                         std::ostream& log) {
  std::vector<std::string> victims = c.list("victims"), attacks = c.list("attacks");
  if (only) {
    victims = {*only};
    attacks.clear();
    if (std::filesystem::exists(layout(c).attack(*only) / "generator.ckpt")) attacks = {*only};
  }
  for (const auto& n : victims) victim_index(n);
  for (const auto& n : attacks) victim_index(n);
  const Report r = build_report(c, victims, attacks, c.flag("transfer"));
  const auto dir = layout(c).report();
  emit_report(dir, r);
  write_file(dir / "evaluate.conf", c.dump());
  for (const auto& v : r.victims)
    log << v.config << ": AUC train " << v.train_auc << " test " << v.test_auc << '\n';
  for (const auto& a : r.attacks)
    log << a.config << ": detection train " << a.train_original << " -> " << a.train_adversarial
        << ", test " << a.test_original << " -> " << a.test_adversarial << '\n';
  log << "wrote " << (dir / "table1.csv").string() << " and " << (dir / "table2.csv").string()
      << '\n';
}

}  // namespace seqadv::cli
