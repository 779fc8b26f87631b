#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "seqadv/core/checkpoint.hpp"
#include "seqadv/seqnets/classifier.hpp"

namespace seqadv {

/// Parses "key value" lines; blank lines and '#' comments are skipped.
inline std::map<std::string, std::string> parse_descriptor(const std::string& text,
                                                           const std::string& what) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key, value;
    if (!(ls >> key >> value)) throw std::runtime_error(what + ": bad line " + std::to_string(n));
    kv[key] = value;
  }
  return kv;
}

inline const std::string& descriptor_field(const std::map<std::string, std::string>& kv,
                                           const std::string& key, const std::string& what) {
  auto it = kv.find(key);
  if (it == kv.end()) throw std::runtime_error(what + ": missing field '" + key + "'");
  return it->second;
}

inline std::string describe(const SequenceClassifier& model) {
  const VictimConfig& c = model.config();
  std::ostringstream os;
  os << "name " << victim_name(c.direction, c.head) << '\n'
     << "direction " << (c.direction == Direction::Bidirectional ? "bidirectional" : "forward") << '\n'
     << "head "
     << (c.head == Head::LastState ? "last" : c.head == Head::Average ? "average" : "attention")
     << '\n'
     << "hidden " << c.hidden << '\n'
     << "attention_hidden " << c.attention_hidden << '\n'
     << "input_dim " << c.input_dim << '\n'
     << "prefix " << model.prefix() << '\n';
  return os.str();
}

inline SequenceClassifier classifier_from_descriptor(const std::string& text) {
  const auto kv = parse_descriptor(text, "model descriptor");
  auto field = [&](const std::string& k) -> const std::string& {
    return descriptor_field(kv, k, "model descriptor");
  };
  VictimConfig c;
  const std::string& dir = field("direction");
  if (dir == "forward") c.direction = Direction::Forward;
  else if (dir == "bidirectional") c.direction = Direction::Bidirectional;
  else throw std::runtime_error("model descriptor: unknown direction '" + dir + "'");
  const std::string& head = field("head");
  if (head == "last") c.head = Head::LastState;
  else if (head == "average") c.head = Head::Average;
  else if (head == "attention") c.head = Head::Attention;
  else throw std::runtime_error("model descriptor: unknown head '" + head + "'");
  c.hidden = std::stoull(field("hidden"));
  c.attention_hidden = std::stoull(field("attention_hidden"));
  c.input_dim = std::stoull(field("input_dim"));
  return SequenceClassifier(c, field("prefix"));
}

/// Writes <base>.ckpt and <base>.desc.
inline void save_classifier(const std::filesystem::path& base, const SequenceClassifier& model) {
  save_checkpoint(base.string() + ".ckpt", model.params());
  write_file(base.string() + ".desc", describe(model));
}

inline SequenceClassifier load_classifier(const std::filesystem::path& base) {
  SequenceClassifier model = classifier_from_descriptor(read_file(base.string() + ".desc"));
  model.set_params(load_checkpoint(base.string() + ".ckpt"));
  return model;
}

}  // namespace seqadv
