#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqadv/attack/generator.hpp"
#include "seqadv/core/checkpoint.hpp"
#include "seqadv/seqnets/model_io.hpp"

namespace seqadv {

struct AttackModel {
  Generator generator;
  SequenceClassifier substitute;
  GumbelConfig gumbel;
};

inline std::string describe(const AttackModel& m) {
  std::ostringstream os;
  os.precision(17);
  os << "vocab_size " << m.generator.config().vocab_size << '\n'
     << "generator_hidden " << m.generator.config().hidden << '\n'
     << "substitute_hidden " << m.substitute.config().hidden << '\n'
     << "substitute_attention_hidden " << m.substitute.config().attention_hidden << '\n'
     << "temp " << m.gumbel.temp << '\n'
     << "insert_len " << m.gumbel.insert_len << '\n'
     << "gamma " << m.gumbel.gamma << '\n';
  return os.str();
}

/// Writes generator.ckpt, substitute.ckpt and attack.desc into `dir`.
inline void save_attack(const std::filesystem::path& dir, const AttackModel& m) {
  save_checkpoint(dir / "generator.ckpt", m.generator.params());
  save_checkpoint(dir / "substitute.ckpt", m.substitute.params());
  write_file(dir / "attack.desc", describe(m));
}

inline AttackModel load_attack(const std::filesystem::path& dir) {
  const auto kv = parse_descriptor(read_file(dir / "attack.desc"), "attack descriptor");
  auto field = [&](const std::string& k) { return descriptor_field(kv, k, "attack descriptor"); };
  const std::size_t M = std::stoull(field("vocab_size"));
  AttackModel m{Generator({M, std::stoull(field("generator_hidden"))}),
                make_substitute(M, std::stoull(field("substitute_hidden")),
                                std::stoull(field("substitute_attention_hidden"))),
                {std::stod(field("temp")), std::stoull(field("insert_len")), std::stod(field("gamma"))}};
  m.gumbel.validate();
  m.generator.set_params(load_checkpoint(dir / "generator.ckpt"));
  m.substitute.set_params(load_checkpoint(dir / "substitute.ckpt"));
  return m;
}

/// One JSON line per sample: id, original, adversarial, inserted positions,
/// victim label v and substitute probability p_s.
inline std::string adversarial_jsonl(const std::vector<AttackSample>& samples,
                                     const std::vector<std::size_t>& ids) {
  std::string out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const AttackSample& s = samples[i];
    nlohmann::ordered_json j;
    j["id"] = ids.at(i);
    j["original"] = s.original;
    j["adversarial"] = s.adversarial;
    j["inserted"] = s.inserted;
    j["v"] = s.victim_label;
    j["p_s"] = s.substitute_p;
    out += j.dump() + '\n';
  }
  return out;
}

}  // namespace seqadv
