#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "seqadv/core/checkpoint.hpp"
#include "seqadv/core/rng.hpp"
#include "seqadv/seqnets/vocabulary.hpp"

namespace seqadv {

/// Synthetic API-sequence corpus: benign sequences are i.i.d. uniform symbols,
/// malware sequences are the same background with one motif written
/// contiguously at a random offset.
struct CorpusSpec {
  std::size_t vocab_size = 30;
  /// Explicit motifs; generated from the seed when empty.
  std::vector<Sequence> motifs;
  std::size_t motif_count = 5;
  std::size_t motif_min_length = 4;
  std::size_t motif_max_length = 6;
  /// Length of a core shared by all generated motifs; 0 makes them independent.
  std::size_t motif_core_length = 3;
  std::size_t min_length = 20;
  std::size_t max_length = 100;
  double malware_fraction = 0.7;
  std::size_t size = 1000;
  double label_noise = 0.0;
  std::uint64_t seed = 1;
};

struct Provenance {
  std::optional<std::size_t> motif;  // embedded motif, if any
  bool flipped = false;              // label flipped by label noise
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct LabeledExample {
  std::size_t id = 0;
  Sequence sequence;
  int label = 0;  // 0 benign, 1 malware
  Provenance provenance;
  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

using Corpus = std::vector<LabeledExample>;

inline std::vector<Sequence> resolve_motifs(const CorpusSpec& spec) {
  if (!spec.motifs.empty()) return spec.motifs;
  if (spec.motif_min_length == 0 || spec.motif_min_length > spec.motif_max_length)
    throw std::invalid_argument("corpus: bad motif length range");
  if (spec.motif_core_length > spec.motif_min_length)
    throw std::invalid_argument("corpus: motif core longer than the shortest motif");
  Rng rng = Rng::stream(spec.seed, {0x6d6f74});
  auto draw = [&] { return static_cast<int>(rng.index(spec.vocab_size)); };
  Sequence core(spec.motif_core_length);
  for (int& v : core) v = draw();
  std::vector<Sequence> motifs;
  while (motifs.size() < spec.motif_count) {
    const std::size_t len = rng.between(spec.motif_min_length, spec.motif_max_length);
    const std::size_t at = rng.between(0, len - core.size());
    Sequence s(len);
    for (int& v : s) v = draw();
    std::copy(core.begin(), core.end(), s.begin() + at);
    if (std::find(motifs.begin(), motifs.end(), s) == motifs.end()) motifs.push_back(std::move(s));
  }
  return motifs;
}

inline void validate(const CorpusSpec& spec, const std::vector<Sequence>& motifs) {
  if (spec.vocab_size < 2) throw std::invalid_argument("corpus: vocabulary needs >= 2 symbols");
  if (!(spec.malware_fraction > 0.0 && spec.malware_fraction < 1.0))
    throw std::invalid_argument("corpus: malware fraction must lie in (0, 1)");
  if (spec.min_length == 0 || spec.min_length > spec.max_length)
    throw std::invalid_argument("corpus: bad sequence length range");
  if (!(spec.label_noise >= 0.0 && spec.label_noise <= 1.0))
    throw std::invalid_argument("corpus: label noise must lie in [0, 1]");
  if (motifs.empty()) throw std::invalid_argument("corpus: no motifs");
  for (std::size_t m = 0; m < motifs.size(); ++m) {
    if (motifs[m].empty()) throw std::invalid_argument("corpus: empty motif");
    if (motifs[m].size() > spec.min_length)
      throw std::invalid_argument("corpus: motif " + std::to_string(m) + " has length " +
                                  std::to_string(motifs[m].size()) +
                                  ", longer than the minimum sequence length " +
                                  std::to_string(spec.min_length));
    Vocabulary::check_range(motifs[m], spec.vocab_size);
  }
}

inline std::size_t malware_count(const CorpusSpec& spec) {
  return static_cast<std::size_t>(static_cast<double>(spec.size) * spec.malware_fraction + 0.5);
}

inline bool contains_contiguous(const Sequence& seq, const Sequence& motif) {
  return std::search(seq.begin(), seq.end(), motif.begin(), motif.end()) != seq.end();
}

/// Exact substring scan: 1 if any motif occurs contiguously, else 0.
inline double motif_scan_score(const Sequence& seq, const std::vector<Sequence>& motifs) {
  for (const Sequence& m : motifs)
    if (contains_contiguous(seq, m)) return 1.0;
  return 0.0;
}

/// Deterministic per seed; example i draws from its own stream (seed, i).
/// Benign backgrounds that happen to contain a motif are redrawn.
inline Corpus generate_corpus(const CorpusSpec& spec) {
  const std::vector<Sequence> motifs = resolve_motifs(spec);
  validate(spec, motifs);

  std::vector<int> labels(spec.size, 0);
  std::fill_n(labels.begin(), malware_count(spec), 1);
  Rng label_rng = Rng::stream(spec.seed, {0x6c6162});
  label_rng.shuffle(labels);

  Corpus corpus;
  corpus.reserve(spec.size);
  for (std::size_t i = 0; i < spec.size; ++i) {
    Rng rng = Rng::stream(spec.seed, {0x657865, i});
    LabeledExample ex;
    ex.id = i;
    ex.label = labels[i];
    ex.sequence.resize(rng.between(spec.min_length, spec.max_length));
    do {
      for (int& v : ex.sequence) v = static_cast<int>(rng.index(spec.vocab_size));
    } while (ex.label == 0 && motif_scan_score(ex.sequence, motifs) > 0.0);
    if (ex.label == 1) {
      const std::size_t m = rng.index(motifs.size());
      const std::size_t at = rng.between(0, ex.sequence.size() - motifs[m].size());
      std::copy(motifs[m].begin(), motifs[m].end(), ex.sequence.begin() + at);
      ex.provenance.motif = m;
    }
    if (spec.label_noise > 0.0 && rng.uniform_open() < spec.label_noise) {
      ex.label = 1 - ex.label;
      ex.provenance.flipped = true;
    }
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

/// Truncates every sequence to at most `cap` symbols.
inline void truncate(Corpus& corpus, std::size_t cap) {
  for (LabeledExample& ex : corpus)
    if (ex.sequence.size() > cap) ex.sequence.resize(cap);
}

// ---------------------------------------------------------------------------
// Five-way split

enum class Subset { AttackerTrain, AttackerValidation, VictimTrain, VictimValidation, Test };

inline constexpr std::array<Subset, 5> kSubsets = {Subset::AttackerTrain, Subset::AttackerValidation,
                                                   Subset::VictimTrain, Subset::VictimValidation,
                                                   Subset::Test};

inline std::string_view subset_name(Subset s) {
  switch (s) {
    case Subset::AttackerTrain: return "attacker_train";
    case Subset::AttackerValidation: return "attacker_validation";
    case Subset::VictimTrain: return "victim_train";
    case Subset::VictimValidation: return "victim_validation";
    case Subset::Test: return "test";
  }
  return "";
}

/// Percentages of the five subsets, in kSubsets order.
struct SplitSpec {
  std::array<std::size_t, 5> percent = {30, 10, 30, 10, 20};
};

struct Splits {
  std::array<std::vector<std::size_t>, 5> ids;

  const std::vector<std::size_t>& operator[](Subset s) const { return ids[static_cast<int>(s)]; }
  std::vector<std::size_t>& operator[](Subset s) { return ids[static_cast<int>(s)]; }
  friend bool operator==(const Splits&, const Splits&) = default;
};

/// Sizes from rounding cumulative proportions, so every subset is within one
/// example of its target and the sizes sum exactly.
inline std::array<std::size_t, 5> cumulative_allocation(std::size_t n, const SplitSpec& spec) {
  std::array<std::size_t, 5> sizes{};
  std::size_t cum_pct = 0, prev = 0;
  for (std::size_t k = 0; k < 5; ++k) {
    cum_pct += spec.percent[k];
    const std::size_t bound = (n * cum_pct + 50) / 100;
    sizes[k] = bound - prev;
    prev = bound;
  }
  return sizes;
}

/// Stratified disjoint partition. Subset sizes and per-subset malware counts
/// each come from cumulative rounding; benign fills the remainder.
inline Splits split(const Corpus& corpus, std::uint64_t seed, const SplitSpec& spec = {}) {
  std::size_t total_pct = 0;
  for (std::size_t p : spec.percent) total_pct += p;
  if (total_pct != 100) throw std::invalid_argument("split: percentages must sum to 100");
  if (corpus.size() < 10)
    throw std::invalid_argument("split: corpus of " + std::to_string(corpus.size()) +
                                " is too small to stratify (need >= 10)");

  std::vector<std::size_t> mal, ben;
  for (std::size_t i = 0; i < corpus.size(); ++i) (corpus[i].label ? mal : ben).push_back(i);
  const auto totals = cumulative_allocation(corpus.size(), spec);
  const auto mal_sizes = cumulative_allocation(mal.size(), spec);
  std::array<std::size_t, 5> ben_sizes{};
  for (std::size_t k = 0; k < 5; ++k) {
    if (totals[k] == 0 || mal_sizes[k] > totals[k])
      throw std::invalid_argument("split: corpus too small to stratify subset " +
                                  std::string(subset_name(kSubsets[k])));
    ben_sizes[k] = totals[k] - mal_sizes[k];
  }

  Rng rng = Rng::stream(seed, {0x73706c});
  rng.shuffle(mal);
  rng.shuffle(ben);
  Splits out;
  std::size_t mi = 0, bi = 0;
  for (std::size_t k = 0; k < 5; ++k) {
    auto& dst = out.ids[k];
    for (std::size_t j = 0; j < mal_sizes[k]; ++j) dst.push_back(corpus[mal[mi++]].id);
    for (std::size_t j = 0; j < ben_sizes[k]; ++j) dst.push_back(corpus[ben[bi++]].id);
    std::sort(dst.begin(), dst.end());
  }
  return out;
}

/// Examples of one subset, looked up by id.
inline Corpus select(const Corpus& corpus, const std::vector<std::size_t>& ids) {
  std::vector<const LabeledExample*> by_id;
  for (const LabeledExample& ex : corpus) {
    if (ex.id >= by_id.size()) by_id.resize(ex.id + 1, nullptr);
    by_id[ex.id] = &ex;
  }
  Corpus out;
  for (std::size_t id : ids) {
    if (id >= by_id.size() || !by_id[id])
      throw std::out_of_range("split refers to unknown example id " + std::to_string(id));
    out.push_back(*by_id[id]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: JSON lines {id, label, indices, provenance}, one example per
// line; splits as one JSON object mapping subset name to example ids.

inline std::string to_json_line(const LabeledExample& ex) {
  nlohmann::ordered_json j;
  j["id"] = ex.id;
  j["label"] = ex.label;
  j["indices"] = ex.sequence;
  nlohmann::ordered_json prov;
  prov["motif"] = ex.provenance.motif ? nlohmann::ordered_json(*ex.provenance.motif) : nullptr;
  prov["flipped"] = ex.provenance.flipped;
  j["provenance"] = prov;
  return j.dump();
}

inline void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::string text;
  for (const LabeledExample& ex : corpus) text += to_json_line(ex) + '\n';
  write_file(path, text);
}

/// Loads and validates a corpus; indices must lie in [0, vocab_size).
inline Corpus load_corpus(const std::filesystem::path& path, std::size_t vocab_size) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus: " + path.string());
  Corpus corpus;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(n) + ": ";
    LabeledExample ex;
    try {
      const auto j = nlohmann::json::parse(line);
      ex.id = j.at("id").get<std::size_t>();
      ex.label = j.at("label").get<int>();
      ex.sequence = j.at("indices").get<Sequence>();
      const auto& prov = j.at("provenance");
      if (!prov.at("motif").is_null()) ex.provenance.motif = prov.at("motif").get<std::size_t>();
      ex.provenance.flipped = prov.value("flipped", false);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + "malformed example: " + e.what());
    }
    if (ex.label != 0 && ex.label != 1)
      throw std::runtime_error(where + "label must be 0 or 1");
    if (ex.sequence.empty()) throw std::runtime_error(where + "empty sequence");
    try {
      Vocabulary::check_range(ex.sequence, vocab_size);
    } catch (const std::out_of_range& e) {
      throw std::out_of_range(where + e.what());
    }
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

inline void save_splits(const std::filesystem::path& path, const Splits& splits) {
  nlohmann::ordered_json j;
  for (Subset s : kSubsets) j[std::string(subset_name(s))] = splits[s];
  write_file(path, j.dump() + '\n');
}

inline Splits load_splits(const std::filesystem::path& path) {
  Splits out;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    for (Subset s : kSubsets)
      out[s] = j.at(std::string(subset_name(s))).get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed split file: " + e.what());
  }
  return out;
}

}  // namespace seqadv
