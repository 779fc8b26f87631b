#pragma once

#include <charconv>
#include <filesystem>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "seqadv/attack/generator.hpp"
#include "seqadv/core/checkpoint.hpp"
#include "seqadv/eval/metrics.hpp"

namespace seqadv {

/// One row of the victim-quality table.
struct VictimRow {
  std::string config;
  double train_auc = 0.0;
  double test_auc = 0.0;
  friend bool operator==(const VictimRow&, const VictimRow&) = default;
};

/// One row of the attack table. "train" is the attacker's training malware,
/// "test" the shared held-out malware.
struct AttackRow {
  std::string config;
  double train_original = 0.0;
  double train_adversarial = 0.0;
  double test_original = 0.0;
  double test_adversarial = 0.0;
  double length_inflation = 0.0;  // mean |adversarial| / |original| on test
  double null_fraction = 0.0;     // null proposals / all proposals on test
  friend bool operator==(const AttackRow&, const AttackRow&) = default;
};

/// rate[i][j]: detection rate of victim j on examples crafted against victim i.
struct TransferMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rate;
  friend bool operator==(const TransferMatrix&, const TransferMatrix&) = default;
};

struct Report {
  std::vector<VictimRow> victims;
  std::vector<AttackRow> attacks;
  std::optional<TransferMatrix> transfer;
};

inline AttackRow attack_row(const std::string& config, const SequenceClassifier& victim,
                            const std::vector<AttackSample>& train,
                            const std::vector<AttackSample>& test) {
  if (train.empty() || test.empty()) throw std::invalid_argument("attack_row: empty sample set");
  auto rates = [&](const std::vector<AttackSample>& samples) {
    std::vector<Sequence> orig, adv;
    for (const AttackSample& s : samples) {
      orig.push_back(s.original);
      adv.push_back(s.adversarial);
    }
    return std::pair{detection_rate(victim.predict_all(orig)),
                     detection_rate(victim.predict_all(adv))};
  };
  AttackRow row{config};
  std::tie(row.train_original, row.train_adversarial) = rates(train);
  std::tie(row.test_original, row.test_adversarial) = rates(test);
  std::size_t nulls = 0, proposals = 0;
  for (const AttackSample& s : test) {
    row.length_inflation +=
        static_cast<double>(s.adversarial.size()) / static_cast<double>(s.original.size());
    nulls += s.nulls;
    proposals += s.proposals;
  }
  row.length_inflation /= static_cast<double>(test.size());
  row.null_fraction = static_cast<double>(nulls) / static_cast<double>(proposals);
  return row;
}

/// `crafted[i]` holds adversarial sequences generated against `victims[i]`.
inline TransferMatrix transfer_matrix(const std::vector<std::string>& names,
                                      const std::vector<const SequenceClassifier*>& victims,
                                      const std::vector<std::vector<Sequence>>& crafted) {
  if (victims.size() < 2) throw std::invalid_argument("transfer_matrix: needs at least two victims");
  if (names.size() != victims.size() || crafted.size() != victims.size())
    throw std::invalid_argument("transfer_matrix: one name and one example set per victim");
  TransferMatrix m{names, {}};
  for (const auto& examples : crafted) {
    std::vector<double> row;
    for (const SequenceClassifier* v : victims) row.push_back(detection_rate(v->predict_all(examples)));
    m.rate.push_back(std::move(row));
  }
  return m;
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest text that parses back to the same double.
inline std::string format_number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("cannot format number");
  return std::string(buf, end);
}

inline double parse_number(const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw std::runtime_error("csv: bad number '" + s + "'");
  return v;
}

inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline constexpr const char* kTable1Header = "config,train_auc,test_auc";
inline constexpr const char* kTable2Header =
    "config,train_original,train_adversarial,test_original,test_adversarial,length_inflation,"
    "null_fraction";

inline std::string table1_csv(const std::vector<VictimRow>& rows) {
  std::string out = std::string(kTable1Header) + '\n';
  for (const auto& r : rows)
    out += r.config + ',' + format_number(r.train_auc) + ',' + format_number(r.test_auc) + '\n';
  return out;
}

inline std::string table2_csv(const std::vector<AttackRow>& rows) {
  std::string out = std::string(kTable2Header) + '\n';
  for (const auto& r : rows) {
    out += r.config;
    for (double v : {r.train_original, r.train_adversarial, r.test_original, r.test_adversarial,
                     r.length_inflation, r.null_fraction})
      out += ',' + format_number(v);
    out += '\n';
  }
  return out;
}

inline std::string transfer_csv(const TransferMatrix& m) {
  std::string out = "crafted_against";
  for (const auto& n : m.names) out += ',' + n;
  out += '\n';
  for (std::size_t i = 0; i < m.names.size(); ++i) {
    out += m.names[i];
    for (double v : m.rate[i]) out += ',' + format_number(v);
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::vector<std::vector<std::string>> table_body(const std::string& text,
                                                        const std::string& header,
                                                        std::size_t columns) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw std::runtime_error("csv: missing header");
  std::string got;
  for (std::size_t i = 0; i < rows[0].size(); ++i) got += (i ? "," : "") + rows[0][i];
  if (got != header) throw std::runtime_error("csv: unexpected header '" + got + "'");
  rows.erase(rows.begin());
  for (const auto& r : rows)
    if (r.size() != columns) throw std::runtime_error("csv: row with wrong column count");
  return rows;
}

}  // namespace detail

inline std::vector<VictimRow> parse_table1(const std::string& text) {
  std::vector<VictimRow> out;
  for (const auto& r : detail::table_body(text, kTable1Header, 3))
    out.push_back({r[0], parse_number(r[1]), parse_number(r[2])});
  return out;
}

inline std::vector<AttackRow> parse_table2(const std::string& text) {
  std::vector<AttackRow> out;
  for (const auto& r : detail::table_body(text, kTable2Header, 7))
    out.push_back({r[0], parse_number(r[1]), parse_number(r[2]), parse_number(r[3]),
                   parse_number(r[4]), parse_number(r[5]), parse_number(r[6])});
  return out;
}

inline TransferMatrix parse_transfer(const std::string& text) {
  auto rows = parse_csv(text);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "crafted_against")
    throw std::runtime_error("csv: not a transfer matrix");
  TransferMatrix m{{rows[0].begin() + 1, rows[0].end()}, {}};
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != m.names.size() + 1) throw std::runtime_error("csv: ragged transfer row");
    std::vector<double> r;
    for (std::size_t j = 1; j < rows[i].size(); ++j) r.push_back(parse_number(rows[i][j]));
    m.rate.push_back(std::move(r));
  }
  return m;
}

/// Writes table1.csv and table2.csv (and transfer.csv when present) to `dir`.
inline void emit_report(const std::filesystem::path& dir, const Report& report) {
  write_file(dir / "table1.csv", table1_csv(report.victims));
  write_file(dir / "table2.csv", table2_csv(report.attacks));
  if (report.transfer) write_file(dir / "transfer.csv", transfer_csv(*report.transfer));
}

}  // namespace seqadv
