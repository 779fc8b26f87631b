#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqadv {

/// Symbol indices of one API call sequence.
using Sequence = std::vector<int>;

/// M valid API symbols numbered 0..M-1 plus the reserved null symbol M.
class Vocabulary {
 public:
  explicit Vocabulary(std::size_t size) : size_(size) {
    if (size < 2) throw std::invalid_argument("vocabulary needs at least 2 symbols");
  }

  std::size_t size() const { return size_; }
  int null_index() const { return static_cast<int>(size_); }
  /// Width of rows that can also carry the null symbol.
  std::size_t extended_size() const { return size_ + 1; }

  bool valid(int symbol) const { return symbol >= 0 && static_cast<std::size_t>(symbol) < size_; }

  std::string name(int symbol) const {
    if (symbol == null_index()) return "<null>";
    if (!valid(symbol)) throw std::out_of_range("symbol " + std::to_string(symbol) + " out of range");
    return "api" + std::to_string(symbol);
  }

  /// Throws naming the first symbol outside [0, limit).
  static void check_range(const Sequence& seq, std::size_t limit) {
    for (std::size_t i = 0; i < seq.size(); ++i)
      if (seq[i] < 0 || static_cast<std::size_t>(seq[i]) >= limit)
        throw std::out_of_range("symbol " + std::to_string(seq[i]) + " at position " +
                                std::to_string(i) + " outside [0, " + std::to_string(limit) +
                                ")");
  }

 private:
  std::size_t size_;
};

}  // namespace seqadv
