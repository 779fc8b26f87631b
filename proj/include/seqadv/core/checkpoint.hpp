#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqadv/core/tensor.hpp"

// Checkpoint layout, one file per ParameterStore:
//
//   seqadv-checkpoint 1\n
//   tensors <count>\n
//   <name> <d0>,<d1>,... <offset>\n      one line per tensor, sorted by name
//   payload\n
//   <raw IEEE-754 binary64 values, little-endian>
//
// <offset> is the byte offset of the tensor's first value counted from the
// first payload byte. Tensors are stored back to back in header order.

namespace seqadv {

namespace detail {

inline void put_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

inline double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 7; b >= 0; --b) bits = (bits << 8) | p[b];
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline std::string encode_checkpoint(const ParameterStore& store) {
  std::ostringstream header;
  header << "seqadv-checkpoint 1\n" << "tensors " << store.size() << '\n';
  std::string payload;
  for (const auto& [name, t] : store) {
    header << name << ' ';
    for (std::size_t i = 0; i < t.shape().size(); ++i) header << (i ? "," : "") << t.shape()[i];
    header << ' ' << payload.size() << '\n';
    for (double v : t.data()) detail::put_le(payload, v);
  }
  header << "payload\n";
  return header.str() + payload;
}

inline ParameterStore decode_checkpoint(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw std::runtime_error("checkpoint: truncated header");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line() != "seqadv-checkpoint 1")
    throw std::runtime_error("checkpoint: bad magic line");
  std::istringstream count_line(next_line());
  std::string word;
  std::size_t count = 0;
  if (!(count_line >> word >> count) || word != "tensors")
    throw std::runtime_error("checkpoint: bad tensor count line");

  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream ls(next_line());
    Entry e;
    std::string dims;
    if (!(ls >> e.name >> dims >> e.offset))
      throw std::runtime_error("checkpoint: bad entry line " + std::to_string(i + 3));
    std::istringstream ds(dims);
    for (std::string d; std::getline(ds, d, ',');) e.shape.push_back(std::stoull(d));
    entries.push_back(std::move(e));
  }
  if (next_line() != "payload") throw std::runtime_error("checkpoint: missing payload marker");

  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data()) + pos;
  const std::size_t available = bytes.size() - pos;
  ParameterStore store;
  for (const Entry& e : entries) {
    const std::size_t n = shape_product(e.shape);
    if (e.offset + 8 * n > available)
      throw std::runtime_error("checkpoint: tensor '" + e.name + "' exceeds payload");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = detail::get_le(data + e.offset + 8 * i);
    store.add(e.name, Tensor(e.shape, std::move(values)));
  }
  return store;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store) {
  write_file(path, encode_checkpoint(store));
}

inline ParameterStore load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace seqadv
