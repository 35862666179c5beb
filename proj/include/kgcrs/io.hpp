// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "kgcrs/error.hpp"

namespace kgcrs::io {

// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) fail(ErrorCode::runtime, "cannot format double");
  return {buf, end};
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    fail(ErrorCode::load, "malformed number '" + std::string(s) + "'");
  return v;
}

template <typename Int>
Int parse_int(std::string_view s) {
  Int v{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    fail(ErrorCode::load, "malformed integer '" + std::string(s) + "'");
  return v;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  auto [end, ec] = std::to_chars(buf, buf + 16, v, 16);
  (void)ec;
  std::string s(buf, end);
  return std::string(16 - s.size(), '0') + s;
}

// FNV-1a; stable across platforms, used for config fingerprints.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

// Reads the next non-empty line and checks its leading keyword.
inline std::vector<std::string_view> expect_line(std::istream& in, std::string& storage, std::string_view key) {
  while (std::getline(in, storage)) {
    if (storage.empty()) continue;
    auto f = split_ws(storage);
    if (f.empty() || f[0] != key) fail(ErrorCode::load, "expected '" + std::string(key) + "', got '" + storage + "'");
    return f;
  }
  fail(ErrorCode::load, "unexpected end of file, expected '" + std::string(key) + "'");
}

inline void write_matrix(std::ostream& out, std::string_view name, const Eigen::MatrixXd& m) {
  out << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_double(m(r, c));
    out << '\n';
  }
}

inline Eigen::MatrixXd read_matrix(std::istream& in, std::string_view name) {
  std::string line;
  auto h = expect_line(in, line, "matrix");
  if (h.size() != 4 || h[1] != name) fail(ErrorCode::load, "expected matrix '" + std::string(name) + "'");
  auto rows = parse_int<Eigen::Index>(h[2]);
  auto cols = parse_int<Eigen::Index>(h[3]);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) fail(ErrorCode::load, "truncated matrix '" + std::string(name) + "'");
    auto f = split_ws(line);
    if (static_cast<Eigen::Index>(f.size()) != cols) fail(ErrorCode::load, "bad row width in matrix " + std::string(name));
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = parse_double(f[static_cast<std::size_t>(c)]);
  }
  return m;
}

}  // namespace kgcrs::io
