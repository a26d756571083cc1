// SPDX-FileCopyrightText: © 2026 the shiftc authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace shiftc {

using i64 = std::int64_t;

// Error taxonomy maps 1:1 onto the CLI exit codes.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};
struct ParseError : Error {  // exit 2
  using Error::Error;
};
struct InfeasibleError : Error {  // exit 3
  using Error::Error;
};
struct VerifyError : Error {  // exit 4
  using Error::Error;
};
struct CapacityError : Error {  // exit 5
  using Error::Error;
};
// Plan bugs surfaced by the simulator (nonlocal operand, broken ring phase).
struct SimError : Error {
  using Error::Error;
};

inline i64 ceil_div(i64 a, i64 b) { return (a + b - 1) / b; }

inline i64 product(const std::vector<i64>& v) {
  i64 p = 1;
  for (i64 x : v) p *= x;
  return p;
}

inline i64 round_up(i64 value, i64 multiple) {
  return ceil_div(value, multiple) * multiple;
}

inline i64 positive_mod(i64 a, i64 m) {
  i64 r = a % m;
  return r < 0 ? r + m : r;
}

inline std::string join_i64(const std::vector<i64>& v, char sep = 'x') {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace shiftc
