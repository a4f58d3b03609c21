#pragma once

// Plain-text fixture files.
//
//   tensor:      "rows cols\n" then rows*cols values, one matrix row per line
//   feature map: "h w c\n" then h*w*c values, one pixel per line
//
// Values are written with 17 significant digits so a write/read cycle is exact.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bgr/errors.hpp"
#include "bgr/tensor.hpp"

namespace bgr {

namespace detail {

inline void write_values(std::ostream& os, std::span<const double> v, std::size_t per_line) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < v.size(); ++i) {
    os << v[i];
    os << ((i + 1) % per_line == 0 || i + 1 == v.size() ? '\n' : ' ');
  }
}

inline std::vector<double> read_values(std::istream& is, std::size_t count, const char* what) {
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!(is >> v[i]))
      throw DomainError(std::string(what) + ": expected " + std::to_string(count) +
                        " values, got " + std::to_string(i));
  }
  std::string extra;
  if (is >> extra) throw DomainError(std::string(what) + ": trailing data '" + extra + "'");
  return v;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DomainError("cannot open " + path);
  return f;
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw DomainError("cannot write " + path);
  return f;
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor2& t) {
  os << t.rows() << ' ' << t.cols() << '\n';
  if (t.size()) detail::write_values(os, t.values(), t.cols());
}

inline Tensor2 read_tensor(std::istream& is) {
  std::size_t r = 0, c = 0;
  if (!(is >> r >> c)) throw DomainError("tensor fixture: missing 'rows cols' header");
  auto v = detail::read_values(is, r * c, "tensor fixture");
  return Tensor2(r, c, v);
}

inline void write_feature_map(std::ostream& os, const FeatureMap& x) {
  os << x.h() << ' ' << x.w() << ' ' << x.c() << '\n';
  if (!x.values().empty()) detail::write_values(os, x.values(), x.c());
}

inline FeatureMap read_feature_map(std::istream& is) {
  std::size_t h = 0, w = 0, c = 0;
  if (!(is >> h >> w >> c)) throw DomainError("feature map fixture: missing 'h w c' header");
  auto v = detail::read_values(is, h * w * c, "feature map fixture");
  return FeatureMap(h, w, c, v);
}

inline void save_tensor(const std::string& path, const Tensor2& t) {
  auto f = detail::open_out(path);
  write_tensor(f, t);
}
inline Tensor2 load_tensor(const std::string& path) {
  auto f = detail::open_in(path);
  return read_tensor(f);
}
inline void save_feature_map(const std::string& path, const FeatureMap& x) {
  auto f = detail::open_out(path);
  write_feature_map(f, x);
}
inline FeatureMap load_feature_map(const std::string& path) {
  auto f = detail::open_in(path);
  return read_feature_map(f);
}

}  // namespace bgr
