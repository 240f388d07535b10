#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <regex>
#include <string>

#include "artist/io/container.hpp"

namespace artist::io {

/// NumPy .npy version 1.0, little-endian float64, C order.
inline std::string encode_npy(const Tensor& t) {
  std::string shape = "(";
  for (std::size_t i = 0; i < t.rank(); ++i) shape += (i ? ", " : "") + std::to_string(t.dim(i));
  shape += t.rank() == 1 ? ",)" : ")";
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " + shape + ", }";
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  std::string out("\x93NUMPY\x01\x00", 8);
  out.push_back(char(header.size() & 0xff));
  out.push_back(char(header.size() >> 8));
  out += header;
  for (double v : t) {
    const auto u = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(char((u >> (8 * i)) & 0xff));
  }
  return out;
}

inline Tensor decode_npy(const std::string& bytes) {
  ARTIST_CHECK(bytes.size() >= 10 && bytes.compare(0, 6, "\x93NUMPY") == 0, ErrorCode::io, "not an .npy file");
  const int major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) | (std::size_t(static_cast<unsigned char>(bytes[9])) << 8);
    offset = 10;
  } else {
    ARTIST_CHECK(bytes.size() >= 12, ErrorCode::io, "truncated .npy header");
    for (int i = 0; i < 4; ++i) header_len |= std::size_t(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
    offset = 12;
  }
  ARTIST_CHECK(bytes.size() >= offset + header_len, ErrorCode::io, "truncated .npy header");
  const std::string header = bytes.substr(offset, header_len);
  ARTIST_CHECK(header.find("'<f8'") != std::string::npos, ErrorCode::io, "only little-endian float64 .npy is supported");
  ARTIST_CHECK(header.find("'fortran_order': False") != std::string::npos, ErrorCode::io, "Fortran-order .npy is not supported");
  std::smatch m;
  ARTIST_CHECK(std::regex_search(header, m, std::regex(R"('shape':\s*\(([^)]*)\))")), ErrorCode::io, "missing .npy shape");
  Shape shape;
  const std::string dims = m[1];
  const std::regex number(R"(\d+)");
  for (std::sregex_iterator it(dims.begin(), dims.end(), number), end; it != end; ++it)
    shape.push_back(std::stoul(it->str()));
  const std::size_t n = shape_numel(shape);
  const std::size_t data = offset + header_len;
  ARTIST_CHECK(bytes.size() == data + 8 * n, ErrorCode::io, ".npy payload does not match its shape");
  Tensor t(shape);
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + data);
  for (std::size_t i = 0; i < n; ++i) t[i] = std::bit_cast<double>(detail::get_u64(raw + 8 * i));
  return t;
}

inline Tensor read_npy(const std::filesystem::path& path) { return decode_npy(read_file(path)); }
inline void write_npy(const std::filesystem::path& path, const Tensor& t) { write_file(path, encode_npy(t)); }

}  // namespace artist::io
