#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "artist/error.hpp"
#include "artist/tensor.hpp"

namespace artist::io {

/// Tensor container: 8 magic bytes, u64 little-endian metadata length, UTF-8 JSON
/// metadata, then a flat little-endian payload of doubles.
inline constexpr std::array<char, 8> kInversionMagic{'A', 'R', 'T', 'I', 'N', 'V', '1', '\0'};
inline constexpr int kContainerVersion = 1;

struct Container {
  nlohmann::json metadata;
  std::vector<double> payload;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string serialize_container(const Container& c) {
  const std::string meta = c.metadata.dump();
  std::string out(kInversionMagic.begin(), kInversionMagic.end());
  detail::put_u64(out, meta.size());
  out += meta;
  out.reserve(out.size() + 8 * c.payload.size());
  for (double v : c.payload) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline Container parse_container(const std::string& bytes) {
  ARTIST_CHECK(bytes.size() >= 16 && std::memcmp(bytes.data(), kInversionMagic.data(), 8) == 0,
               ErrorCode::corrupted_record, "bad container magic");
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t meta_len = detail::get_u64(raw + 8);
  ARTIST_CHECK(meta_len <= bytes.size() - 16, ErrorCode::corrupted_record, "metadata length exceeds file size");
  Container c;
  try {
    c.metadata = nlohmann::json::parse(bytes.substr(16, meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::corrupted_record, std::string("metadata is not valid JSON: ") + e.what());
  }
  const std::size_t offset = 16 + meta_len;
  ARTIST_CHECK((bytes.size() - offset) % 8 == 0, ErrorCode::corrupted_record, "payload is not a whole number of f64");
  c.payload.resize((bytes.size() - offset) / 8);
  for (std::size_t i = 0; i < c.payload.size(); ++i)
    c.payload[i] = std::bit_cast<double>(detail::get_u64(raw + offset + 8 * i));
  return c;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  ARTIST_CHECK(in.good(), ErrorCode::io, "cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  ARTIST_CHECK(out.good(), ErrorCode::io, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  ARTIST_CHECK(out.good(), ErrorCode::io, "write failed for '" + path.string() + "'");
}

/// Packs a list of equally shaped tensors under metadata keys "dtype"/"shape"/"count".
inline Container pack_tensors(nlohmann::json metadata, const std::vector<Tensor>& tensors) {
  Container c{std::move(metadata), {}};
  const Shape shape = tensors.empty() ? Shape{} : tensors.front().shape();
  for (const Tensor& t : tensors) {
    require_same_shape(t, tensors.front(), "pack_tensors");
    c.payload.insert(c.payload.end(), t.begin(), t.end());
  }
  c.metadata["dtype"] = "f64";
  c.metadata["shape"] = shape;
  c.metadata["count"] = tensors.size();
  return c;
}

}  // namespace artist::io
