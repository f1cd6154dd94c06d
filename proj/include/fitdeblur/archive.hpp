#pragma once

// Named-tensor archive (NTA1): checkpoints, kernel banks, flow fields.
//
//   bytes 0..3   magic "NTA1"
//   bytes 4..7   header length L, little-endian u32
//   bytes 8..    L bytes of JSON header:
//                  {"format_version": 1,
//                   "metadata": {...},
//                   "tensors": [{"name", "shape", "dtype": "f32", "offset", "nbytes"}, ...]}
//   payload      starts at the first 64-byte boundary after the header;
//                tensor offsets are relative to it and 64-byte aligned;
//                data is little-endian IEEE-754 binary32.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fitdeblur/error.hpp"
#include "fitdeblur/tensor.hpp"

namespace fitdeblur {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

inline constexpr char kArchiveMagic[4] = {'N', 'T', 'A', '1'};
inline constexpr int kArchiveVersion = 1;
inline constexpr std::size_t kArchiveAlign = 64;

struct NamedTensorArchive {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  bool contains(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return true;
    return false;
  }

  const Tensor<float>& get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    fail(ErrorKind::corrupt_file, "archive has no tensor named '" + name + "'");
  }

  void put(std::string name, Tensor<float> t) {
    for (auto& [n, existing] : tensors)
      if (n == name) {
        existing = std::move(t);
        return;
      }
    tensors.emplace_back(std::move(name), std::move(t));
  }
};

namespace detail {
inline std::size_t align_up(std::size_t v, std::size_t a) { return (v + a - 1) / a * a; }
}  // namespace detail

inline std::string serialize_archive(const NamedTensorArchive& archive) {
  nlohmann::json table = nlohmann::json::array();
  std::size_t offset = 0, end = 0;
  std::set<std::string> names;
  for (const auto& [name, t] : archive.tensors) {
    require(names.insert(name).second, ErrorKind::parameter, "duplicate tensor name '" + name + "'");
    const std::size_t nbytes = t.size() * sizeof(float);
    table.push_back({{"name", name}, {"shape", t.shape}, {"dtype", "f32"}, {"offset", offset}, {"nbytes", nbytes}});
    end = offset + nbytes;
    offset = detail::align_up(end, kArchiveAlign);
  }
  nlohmann::json header = {{"format_version", kArchiveVersion}, {"metadata", archive.metadata}, {"tensors", table}};
  const std::string text = header.dump();
  const std::size_t payload_start = detail::align_up(8 + text.size(), kArchiveAlign);

  std::string out(payload_start + end, '\0');  // no padding after the last tensor
  std::memcpy(out.data(), kArchiveMagic, 4);
  const std::uint32_t len = static_cast<std::uint32_t>(text.size());
  std::memcpy(out.data() + 4, &len, 4);
  std::memcpy(out.data() + 8, text.data(), text.size());
  std::size_t i = 0;
  for (const auto& [name, t] : archive.tensors) {
    const std::size_t off = table[i++]["offset"].get<std::size_t>();
    if (!t.data.empty()) std::memcpy(out.data() + payload_start + off, t.data.data(), t.size() * sizeof(float));
  }
  return out;
}

inline NamedTensorArchive parse_archive(const std::string& bytes) {
  require(bytes.size() >= 8 && std::memcmp(bytes.data(), kArchiveMagic, 4) == 0, ErrorKind::corrupt_file,
          "missing NTA1 magic");
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 4, 4);
  require(8 + static_cast<std::size_t>(len) <= bytes.size(), ErrorKind::corrupt_file, "truncated archive header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::corrupt_file, std::string("unreadable archive header: ") + e.what());
  }
  require(header.is_object() && header.contains("format_version") && header.contains("tensors"),
          ErrorKind::corrupt_file, "archive header lacks required fields");
  require(header["format_version"] == kArchiveVersion, ErrorKind::version_mismatch,
          "archive format version " + header["format_version"].dump() + ", expected " +
              std::to_string(kArchiveVersion));

  NamedTensorArchive archive;
  archive.metadata = header.value("metadata", nlohmann::json::object());
  const std::size_t payload_start = detail::align_up(8 + static_cast<std::size_t>(len), kArchiveAlign);
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::set<std::string> names;
  try {
    for (const auto& entry : header["tensors"]) {
      const std::string name = entry.at("name").get<std::string>();
      require(names.insert(name).second, ErrorKind::corrupt_file, "duplicate tensor '" + name + "'");
      require(entry.at("dtype") == "f32", ErrorKind::corrupt_file, "unsupported dtype for '" + name + "'");
      Shape shape = entry.at("shape").get<Shape>();
      for (int d : shape) require(d >= 0, ErrorKind::corrupt_file, "negative dimension in '" + name + "'");
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t nbytes = entry.at("nbytes").get<std::size_t>();
      require(nbytes == numel(shape) * sizeof(float), ErrorKind::corrupt_file, "size/shape mismatch for '" + name + "'");
      require(offset % kArchiveAlign == 0, ErrorKind::corrupt_file, "misaligned tensor '" + name + "'");
      require(payload_start + offset + nbytes <= bytes.size(), ErrorKind::corrupt_file,
              "tensor '" + name + "' extends past the end of the file");
      if (nbytes > 0) spans.emplace_back(offset, offset + nbytes);
      Tensor<float> t(std::move(shape));
      if (nbytes > 0) std::memcpy(t.data.data(), bytes.data() + payload_start + offset, nbytes);
      archive.tensors.emplace_back(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::corrupt_file, std::string("malformed tensor table: ") + e.what());
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i)
    require(spans[i].first >= spans[i - 1].second, ErrorKind::corrupt_file, "overlapping tensors in archive");
  return archive;
}

inline void save_archive(const NamedTensorArchive& archive, const std::filesystem::path& path) {
  const std::string bytes = serialize_archive(archive);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), ErrorKind::io, "cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(os), ErrorKind::io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorKind::io, "cannot move archive into place at " + path.string());
}

inline NamedTensorArchive load_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_archive(ss.str());
}

}  // namespace fitdeblur
