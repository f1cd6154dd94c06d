#pragma once

// 8-bit RGB PNG frames and `frame_%06d.png` directories.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <regex>
#include <string>
#include <vector>

#include "fitdeblur/error.hpp"
#include "fitdeblur/image.hpp"

namespace fitdeblur {

inline Image load_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    fail(ErrorKind::io, "cannot read " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    fail(ErrorKind::io, "cannot decode " + path.string() + ": " + img.message);
  }
  Image out(static_cast<int>(img.height), static_cast<int>(img.width), 3);
  for (std::size_t i = 0; i < buf.size(); ++i) out.data[i] = static_cast<float>(buf[i] / 255.0);
  return out;
}

// Quantizes to 8 bits, rounding half up.
inline std::vector<png_byte> quantize(const Image& img) {
  std::vector<png_byte> buf(img.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double v = std::clamp(static_cast<double>(img.data[i]), 0.0, 1.0) * 255.0;
    buf[i] = static_cast<png_byte>(std::floor(v + 0.5));
  }
  return buf;
}

inline void save_png(const Image& img, const std::filesystem::path& path) {
  require(img.channels == 3, ErrorKind::shape, "PNG frames must have 3 channels");
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(img.width);
  out.height = static_cast<png_uint_32>(img.height);
  out.format = PNG_FORMAT_RGB;
  const std::vector<png_byte> buf = quantize(img);
  if (!png_image_write_to_file(&out, path.string().c_str(), 0, buf.data(), 0, nullptr))
    fail(ErrorKind::io, "cannot write " + path.string() + ": " + out.message);
}

inline std::string frame_name(int index) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%06d.png", index);
  return name;
}

// Frame files in index order. Gaps are allowed; other files are ignored.
inline std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorKind::io, "not a directory: " + dir.string());
  static const std::regex pattern(R"(frame_(\d{6})\.png)");
  std::vector<std::pair<int, std::filesystem::path>> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && std::regex_match(name, m, pattern)) found.emplace_back(std::stoi(m[1]), entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<std::filesystem::path> out;
  for (auto& [i, p] : found) out.push_back(std::move(p));
  return out;
}

inline FrameSequence load_frames(const std::filesystem::path& dir) {
  FrameSequence video;
  for (const auto& p : list_frames(dir)) video.push_back(load_png(p));
  require(!video.empty(), ErrorKind::io, "no frame_%06d.png files in " + dir.string());
  return video;
}

inline void save_frames(const FrameSequence& video, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < video.size(); ++i) save_png(video[i], dir / frame_name(static_cast<int>(i)));
}

// Exclusive claim on an output directory for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".fitdeblur.lock") {
    std::filesystem::create_directories(dir);
    std::FILE* f = std::fopen(path_.string().c_str(), "wx");
    require(f != nullptr, ErrorKind::io, "output directory is locked by another run: " + path_.string());
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace fitdeblur
