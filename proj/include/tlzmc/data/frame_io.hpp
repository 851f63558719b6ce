// Copyright (c) the TLZMC Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tlzmc/data/frame.hpp"

namespace tlzmc {

// ---- PNG ----

inline Tensor load_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  check(fp != nullptr, "cannot open: " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw Error("png read failed: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  // Normalize everything to 8-bit RGB.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  int w = static_cast<int>(png_get_image_width(png, info));
  int h = static_cast<int>(png_get_image_height(png, info));
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
  Tensor img({3, h, w});
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = static_cast<float>(row[3 * x + c]) / 255.0f;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

inline void save_png(const std::string& path, const Tensor& img) {
  check(img.rank() == 3 && img.dim(0) == 3, "save_png: want (3,h,w)");
  FILE* fp = std::fopen(path.c_str(), "wb");
  check(fp != nullptr, "cannot open for write: " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error("png write failed: " + path);
  }
  png_init_io(png, fp);
  int h = img.dim(1), w = img.dim(2);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = std::min(std::max(img.at(c, y, x), 0.0f), 1.0f);
        row[3 * x + c] = static_cast<uint8_t>(std::lround(v * 255.0f));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

// ---- YUV420 (BT.709, limited range, nearest-neighbor chroma upsampling) ----

inline Tensor rgb_from_yuv420(const std::vector<uint8_t>& buf, int w, int h) {
  size_t luma = static_cast<size_t>(w) * h;
  size_t chroma = static_cast<size_t>(w / 2) * (h / 2);
  check(buf.size() >= luma + 2 * chroma, "yuv420: buffer too small");
  const uint8_t* yp = buf.data();
  const uint8_t* up = yp + luma;
  const uint8_t* vp = up + chroma;
  Tensor img({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double yy = (yp[static_cast<size_t>(y) * w + x] - 16.0) / 219.0;
      size_t ci = static_cast<size_t>(y / 2) * (w / 2) + x / 2;
      double pb = (up[ci] - 128.0) / 224.0;
      double pr = (vp[ci] - 128.0) / 224.0;
      double r = yy + 1.5748 * pr;
      double g = yy - 0.18732427 * pb - 0.46812427 * pr;
      double b = yy + 1.8556 * pb;
      img.at(0, y, x) = static_cast<float>(std::min(std::max(r, 0.0), 1.0));
      img.at(1, y, x) = static_cast<float>(std::min(std::max(g, 0.0), 1.0));
      img.at(2, y, x) = static_cast<float>(std::min(std::max(b, 0.0), 1.0));
    }
  return img;
}

// Parses a trailing "_WxH" size tag from a file name like "foo_1920x1080.yuv".
inline bool parse_size_tag(const std::string& path, int& w, int& h) {
  auto stem = std::filesystem::path(path).stem().string();
  auto us = stem.rfind('_');
  if (us == std::string::npos) return false;
  auto tag = stem.substr(us + 1);
  auto xp = tag.find('x');
  if (xp == std::string::npos || xp == 0 || xp + 1 >= tag.size()) return false;
  for (size_t i = 0; i < tag.size(); ++i)
    if (i != xp && !std::isdigit(static_cast<unsigned char>(tag[i]))) return false;
  w = std::stoi(tag.substr(0, xp));
  h = std::stoi(tag.substr(xp + 1));
  return w > 0 && h > 0;
}

// ---- sequences ----

// Loads a display-order frame sequence from either a directory of PNG files
// (sorted by name) or a raw YUV420 file (BT.709 limited range; size from an
// explicit argument or a "_WxH" file-name tag). Frames come back padded to
// multiples of 64 with the display size recorded.
inline std::vector<Frame> load_sequence(const std::string& path, int yuv_w = 0,
                                        int yuv_h = 0, int max_frames = 0) {
  std::vector<Frame> frames;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      if (!e.is_regular_file()) continue;
      auto p = e.path();
      if (p.extension() == ".png") files.push_back(p.string());
    }
    check(!files.empty(), "no png files in " + path);
    std::sort(files.begin(), files.end());
    if (max_frames > 0 && static_cast<int>(files.size()) > max_frames)
      files.resize(static_cast<size_t>(max_frames));
    for (size_t i = 0; i < files.size(); ++i) {
      frames.push_back(make_frame(load_png(files[i]), static_cast<int>(i)));
      check(frames.back().width == frames.front().width &&
                frames.back().height == frames.front().height,
            "sequence frames disagree in size: " + files[i]);
    }
    return frames;
  }

  check(std::filesystem::path(path).extension() == ".yuv",
        "unsupported sequence input (want a png directory or .yuv): " + path);
  int w = yuv_w, h = yuv_h;
  if (w == 0 || h == 0)
    check(parse_size_tag(path, w, h),
          "yuv420 input needs a _WxH name tag or an explicit size: " + path);
  check(w % 2 == 0 && h % 2 == 0, "yuv420: dimensions must be even");

  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open: " + path);
  in.seekg(0, std::ios::end);
  auto total = static_cast<size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  size_t frame_bytes = static_cast<size_t>(w) * h * 3 / 2;
  check(total >= frame_bytes && total % frame_bytes == 0,
        "yuv420: file size is not a whole number of frames");
  size_t n = total / frame_bytes;
  if (max_frames > 0) n = std::min(n, static_cast<size_t>(max_frames));
  std::vector<uint8_t> one(frame_bytes);
  for (size_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(one.data()),
            static_cast<std::streamsize>(frame_bytes));
    check(in.good(), "yuv420: short read");
    frames.push_back(make_frame(rgb_from_yuv420(one, w, h), static_cast<int>(i)));
  }
  return frames;
}

// Writes frames as zero-padded PNG files (display size, padding dropped).
inline void save_sequence(const std::string& dir, const std::vector<Frame>& frames) {
  std::filesystem::create_directories(dir);
  for (const auto& f : frames) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.png", f.poc);
    save_png((std::filesystem::path(dir) / name).string(), display_region(f));
  }
}

}  // namespace tlzmc
