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

#include <cstdint>
#include <fstream>

#include "tlzmc/core/tensor.hpp"

namespace tlzmc {

// Coded-stream container. Little-endian throughout; layout documented in
// docs/container.md. Frames appear in coding order, each carrying one byte
// blob per coded stream (intra: latent + side; B: base latent, base side,
// enhancement latent, enhancement side).

constexpr char kContainerMagic[4] = {'T', 'L', 'Z', 'M'};
constexpr uint8_t kContainerVersion = 1;

enum class Metric : uint8_t { kMse = 0, kMsSsim = 1 };

struct FrameRecord {
  uint32_t poc = 0;
  uint8_t frame_type = 0;  // FrameType as u8
  std::vector<std::vector<uint8_t>> streams;

  int64_t payload_bits() const {
    int64_t b = 0;
    for (const auto& s : streams) b += static_cast<int64_t>(s.size()) * 8;
    return b;
  }
};

struct Container {
  Metric metric = Metric::kMse;
  uint8_t lambda_index = 0;
  uint8_t gop_size = 8;
  uint32_t width = 0;   // display size; coded size is the /64 padding of it
  uint32_t height = 0;
  std::vector<FrameRecord> frames;  // coding order

  int64_t payload_bits() const {
    int64_t b = 0;
    for (const auto& f : frames) b += f.payload_bits();
    return b;
  }

  // Bits per pixel over the display-size pixels of all frames.
  double bpp() const {
    check(width > 0 && height > 0 && !frames.empty(), "container: empty");
    return static_cast<double>(payload_bits()) /
           (static_cast<double>(width) * height * frames.size());
  }
};

namespace detail {

struct ByteWriter {
  std::vector<uint8_t> out;
  void u8(uint8_t v) { out.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void bytes(const std::vector<uint8_t>& b) {
    out.insert(out.end(), b.begin(), b.end());
  }
};

struct ByteReader {
  const uint8_t* p;
  const uint8_t* end;
  uint8_t u8() {
    check(p < end, "container: truncated stream");
    return *p++;
  }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::vector<uint8_t> bytes(uint32_t n) {
    check(end - p >= static_cast<ptrdiff_t>(n), "container: truncated stream");
    std::vector<uint8_t> b(p, p + n);
    p += n;
    return b;
  }
};

}  // namespace detail

inline std::vector<uint8_t> write_container(const Container& c) {
  detail::ByteWriter w;
  for (char m : kContainerMagic) w.u8(static_cast<uint8_t>(m));
  w.u8(kContainerVersion);
  w.u8(static_cast<uint8_t>(c.metric));
  w.u8(c.lambda_index);
  w.u8(c.gop_size);
  w.u32(c.width);
  w.u32(c.height);
  w.u32(static_cast<uint32_t>(c.frames.size()));
  for (const auto& f : c.frames) {
    w.u32(f.poc);
    w.u8(f.frame_type);
    check(f.streams.size() <= 255, "container: too many streams");
    w.u8(static_cast<uint8_t>(f.streams.size()));
    for (const auto& s : f.streams) {
      w.u32(static_cast<uint32_t>(s.size()));
      w.bytes(s);
    }
  }
  return std::move(w.out);
}

inline Container read_container(const uint8_t* data, size_t size) {
  detail::ByteReader r{data, data + size};
  for (char m : kContainerMagic)
    check(r.u8() == static_cast<uint8_t>(m), "container: bad magic");
  uint8_t version = r.u8();
  check(version == kContainerVersion,
        "container: unsupported version " + std::to_string(version));
  Container c;
  uint8_t metric = r.u8();
  check(metric <= 1, "container: bad metric id");
  c.metric = static_cast<Metric>(metric);
  c.lambda_index = r.u8();
  c.gop_size = r.u8();
  c.width = r.u32();
  c.height = r.u32();
  check(c.width > 0 && c.height > 0, "container: bad frame size");
  uint32_t nframes = r.u32();
  c.frames.reserve(nframes);
  for (uint32_t i = 0; i < nframes; ++i) {
    FrameRecord f;
    f.poc = r.u32();
    f.frame_type = r.u8();
    uint8_t nstreams = r.u8();
    f.streams.reserve(nstreams);
    for (uint8_t s = 0; s < nstreams; ++s) f.streams.push_back(r.bytes(r.u32()));
    c.frames.push_back(std::move(f));
  }
  check(r.p == r.end, "container: trailing bytes");
  return c;
}

inline Container read_container(const std::vector<uint8_t>& data) {
  return read_container(data.data(), data.size());
}

inline void save_bytes(const std::string& path, const std::vector<uint8_t>& b) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(b.data()),
          static_cast<std::streamsize>(b.size()));
  check(f.good(), "write failed: " + path);
}

inline std::vector<uint8_t> load_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  check(f.good(), "cannot open: " + path);
  auto size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> b(static_cast<size_t>(size));
  f.read(reinterpret_cast<char*>(b.data()), size);
  check(f.good(), "read failed: " + path);
  return b;
}

}  // namespace tlzmc
