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
#include <cstring>

#include "tlzmc/core/tensor.hpp"

namespace tlzmc {

// ---------------------------------------------------------------------------
// Byte-oriented range coder, 32-bit state with carry propagation into the
// already-emitted bytes. Totals are capped at 2^16 so `range / tot` never
// degenerates (range stays >= 2^24 between symbols). The interval of the
// last symbol in a table absorbs the division remainder.
// ---------------------------------------------------------------------------

class RangeEncoder {
 public:
  void encode(uint32_t cum, uint32_t freq, uint32_t tot) {
    uint32_t r = range_ / tot;
    uint32_t ofs = r * cum;
    uint32_t nl = low_ + ofs;
    if (nl < low_) propagate_carry();
    low_ = nl;
    range_ = (cum + freq == tot) ? range_ - ofs : r * freq;
    while (range_ < kTop) {
      buf_.push_back(static_cast<uint8_t>(low_ >> 24));
      low_ <<= 8;
      range_ <<= 8;
    }
    ++symbols_;
  }

  // Seals the stream. Picks the shortest byte string identifying a point in
  // the final interval: with range >= 2^24 one byte (plus a possible carry)
  // always suffices; the decoder zero-pads past the end.
  std::vector<uint8_t> finish() {
    if (symbols_ == 0) return {};
    uint64_t cand = (static_cast<uint64_t>(low_) + ((1u << 24) - 1)) &
                    ~static_cast<uint64_t>((1u << 24) - 1);
    if (cand >= (1ull << 32)) {
      propagate_carry();
      cand = 0;
    }
    buf_.push_back(static_cast<uint8_t>(cand >> 24));
    return std::move(buf_);
  }

  int64_t symbols() const { return symbols_; }

 private:
  static constexpr uint32_t kTop = 1u << 24;

  void propagate_carry() {
    size_t i = buf_.size();
    for (;;) {
      check(i > 0, "range coder: carry into empty stream");
      uint8_t& b = buf_[--i];
      if (b == 0xFF) {
        b = 0;
      } else {
        ++b;
        return;
      }
    }
  }

  std::vector<uint8_t> buf_;
  uint32_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  int64_t symbols_ = 0;
};

class RangeDecoder {
 public:
  RangeDecoder(const uint8_t* data, size_t size) : p_(data), end_(data + size) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
  }
  explicit RangeDecoder(const std::vector<uint8_t>& data)
      : RangeDecoder(data.data(), data.size()) {}

  uint32_t decode_cum(uint32_t tot) {
    r_ = range_ / tot;
    uint32_t dv = (code_ - low_) / r_;
    return dv < tot ? dv : tot - 1;
  }

  void consume(uint32_t cum, uint32_t freq, uint32_t tot) {
    uint32_t ofs = r_ * cum;
    low_ += ofs;
    range_ = (cum + freq == tot) ? range_ - ofs : r_ * freq;
    while (range_ < kTop) {
      code_ = (code_ << 8) | next_byte();
      low_ <<= 8;
      range_ <<= 8;
    }
  }

 private:
  static constexpr uint32_t kTop = 1u << 24;

  // Zero-pads past the end: the final renormalizations may legitimately look
  // a few bytes beyond the encoder's flush. Framing errors are caught by the
  // container's length fields, not here.
  uint8_t next_byte() { return p_ < end_ ? *p_++ : 0; }

  const uint8_t* p_;
  const uint8_t* end_;
  uint32_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
  uint32_t r_ = 0;
};

// ---------------------------------------------------------------------------
// 16-bit cumulative distribution tables.
// ---------------------------------------------------------------------------

struct CdfTable {
  static constexpr uint32_t kTotal = 1u << 16;
  std::vector<uint32_t> cdf;  // size nsyms+1; cdf[0] = 0, back() = kTotal

  int size() const { return static_cast<int>(cdf.size()) - 1; }

  void validate() const {
    check(cdf.size() >= 2 && cdf.front() == 0 && cdf.back() == kTotal,
          "cdf: bad endpoints");
    for (size_t i = 1; i < cdf.size(); ++i)
      check(cdf[i] > cdf[i - 1], "cdf: not strictly increasing");
  }

  static CdfTable uniform(int nsyms) {
    CdfTable t;
    t.cdf.resize(nsyms + 1);
    for (int i = 0; i <= nsyms; ++i)
      t.cdf[i] = static_cast<uint32_t>((static_cast<uint64_t>(kTotal) * i) /
                                       nsyms);
    t.validate();
    return t;
  }

  // Quantizes a probability vector to integer frequencies that sum exactly to
  // kTotal with every symbol kept codable (freq >= 1). Deterministic.
  static CdfTable from_pmf(const std::vector<double>& pmf) {
    int n = static_cast<int>(pmf.size());
    check(n >= 1 && static_cast<uint32_t>(n) < kTotal, "cdf: bad pmf size");
    std::vector<int64_t> freq(n);
    int64_t sum = 0;
    for (int i = 0; i < n; ++i) {
      double p = pmf[i] > 0.0 ? pmf[i] : 0.0;
      freq[i] = std::max<int64_t>(1, std::llround(p * kTotal));
      sum += freq[i];
    }
    int64_t excess = sum - static_cast<int64_t>(kTotal);
    while (excess != 0) {
      // Adjust the largest bin (lowest index on ties); keeps freq >= 1.
      int best = 0;
      for (int i = 1; i < n; ++i)
        if (freq[i] > freq[best]) best = i;
      if (excess > 0) {
        int64_t take = std::min(excess, freq[best] - 1);
        check(take > 0, "cdf: cannot normalize pmf");
        freq[best] -= take;
        excess -= take;
      } else {
        freq[best] -= excess;  // excess < 0: grow the largest bin
        excess = 0;
      }
    }
    CdfTable t;
    t.cdf.resize(n + 1);
    t.cdf[0] = 0;
    for (int i = 0; i < n; ++i)
      t.cdf[i + 1] = t.cdf[i] + static_cast<uint32_t>(freq[i]);
    t.validate();
    return t;
  }

  // Exact codelength of symbol s under this table, in bits.
  double bits(int s) const {
    return -std::log2(static_cast<double>(cdf[s + 1] - cdf[s]) / kTotal);
  }
};

inline void cdf_encode(RangeEncoder& enc, const CdfTable& t, int s) {
  enc.encode(t.cdf[s], t.cdf[s + 1] - t.cdf[s], CdfTable::kTotal);
}

inline int cdf_decode(RangeDecoder& dec, const CdfTable& t) {
  uint32_t cum = dec.decode_cum(CdfTable::kTotal);
  // Largest s with cdf[s] <= cum.
  int lo = 0, hi = t.size() - 1;
  while (lo < hi) {
    int mid = (lo + hi + 1) / 2;
    if (t.cdf[mid] <= cum)
      lo = mid;
    else
      hi = mid - 1;
  }
  dec.consume(t.cdf[lo], t.cdf[lo + 1] - t.cdf[lo], CdfTable::kTotal);
  return lo;
}

// ---------------------------------------------------------------------------
// Gaussian symbol coding. Alphabet is the integers [-64, 64] plus an escape
// symbol; escaped values send a zigzag-mapped u32 through a raw byte bypass.
// Scales are quantized to 64 log-spaced bins over [sigma_min, 64] and the
// per-bin tables are built once, identically on both sides.
// ---------------------------------------------------------------------------

constexpr float kSigmaMin = 0.11f;
constexpr int kAlphabetRadius = 64;
constexpr int kEscIndex = 2 * kAlphabetRadius + 1;  // after [-64, 64]
constexpr int kSigmaLevels = 64;
constexpr float kSigmaMax = 64.0f;

inline double normal_cdf(double x) {
  return 0.5 * (1.0 + std::erf(x / 1.4142135623730950488));
}

// Zero-padded pmf over {-64..64, ESC} for a Gaussian with the given mean and
// scale; the escape bin holds the tail mass.
inline CdfTable gaussian_cdf(double mu, double sigma) {
  std::vector<double> pmf(kEscIndex + 1);
  double covered = 0.0;
  for (int s = -kAlphabetRadius; s <= kAlphabetRadius; ++s) {
    double p = normal_cdf((s + 0.5 - mu) / sigma) -
               normal_cdf((s - 0.5 - mu) / sigma);
    pmf[s + kAlphabetRadius] = p;
    covered += p;
  }
  pmf[kEscIndex] = std::max(1.0 - covered, 0.0);
  return CdfTable::from_pmf(pmf);
}

inline int sigma_level(float sigma) {
  float s = std::min(std::max(sigma, kSigmaMin), kSigmaMax);
  double step = std::log(static_cast<double>(kSigmaMax) / kSigmaMin) /
                (kSigmaLevels - 1);
  int level = static_cast<int>(
      std::lround(std::log(static_cast<double>(s) / kSigmaMin) / step));
  return std::min(std::max(level, 0), kSigmaLevels - 1);
}

inline float level_sigma(int level) {
  double step = std::log(static_cast<double>(kSigmaMax) / kSigmaMin) /
                (kSigmaLevels - 1);
  return static_cast<float>(kSigmaMin * std::exp(step * level));
}

inline const CdfTable& sigma_table(int level) {
  static const std::vector<CdfTable> tables = [] {
    std::vector<CdfTable> t(kSigmaLevels);
    for (int i = 0; i < kSigmaLevels; ++i) t[i] = gaussian_cdf(0.0, level_sigma(i));
    return t;
  }();
  return tables[static_cast<size_t>(level)];
}

inline uint32_t zigzag_u32(int64_t v) {
  return static_cast<uint32_t>(v >= 0 ? 2 * v : -2 * v - 1);
}
inline int64_t unzigzag_u32(uint32_t u) {
  return (u & 1) ? -static_cast<int64_t>(u / 2) - 1 : static_cast<int64_t>(u / 2);
}

inline void bypass_u32(RangeEncoder& enc, uint32_t v) {
  static const CdfTable byte_table = CdfTable::uniform(256);
  for (int i = 3; i >= 0; --i)
    cdf_encode(enc, byte_table, static_cast<int>((v >> (8 * i)) & 0xFF));
}

inline uint32_t bypass_u32(RangeDecoder& dec) {
  static const CdfTable byte_table = CdfTable::uniform(256);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v = (v << 8) | static_cast<uint32_t>(cdf_decode(dec, byte_table));
  return v;
}

// Codes one integer symbol against a Gaussian table (escape for outliers).
inline void gaussian_encode(RangeEncoder& enc, const CdfTable& t, int64_t s) {
  if (s >= -kAlphabetRadius && s <= kAlphabetRadius) {
    cdf_encode(enc, t, static_cast<int>(s) + kAlphabetRadius);
  } else {
    cdf_encode(enc, t, kEscIndex);
    bypass_u32(enc, zigzag_u32(s));
  }
}

inline int64_t gaussian_decode(RangeDecoder& dec, const CdfTable& t) {
  int idx = cdf_decode(dec, t);
  if (idx == kEscIndex) return unzigzag_u32(bypass_u32(dec));
  return idx - kAlphabetRadius;
}

// Exact codelength (bits) gaussian_encode will spend on s under table t.
inline double gaussian_code_bits(const CdfTable& t, int64_t s) {
  if (s >= -kAlphabetRadius && s <= kAlphabetRadius)
    return t.bits(static_cast<int>(s) + kAlphabetRadius);
  return t.bits(kEscIndex) + 32.0;
}

// ---------------------------------------------------------------------------
// Latent-plane coding. Symbols are visited channel-major, row-major (the
// natural (c, y, x) layout of a flattened plane); `mask` (0/1 bytes, same
// layout) restricts coding to retained positions.
// ---------------------------------------------------------------------------

inline void encode_gaussian_plane(RangeEncoder& enc, const float* symbols,
                                  const float* sigma, const uint8_t* mask,
                                  int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    if (mask && !mask[i]) continue;
    gaussian_encode(enc, sigma_table(sigma_level(sigma[i])),
                    static_cast<int64_t>(symbols[i]));
  }
}

inline void decode_gaussian_plane(RangeDecoder& dec, const float* sigma,
                                  const uint8_t* mask, int64_t n,
                                  float* symbols_out) {
  for (int64_t i = 0; i < n; ++i) {
    if (mask && !mask[i]) {
      symbols_out[i] = 0.0f;
      continue;
    }
    symbols_out[i] = static_cast<float>(
        gaussian_decode(dec, sigma_table(sigma_level(sigma[i]))));
  }
}

// Per-channel factorized coding: one table per channel, `plane` samples each.
inline void encode_factorized_plane(RangeEncoder& enc,
                                    const std::vector<CdfTable>& tables,
                                    const float* symbols, int channels,
                                    int64_t plane) {
  for (int c = 0; c < channels; ++c)
    for (int64_t i = 0; i < plane; ++i)
      gaussian_encode(enc, tables[static_cast<size_t>(c)],
                      static_cast<int64_t>(symbols[c * plane + i]));
}

inline void decode_factorized_plane(RangeDecoder& dec,
                                    const std::vector<CdfTable>& tables,
                                    int channels, int64_t plane,
                                    float* symbols_out) {
  for (int c = 0; c < channels; ++c)
    for (int64_t i = 0; i < plane; ++i)
      symbols_out[c * plane + i] = static_cast<float>(
          gaussian_decode(dec, tables[static_cast<size_t>(c)]));
}

}  // namespace tlzmc
