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

#include <bit>
#include <string>

#include "tlzmc/codec/base_layer.hpp"
#include "tlzmc/codec/container.hpp"
#include "tlzmc/codec/enhancement.hpp"
#include "tlzmc/codec/interpolator.hpp"

namespace tlzmc {

// One trained operating point: the architecture sizes, the rate target
// (metric + lambda index) it was optimized for, and the initialization seed.
// Widths scale together between the full profile and the 1/8-width toy
// profile used by fast CPU runs.
struct ModelConfig {
  int canf_width = 128;   // coupling/hyper feature width
  int latent_c = 128;     // transmitted latent channels
  int hyper_c = 64;       // side-latent channels
  int interp_width = 32;  // flow-estimator features
  int scaler_width = 32;  // DS/SR correction features
  int merge_width = 64;   // merge/refine features
  int skip1_c = 48;       // skip-generator stage-1 channels
  int skip2_c = 128;      // skip-generator stage-2 channels
  bool fa_base = true;    // frame-type adaptation in the base compressor
  Metric metric = Metric::kMse;
  int lambda_index = 0;   // position on the 4-point rate ladder
  uint32_t seed = 1;

  bool operator==(const ModelConfig&) const = default;
};

inline ModelConfig toy_config(uint32_t seed = 1) {
  ModelConfig c;
  c.canf_width = 16;
  c.latent_c = 16;
  c.hyper_c = 8;
  c.interp_width = 4;
  c.scaler_width = 4;
  c.merge_width = 8;
  c.skip1_c = 6;
  c.skip2_c = 16;
  c.seed = seed;
  return c;
}

// Distortion weight for each point on the rate ladder (paper protocol:
// four models per metric).
inline constexpr int kLambdaCount = 4;

inline double lambda_value(Metric metric, int index) {
  check(index >= 0 && index < kLambdaCount, "lambda index out of range");
  static constexpr double kMseLadder[kLambdaCount] = {256, 512, 1024, 2048};
  static constexpr double kSsimLadder[kLambdaCount] = {4, 8, 16, 32};
  return metric == Metric::kMse ? kMseLadder[index] : kSsimLadder[index];
}

// The complete codec: intra compressor, frame interpolator, base layer and
// enhancement layer sharing one parameter store. Weight files are "TLZW"
// blobs: config header, then every named tensor in sorted-name order.
class ModelBundle {
 public:
  explicit ModelBundle(const ModelConfig& cfg) : cfg_(cfg) {
    Rng rng(cfg.seed);
    intra_ = CanfCompressor(ps_, rng, "intra", cfg.canf_width, cfg.latent_c,
                            cfg.hyper_c, false);
    interp_ = Interpolator(ps_, rng, "interp", cfg.interp_width);
    base_ = BaseLayer(ps_, rng, "base", cfg.canf_width, cfg.latent_c,
                      cfg.hyper_c, cfg.scaler_width, cfg.fa_base);
    enh_ = Enhancement(ps_, rng, "enh", cfg.canf_width, cfg.latent_c,
                       cfg.hyper_c, cfg.merge_width, cfg.skip1_c, cfg.skip2_c);
  }

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& config() { return cfg_; }
  double lambda() const { return lambda_value(cfg_.metric, cfg_.lambda_index); }

  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

  const CanfCompressor& intra() const { return intra_; }
  const Interpolator& interp() const { return interp_; }
  const BaseLayer& base() const { return base_; }
  const Enhancement& enh() const { return enh_; }

  // Free-form training provenance ("phase3:epoch5;..."), carried in the file.
  const std::string& lineage() const { return lineage_; }
  void append_lineage(const std::string& entry) {
    if (!lineage_.empty()) lineage_ += ";";
    lineage_ += entry;
  }

  std::vector<uint8_t> serialize() const {
    detail::ByteWriter w;
    for (char m : kWeightsMagic) w.u8(static_cast<uint8_t>(m));
    w.u8(kWeightsVersion);
    w.u32(static_cast<uint32_t>(cfg_.canf_width));
    w.u32(static_cast<uint32_t>(cfg_.latent_c));
    w.u32(static_cast<uint32_t>(cfg_.hyper_c));
    w.u32(static_cast<uint32_t>(cfg_.interp_width));
    w.u32(static_cast<uint32_t>(cfg_.scaler_width));
    w.u32(static_cast<uint32_t>(cfg_.merge_width));
    w.u32(static_cast<uint32_t>(cfg_.skip1_c));
    w.u32(static_cast<uint32_t>(cfg_.skip2_c));
    w.u8(cfg_.fa_base ? 1 : 0);
    w.u8(static_cast<uint8_t>(cfg_.metric));
    w.u8(static_cast<uint8_t>(cfg_.lambda_index));
    w.u32(cfg_.seed);
    w.u32(static_cast<uint32_t>(lineage_.size()));
    for (char ch : lineage_) w.u8(static_cast<uint8_t>(ch));
    w.u32(static_cast<uint32_t>(ps_.all().size()));
    for (const auto& [name, v] : ps_.all()) {
      check(name.size() <= 0xffff, "weights: name too long");
      w.u8(static_cast<uint8_t>(name.size() & 0xff));
      w.u8(static_cast<uint8_t>(name.size() >> 8));
      for (char ch : name) w.u8(static_cast<uint8_t>(ch));
      const auto& t = v.value();
      w.u8(static_cast<uint8_t>(t.rank()));
      for (int d = 0; d < t.rank(); ++d)
        w.u32(static_cast<uint32_t>(t.dim(d)));
      for (int64_t i = 0; i < t.numel(); ++i)
        w.u32(std::bit_cast<uint32_t>(t[i]));
    }
    return std::move(w.out);
  }

  static ModelBundle deserialize(const std::vector<uint8_t>& blob) {
    detail::ByteReader r{blob.data(), blob.data() + blob.size()};
    for (char m : kWeightsMagic)
      check(r.u8() == static_cast<uint8_t>(m), "weights: bad magic");
    uint8_t version = r.u8();
    check(version == kWeightsVersion,
          "weights: unsupported version " + std::to_string(version));
    ModelConfig cfg;
    cfg.canf_width = static_cast<int>(r.u32());
    cfg.latent_c = static_cast<int>(r.u32());
    cfg.hyper_c = static_cast<int>(r.u32());
    cfg.interp_width = static_cast<int>(r.u32());
    cfg.scaler_width = static_cast<int>(r.u32());
    cfg.merge_width = static_cast<int>(r.u32());
    cfg.skip1_c = static_cast<int>(r.u32());
    cfg.skip2_c = static_cast<int>(r.u32());
    cfg.fa_base = r.u8() != 0;
    uint8_t metric = r.u8();
    check(metric <= 1, "weights: bad metric id");
    cfg.metric = static_cast<Metric>(metric);
    cfg.lambda_index = r.u8();
    check(cfg.lambda_index < kLambdaCount, "weights: bad lambda index");
    cfg.seed = r.u32();

    ModelBundle bundle(cfg);
    uint32_t lineage_len = r.u32();
    bundle.lineage_.reserve(lineage_len);
    for (uint32_t i = 0; i < lineage_len; ++i)
      bundle.lineage_ += static_cast<char>(r.u8());

    uint32_t count = r.u32();
    check(count == bundle.ps_.all().size(),
          "weights: parameter count mismatch");
    for (uint32_t i = 0; i < count; ++i) {
      uint16_t len = r.u8();
      len = static_cast<uint16_t>(len | (static_cast<uint16_t>(r.u8()) << 8));
      std::string name;
      name.reserve(len);
      for (uint16_t k = 0; k < len; ++k) name += static_cast<char>(r.u8());
      check(bundle.ps_.has(name), "weights: unknown parameter " + name);
      auto& t = bundle.ps_.at(name).mutable_value();
      uint8_t rank = r.u8();
      check(rank == t.rank(), "weights: rank mismatch on " + name);
      for (int d = 0; d < t.rank(); ++d)
        check(r.u32() == static_cast<uint32_t>(t.dim(d)),
              "weights: shape mismatch on " + name);
      for (int64_t k = 0; k < t.numel(); ++k)
        t[k] = std::bit_cast<float>(r.u32());
    }
    check(r.p == r.end, "weights: trailing bytes");
    return bundle;
  }

  void save(const std::string& path) const { save_bytes(path, serialize()); }

  static ModelBundle load(const std::string& path) {
    return deserialize(load_bytes(path));
  }

 private:
  static constexpr char kWeightsMagic[4] = {'T', 'L', 'Z', 'W'};
  static constexpr uint8_t kWeightsVersion = 1;

  ModelConfig cfg_;
  ParamStore ps_;
  std::string lineage_;
  CanfCompressor intra_;
  Interpolator interp_;
  BaseLayer base_;
  Enhancement enh_;
};

}  // namespace tlzmc
