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

#include <map>

#include "tlzmc/codec/gop.hpp"
#include "tlzmc/codec/model.hpp"
#include "tlzmc/data/frame.hpp"

namespace tlzmc {

// Sequence-level coding loop. The encoder stores decoded reconstructions (not
// originals) in its reference buffer and feeds every decision network from
// decoder-available data only, so the decoder — running the same plan over
// the same payloads — holds a bit-identical buffer after every slot.

struct FrameStat {
  int poc = 0;
  FrameType type = FrameType::kIntra;
  int64_t bits = 0;       // total payload bits for the frame
  int64_t base_bits = 0;  // B frames: base-layer share
  int64_t enh_bits = 0;   // B frames: enhancement share
  double retained = -1.0;  // mean skip-mask value; < 0 when no mask applies
};

struct CodedSequence {
  Container container;
  std::vector<Frame> recon;      // display order, display size
  std::vector<FrameStat> stats;  // coding order, parallel to container.frames
};

struct DecodedSequence {
  std::vector<Frame> frames;     // display order, display size
  std::vector<FrameStat> stats;  // coding order
};

namespace detail {

// Remaining-use counts per reference POC, so decoded frames leave the buffer
// as soon as nothing later needs them.
inline std::map<int, int> reference_uses(const GopPlan& plan) {
  std::map<int, int> uses;
  for (const auto& s : plan.slots)
    if (s.type != FrameType::kIntra) {
      ++uses[s.ref_prev];
      ++uses[s.ref_next];
    }
  return uses;
}

inline void release_reference(std::map<int, int>& uses,
                              std::map<int, VarT<float>>& buffer, int poc) {
  auto it = uses.find(poc);
  check(it != uses.end() && it->second > 0, "gop engine: reference misuse");
  if (--it->second == 0) buffer.erase(poc);
}

inline double mask_mean(const VarT<float>& mask) {
  double s = 0;
  for (int64_t i = 0; i < mask.numel(); ++i) s += mask.value()[i];
  return s / static_cast<double>(mask.numel());
}

inline Frame to_display_frame(const VarT<float>& padded, int width, int height,
                              int poc) {
  Frame f;
  f.data = padded.value();
  f.width = width;
  f.height = height;
  f.poc = poc;
  Tensor display = display_region(f);
  f.data = std::move(display);
  return make_frame(f.data, poc);
}

}  // namespace detail

// Codes `frames` (display order, identical sizes) under a hierarchical plan
// with intra frames every `gop_size`. Real entropy coding throughout.
inline CodedSequence encode_sequence(const ModelBundle& model,
                                     const std::vector<Frame>& frames,
                                     int gop_size) {
  check(!frames.empty(), "encode: no frames");
  for (const auto& f : frames)
    check(f.width == frames[0].width && f.height == frames[0].height,
          "encode: frame sizes differ");
  GopPlan plan = build_gop_plan(static_cast<int>(frames.size()), gop_size);

  NoGradGuard ng;
  CodedSequence out;
  out.container.metric = model.config().metric;
  out.container.lambda_index = static_cast<uint8_t>(model.config().lambda_index);
  out.container.gop_size = static_cast<uint8_t>(gop_size);
  out.container.width = static_cast<uint32_t>(frames[0].width);
  out.container.height = static_cast<uint32_t>(frames[0].height);
  out.recon.resize(frames.size());

  std::map<int, int> uses = detail::reference_uses(plan);
  std::map<int, VarT<float>> buffer;

  for (const auto& slot : plan.slots) {
    VarT<float> x = VarT<float>::constant(frames[slot.poc].data);
    FrameRecord record;
    record.poc = static_cast<uint32_t>(slot.poc);
    record.frame_type = static_cast<uint8_t>(slot.type);
    FrameStat stat;
    stat.poc = slot.poc;
    stat.type = slot.type;
    VarT<float> recon;

    if (slot.type == FrameType::kIntra) {
      CanfCode code = intra_code(model.intra(), x, CodeMode::kReal);
      record.streams = code.streams;
      recon = code.recon;
    } else {
      auto rp = buffer.find(slot.ref_prev);
      auto rn = buffer.find(slot.ref_next);
      check(rp != buffer.end() && rn != buffer.end(),
            "encode: reference not in buffer");
      int fa = slot.type == FrameType::kBRef ? kFaRef : kFaNonRef;

      InterpResult ir = model.interp()(rp->second, rn->second);
      BaseCode bc =
          model.base().code(x, ir.interpolated, fa, CodeMode::kReal);
      VarT<float> wp = warp_bilinear(rp->second, ir.flow_prev);
      VarT<float> wn = warp_bilinear(rn->second, ir.flow_next);
      MergeOut m = model.enh().merge(bc.sr_frame, wp, wn);
      CanfCode ec = model.enh().code(x, m.cond, ir.flow_prev, ir.flow_next,
                                     fa, CodeMode::kReal);

      record.streams = {bc.code.streams[0], bc.code.streams[1], ec.streams[0],
                        ec.streams[1]};
      stat.base_bits = static_cast<int64_t>(bc.code.payload_bits);
      stat.enh_bits = static_cast<int64_t>(ec.payload_bits);
      stat.retained = detail::mask_mean(ec.mask);
      recon = ec.recon;

      detail::release_reference(uses, buffer, slot.ref_prev);
      detail::release_reference(uses, buffer, slot.ref_next);
    }

    stat.bits = record.payload_bits();
    out.recon[static_cast<size_t>(slot.poc)] = detail::to_display_frame(
        recon, frames[0].width, frames[0].height, slot.poc);
    if (uses.count(slot.poc)) buffer.emplace(slot.poc, recon);
    out.container.frames.push_back(std::move(record));
    out.stats.push_back(stat);
  }
  return out;
}

// Decoder mirror. On the producing platform the output frames (and every
// intermediate reference) are bit-identical to the encoder's reconstructions.
inline DecodedSequence decode_sequence(const ModelBundle& model,
                                       const Container& c) {
  check(c.metric == model.config().metric &&
            c.lambda_index == model.config().lambda_index,
        "decode: bitstream coded by a different operating point");
  check(!c.frames.empty(), "decode: empty container");
  GopPlan plan =
      build_gop_plan(static_cast<int>(c.frames.size()), c.gop_size);
  int ph = pad_up(static_cast<int>(c.height));
  int pw = pad_up(static_cast<int>(c.width));

  NoGradGuard ng;
  DecodedSequence out;
  out.frames.resize(c.frames.size());
  std::map<int, int> uses = detail::reference_uses(plan);
  std::map<int, VarT<float>> buffer;

  for (size_t i = 0; i < plan.slots.size(); ++i) {
    const FrameSlot& slot = plan.slots[i];
    const FrameRecord& record = c.frames[i];
    check(record.poc == static_cast<uint32_t>(slot.poc) &&
              record.frame_type == static_cast<uint8_t>(slot.type),
          "decode: payload order disagrees with the coding plan");
    FrameStat stat;
    stat.poc = slot.poc;
    stat.type = slot.type;
    stat.bits = record.payload_bits();
    VarT<float> recon;

    if (slot.type == FrameType::kIntra) {
      check(record.streams.size() == 2, "decode: intra wants 2 streams");
      recon = intra_decode<float>(model.intra(), record.streams, ph, pw);
    } else {
      check(record.streams.size() == 4, "decode: B frame wants 4 streams");
      auto rp = buffer.find(slot.ref_prev);
      auto rn = buffer.find(slot.ref_next);
      check(rp != buffer.end() && rn != buffer.end(),
            "decode: reference not in buffer");
      int fa = slot.type == FrameType::kBRef ? kFaRef : kFaNonRef;

      InterpResult ir = model.interp()(rp->second, rn->second);
      BaseCode bc = model.base().decode(
          {record.streams[0], record.streams[1]}, ir.interpolated, fa);
      VarT<float> wp = warp_bilinear(rp->second, ir.flow_prev);
      VarT<float> wn = warp_bilinear(rn->second, ir.flow_next);
      MergeOut m = model.enh().merge(bc.sr_frame, wp, wn);
      VarT<float> mask;  // regenerated, never transmitted
      recon = model.enh().decode({record.streams[2], record.streams[3]},
                                 m.cond, ir.flow_prev, ir.flow_next, fa,
                                 &mask);

      stat.base_bits =
          8 * static_cast<int64_t>(record.streams[0].size() +
                                   record.streams[1].size());
      stat.enh_bits =
          8 * static_cast<int64_t>(record.streams[2].size() +
                                   record.streams[3].size());
      stat.retained = detail::mask_mean(mask);

      detail::release_reference(uses, buffer, slot.ref_prev);
      detail::release_reference(uses, buffer, slot.ref_next);
    }

    out.frames[static_cast<size_t>(slot.poc)] = detail::to_display_frame(
        recon, static_cast<int>(c.width), static_cast<int>(c.height),
        slot.poc);
    if (uses.count(slot.poc)) buffer.emplace(slot.poc, recon);
    out.stats.push_back(stat);
  }
  return out;
}

}  // namespace tlzmc
