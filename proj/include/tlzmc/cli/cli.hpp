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

// Command-line surface. Subcommands:
//   train    run the phase schedule (or one phase / a rate-point fine-tune)
//   encode   png directory or .yuv file -> .tlzm bitstream
//   decode   .tlzm bitstream -> png frames
//   eval     RD measurement (bpp / PSNR / MS-SSIM) and BD-rate between CSVs
//   profile  parameter / MACs-per-pixel breakdown table
//   stats    layer bit shares and skip-mask statistics of a bitstream
//
// Global flags: --seed overrides the RNG seed, --config names a defaults
// file of `key = value` lines ('#' starts a comment). Explicit flags beat
// config values, which beat built-in defaults. Recognized keys:
//   arch metric lambda_index seed gop lr batch intra_epochs
//   epochs1 epochs2 epochs3 epochs4 crop val_every plateau_factor
//   plateau_patience skip_trigger epsilon synthetic synthetic_size max_clips
//
// Commands are plain functions over the library types so tests can drive
// them in-process; main() is a one-line shim around run_cli().

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tlzmc/codec/engine.hpp"
#include "tlzmc/codec/model.hpp"
#include "tlzmc/data/dataset.hpp"
#include "tlzmc/data/frame_io.hpp"
#include "tlzmc/eval/bd_rate.hpp"
#include "tlzmc/eval/metrics.hpp"
#include "tlzmc/eval/profile.hpp"
#include "tlzmc/eval/stats.hpp"
#include "tlzmc/train/trainer.hpp"

namespace tlzmc::cli {

namespace detail {

using Kv = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// `key = value` lines; '#' comments; unknown or duplicate keys are errors so
// typos never pass silently.
inline Kv parse_config_file(const std::string& path) {
  static const std::set<std::string> kKnown = {
      "arch",         "metric",        "lambda_index",
      "seed",         "gop",           "lr",
      "batch",        "intra_epochs",  "epochs1",
      "epochs2",      "epochs3",       "epochs4",
      "crop",         "val_every",     "plateau_factor",
      "plateau_patience", "skip_trigger", "epsilon",
      "synthetic",    "synthetic_size", "max_clips"};
  std::ifstream in(path);
  check(in.good(), "config: cannot open " + path);
  Kv kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    check(eq != std::string::npos, "config: line " + std::to_string(lineno) +
                                       " is not `key = value`");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    check(!key.empty() && !val.empty(),
          "config: empty key or value on line " + std::to_string(lineno));
    check(kKnown.count(key) > 0, "config: unknown key '" + key + "'");
    check(kv.emplace(key, val).second, "config: duplicate key '" + key + "'");
  }
  return kv;
}

inline double parse_num(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    check(used == s.size(), "");
    return v;
  } catch (...) {
    throw std::runtime_error("bad number '" + s + "' for " + what);
  }
}

inline std::string kv_str(const Kv& kv, const std::string& key,
                          const std::string& dflt) {
  auto it = kv.find(key);
  return it == kv.end() ? dflt : it->second;
}

inline double kv_num(const Kv& kv, const std::string& key, double dflt) {
  auto it = kv.find(key);
  return it == kv.end() ? dflt : parse_num(it->second, "config key " + key);
}

inline int kv_int(const Kv& kv, const std::string& key, int dflt) {
  double v = kv_num(kv, key, dflt);
  check(v == static_cast<int>(v), "config: key " + key + " wants an integer");
  return static_cast<int>(v);
}

inline Metric metric_from(const std::string& s) {
  if (s == "mse") return Metric::kMse;
  if (s == "msssim") return Metric::kMsSsim;
  throw std::runtime_error("unknown metric '" + s + "' (want mse|msssim)");
}

inline ModelConfig arch_from(const std::string& s, uint32_t seed) {
  if (s == "toy") return toy_config(seed);
  if (s == "full") {
    ModelConfig c;
    c.seed = seed;
    return c;
  }
  throw std::runtime_error("unknown arch '" + s + "' (want full|toy)");
}

// Training hyperparameters shared by `train` in all its modes.
inline void apply_train_keys(const Kv& kv, TrainConfig& cfg) {
  cfg.lr = kv_num(kv, "lr", cfg.lr);
  cfg.batch = kv_int(kv, "batch", cfg.batch);
  cfg.intra_epochs = kv_int(kv, "intra_epochs", cfg.intra_epochs);
  for (int i = 0; i < 4; ++i)
    cfg.epochs[static_cast<size_t>(i)] = kv_int(
        kv, "epochs" + std::to_string(i + 1), cfg.epochs[static_cast<size_t>(i)]);
  cfg.crop = kv_int(kv, "crop", cfg.crop);
  cfg.val_every = kv_int(kv, "val_every", cfg.val_every);
  cfg.plateau_factor = kv_num(kv, "plateau_factor", cfg.plateau_factor);
  cfg.plateau_patience = kv_int(kv, "plateau_patience", cfg.plateau_patience);
  cfg.skip_trigger = kv_num(kv, "skip_trigger", cfg.skip_trigger);
  cfg.epsilon = kv_num(kv, "epsilon", cfg.epsilon);
}

inline std::string sequence_name(const std::string& input) {
  std::filesystem::path p(input);
  std::string name = p.filename().string();
  if (name.empty()) name = p.parent_path().filename().string();
  return name.empty() ? std::string("sequence") : name;
}

// One coded frame and the sequence average, as printed by encode/decode/eval.
inline void print_frame_row(std::ostream& out, const FrameStat& s,
                            int64_t pixels) {
  out << std::setw(5) << s.poc << "  " << frame_type_name(s.type) << "  "
      << std::setw(9) << s.bits << "  " << std::fixed << std::setprecision(4)
      << std::setw(8) << static_cast<double>(s.bits) / static_cast<double>(pixels);
  if (s.type != FrameType::kIntra) {
    out << "  " << std::setw(9) << s.base_bits << "  " << std::setw(9)
        << s.enh_bits;
    if (s.retained >= 0.0)
      out << "  " << std::setprecision(3) << std::setw(8) << s.retained;
  }
  out << "\n";
}

inline void print_frame_table(std::ostream& out,
                              const std::vector<FrameStat>& stats, int width,
                              int height) {
  int64_t pixels = static_cast<int64_t>(width) * height;
  out << "  poc  t       bits       bpp  base_bits   enh_bits  retained\n";
  int64_t total = 0;
  for (const auto& s : stats) {
    print_frame_row(out, s, pixels);
    total += s.bits;
  }
  double bpp = static_cast<double>(total) /
               (static_cast<double>(pixels) * static_cast<double>(stats.size()));
  out << "total: " << stats.size() << " frames, " << total << " bits, "
      << std::fixed << std::setprecision(4) << bpp << " bpp\n";
}

// RD rows accumulate across runs; the header is written once per file.
inline void append_rd_csv(const std::string& path, const std::string& sequence,
                          double lambda, double bpp, double psnr_db,
                          double msssim) {
  bool fresh = !std::filesystem::exists(path) ||
               std::filesystem::file_size(path) == 0;
  std::ofstream f(path, std::ios::app);
  check(f.good(), "eval: cannot open " + path);
  if (fresh) f << "sequence,lambda,bpp,psnr,msssim\n";
  f << sequence << "," << std::setprecision(10) << lambda << "," << bpp << ","
    << psnr_db << "," << msssim << "\n";
}

// Rows sharing a lambda average into one curve point (multi-sequence CSVs
// give the per-ladder-entry mean, the usual BD-rate convention).
inline std::vector<RdPoint> read_rd_csv(const std::string& path,
                                        bool use_msssim) {
  std::ifstream in(path);
  check(in.good(), "eval: cannot open " + path);
  std::map<double, std::array<double, 3>> acc;  // lambda -> {bpp, q, count}
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.rfind("sequence", 0) == 0) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) fields.push_back(cell);
    check(fields.size() == 5, "eval: malformed RD row: " + line);
    double lambda = parse_num(fields[1], "lambda");
    double bpp = parse_num(fields[2], "bpp");
    double q = parse_num(fields[use_msssim ? 4 : 3], "quality");
    check(std::isfinite(q), "eval: missing quality in row: " + line);
    auto& a = acc[lambda];
    a[0] += bpp;
    a[1] += q;
    a[2] += 1.0;
  }
  std::vector<RdPoint> pts;
  for (const auto& [lambda, a] : acc)
    pts.push_back({a[0] / a[2], a[1] / a[2]});
  check(!pts.empty(), "eval: no RD rows in " + path);
  return pts;
}

struct TrainOpts {
  std::string data;           // clip root (subdirectory per clip)
  int synthetic = 0;          // or: generate N moving-texture clips
  int synthetic_size = 0;     // 0 -> config/default 64
  int max_clips = 0;
  std::string arch;           // ""/full/toy; "" -> config/default full
  std::string metric;         // ""/mse/msssim
  int lambda_index = -1;      // -1 -> config/default 0
  std::string out;
  std::string checkpoint_dir;
  std::string resume;         // continue from a weights file
  std::string finetune_from;  // clone + re-optimize at a new rate point
  int phase = -1;             // -1 -> the full 0..4 schedule
  bool quiet = false;
};

inline std::vector<TrainingClip> load_training_clips(const TrainOpts& o,
                                                     const Kv& kv,
                                                     uint64_t seed) {
  int synth = o.synthetic > 0 ? o.synthetic : kv_int(kv, "synthetic", 0);
  check(o.data.empty() || synth == 0, "train: choose --data or --synthetic");
  if (!o.data.empty())
    return load_clip_dirs(o.data,
                          o.max_clips > 0 ? o.max_clips
                                          : kv_int(kv, "max_clips", 0));
  check(synth > 0, "train: need --data or --synthetic");
  int size = o.synthetic_size > 0 ? o.synthetic_size
                                  : kv_int(kv, "synthetic_size", 64);
  std::vector<TrainingClip> clips;
  clips.reserve(static_cast<size_t>(synth));
  for (int i = 0; i < synth; ++i)
    clips.push_back(synthetic_clip(seed * 1000003ull + static_cast<uint64_t>(i),
                                   size, size));
  return clips;
}

inline void print_phase_reports(std::ostream& out,
                                const std::vector<PhaseReport>& reports) {
  for (const auto& r : reports) {
    out << "phase " << r.phase << ": steps=" << r.steps << " val "
        << std::setprecision(6) << r.first_val << " -> " << r.best_val;
    if (r.skip_activated_at >= 0) out << " skip@" << r.skip_activated_at;
    out << "\n";
  }
}

inline int cmd_train(const TrainOpts& o, const Kv& kv, uint64_t seed,
                     bool seed_set, std::ostream& out) {
  uint32_t mseed = seed_set ? static_cast<uint32_t>(seed)
                            : static_cast<uint32_t>(kv_int(kv, "seed", 1));
  int li = o.lambda_index >= 0 ? o.lambda_index : kv_int(kv, "lambda_index", 0);
  check(li >= 0 && li < kLambdaCount, "train: lambda index out of range");
  auto clips = load_training_clips(o, kv, mseed);
  out << "training on " << clips.size() << " clips\n";

  if (!o.finetune_from.empty()) {
    check(o.resume.empty() && o.phase < 0,
          "train: --finetune-from excludes --resume/--phase");
    ModelBundle src = ModelBundle::load(o.finetune_from);
    TrainConfig cfg = train_config_for(src);
    apply_train_keys(kv, cfg);
    if (seed_set) cfg.seed = seed;
    cfg.checkpoint_dir = o.checkpoint_dir;
    if (!o.quiet) cfg.log = &out;
    ModelBundle ft = finetune_rate_point(src, li, cfg, clips);
    ft.save(o.out);
    out << "saved " << o.out << " (lambda " << ft.lambda() << ")\n";
    return 0;
  }

  ModelBundle model = [&] {
    if (!o.resume.empty()) {
      check(o.arch.empty() && o.metric.empty() && o.lambda_index < 0,
            "train: --resume takes the architecture from the weights file");
      return ModelBundle::load(o.resume);
    }
    ModelConfig mc = arch_from(o.arch.empty() ? kv_str(kv, "arch", "full")
                                              : o.arch,
                               mseed);
    mc.metric = metric_from(o.metric.empty() ? kv_str(kv, "metric", "mse")
                                             : o.metric);
    mc.lambda_index = li;
    return ModelBundle(mc);
  }();

  TrainConfig cfg = train_config_for(model);
  apply_train_keys(kv, cfg);
  if (seed_set) cfg.seed = seed;
  cfg.checkpoint_dir = o.checkpoint_dir;
  if (!o.quiet) cfg.log = &out;

  std::vector<PhaseReport> reports;
  if (o.phase >= 0)
    reports.push_back(run_phase(o.phase, cfg, model, clips));
  else
    reports = train_full(cfg, model, clips);
  model.save(o.out);
  print_phase_reports(out, reports);
  out << "saved " << o.out << " (lambda " << model.lambda() << ")\n";
  return 0;
}

struct CodecOpts {
  std::string model, input, output;
  int gop = 0;  // 0 -> config/default 8
  int max_frames = 0;
};

inline int cmd_encode(const CodecOpts& o, const Kv& kv, std::ostream& out) {
  ModelBundle m = ModelBundle::load(o.model);
  auto frames = load_sequence(o.input, 0, 0, o.max_frames);
  int gop = o.gop > 0 ? o.gop : kv_int(kv, "gop", 8);
  CodedSequence coded = encode_sequence(m, frames, gop);
  auto bytes = write_container(coded.container);
  save_bytes(o.output, bytes);
  print_frame_table(out, coded.stats, frames[0].width, frames[0].height);
  out << "wrote " << o.output << " (" << bytes.size() << " bytes)\n";
  return 0;
}

inline int cmd_decode(const CodecOpts& o, std::ostream& out) {
  ModelBundle m = ModelBundle::load(o.model);
  Container c = read_container(load_bytes(o.input));
  DecodedSequence dec = decode_sequence(m, c);
  print_frame_table(out, dec.stats, static_cast<int>(c.width),
                    static_cast<int>(c.height));
  if (!o.output.empty()) {
    save_sequence(o.output, dec.frames);
    out << "wrote " << dec.frames.size() << " frames to " << o.output << "\n";
  }
  return 0;
}

struct EvalOpts {
  std::string model, input, csv, sequence;
  int gop = 0, max_frames = 0;
  std::string bd_anchor, bd_test, bd_quality = "psnr";
};

inline int cmd_eval(const EvalOpts& o, const Kv& kv, std::ostream& out) {
  bool rd = !o.model.empty() || !o.input.empty();
  bool bd = !o.bd_anchor.empty() || !o.bd_test.empty();
  check(rd || bd,
        "eval: need --model/--input for RD points or --bd-anchor/--bd-test");
  if (rd) {
    check(!o.model.empty() && !o.input.empty(),
          "eval: --model and --input go together");
    ModelBundle m = ModelBundle::load(o.model);
    auto frames = load_sequence(o.input, 0, 0, o.max_frames);
    int gop = o.gop > 0 ? o.gop : kv_int(kv, "gop", 8);
    // The closed coding loop makes encoder-side reconstructions bit-identical
    // to decoder output, so one encode pass measures both.
    CodedSequence coded = encode_sequence(m, frames, gop);
    int w = frames[0].width, h = frames[0].height;
    int64_t pixels = static_cast<int64_t>(w) * h;
    bool with_ms = std::min(w, h) >= 160;  // 5-scale MS-SSIM floor
    std::map<int, int64_t> bits;           // poc -> payload bits
    for (const auto& s : coded.stats) bits[s.poc] = s.bits;
    out << "  poc       bits       bpp    psnr  msssim\n";
    double sum_psnr = 0.0, sum_ms = 0.0;
    int64_t sum_bits = 0;
    for (size_t i = 0; i < frames.size(); ++i) {
      Tensor orig = display_region(frames[i]);
      Tensor rec = display_region(coded.recon[i]);
      double p = psnr(orig, rec);
      int64_t b = bits.at(frames[i].poc);
      sum_psnr += p;
      sum_bits += b;
      out << std::setw(5) << frames[i].poc << "  " << std::setw(9) << b << "  "
          << std::fixed << std::setprecision(4) << std::setw(8)
          << static_cast<double>(b) / static_cast<double>(pixels) << "  "
          << std::setprecision(2) << std::setw(6) << p;
      if (with_ms) {
        double ms = ms_ssim_value(orig, rec);
        sum_ms += ms;
        out << "  " << std::setprecision(4) << ms;
      }
      out << "\n";
    }
    double n = static_cast<double>(frames.size());
    double bpp = static_cast<double>(sum_bits) / (static_cast<double>(pixels) * n);
    double avg_psnr = sum_psnr / n;
    double avg_ms = with_ms ? sum_ms / n
                            : std::numeric_limits<double>::quiet_NaN();
    out << "average: " << std::setprecision(4) << bpp << " bpp, "
        << std::setprecision(2) << avg_psnr << " dB";
    if (with_ms) out << ", " << std::setprecision(4) << avg_ms << " ms-ssim";
    out << "\n";
    if (!o.csv.empty())
      append_rd_csv(o.csv,
                    o.sequence.empty() ? sequence_name(o.input) : o.sequence,
                    m.lambda(), bpp, avg_psnr, avg_ms);
  }
  if (bd) {
    check(!o.bd_anchor.empty() && !o.bd_test.empty(),
          "eval: --bd-anchor and --bd-test go together");
    bool use_ms = o.bd_quality == "msssim";
    check(use_ms || o.bd_quality == "psnr",
          "eval: --bd-quality wants psnr|msssim");
    BdResult r = bd_rate(read_rd_csv(o.bd_anchor, use_ms),
                         read_rd_csv(o.bd_test, use_ms));
    out << "BD-rate (" << o.bd_quality << "): " << std::showpos << std::fixed
        << std::setprecision(3) << r.percent << "%" << std::noshowpos << "\n";
    if (r.anchor_pchip || r.test_pchip)
      out << "note: non-monotone cubic fit, used monotone spline fallback\n";
  }
  return 0;
}

struct ProfileOpts {
  std::string model, arch;
  int width = 1920, height = 1088;
};

inline int cmd_profile(const ProfileOpts& o, const Kv& kv, std::ostream& out) {
  // Weight values never enter MAC counts, so an uninitialized bundle of the
  // right architecture profiles the same as a trained one.
  ModelBundle m = o.model.empty()
                      ? ModelBundle(arch_from(
                            o.arch.empty() ? kv_str(kv, "arch", "full")
                                           : o.arch,
                            1))
                      : ModelBundle::load(o.model);
  out << format_complexity(profile_complexity(m, o.height, o.width));
  return 0;
}

struct StatsOpts {
  std::string model, input, csv;
};

inline int cmd_stats(const StatsOpts& o, std::ostream& out) {
  ModelBundle m = ModelBundle::load(o.model);
  Container c = read_container(load_bytes(o.input));
  DecodedSequence dec = decode_sequence(m, c);
  LayerStats st = layer_stats(c, dec.stats);
  auto pct = [&](int64_t part) {
    return st.total_bits() > 0
               ? 100.0 * static_cast<double>(part) /
                     static_cast<double>(st.total_bits())
               : 0.0;
  };
  out << "frames: " << c.frames.size() << " (" << c.width << "x" << c.height
      << ", gop " << static_cast<int>(c.gop_size) << ")\n"
      << std::fixed << std::setprecision(2)  //
      << "total bits: " << st.total_bits() << "\n"
      << "intra bits: " << st.intra_bits << " (" << pct(st.intra_bits)
      << "%)\n"
      << "base bits:  " << st.base_bits << " (" << pct(st.base_bits) << "%)\n"
      << "enh bits:   " << st.enh_bits << " (" << pct(st.enh_bits) << "%)\n"
      << "base share of inter payload: " << 100.0 * st.base_fraction()
      << "%\n";
  auto frac = [&](const char* label, double v) {
    out << label;
    if (v >= 0.0)
      out << std::setprecision(4) << v << "\n";
    else
      out << "-\n";
  };
  frac("retained latent fraction: ", st.retained_mean);
  frac("  reference B: ", st.retained_ref);
  frac("  non-reference B: ", st.retained_nonref);
  if (!o.csv.empty()) {
    std::ofstream f(o.csv);
    check(f.good(), "stats: cannot open " + o.csv);
    f << stats_csv(dec.stats);
    out << "wrote " << o.csv << "\n";
  }
  return 0;
}

}  // namespace detail

// Parses argv and dispatches. Usage errors exit non-zero via CLI11; library
// errors print one `tlzmc: ...` line and return 1.
inline int run_cli(int argc, const char* const* argv, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"two-layer hierarchical B-frame video codec"};
  app.require_subcommand(1);
  std::string config_path;
  uint64_t seed = 0;
  app.add_option("--config", config_path,
                 "key=value defaults file ('#' comments)")
      ->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed override");

  detail::TrainOpts t;
  auto* train = app.add_subcommand("train", "run the training phase schedule");
  train->add_option("--data", t.data, "directory of per-clip subdirectories")
      ->check(CLI::ExistingDirectory);
  train->add_option("--synthetic", t.synthetic,
                    "train on N generated moving-texture clips");
  train->add_option("--synthetic-size", t.synthetic_size,
                    "generated clip frame size (default 64)");
  train->add_option("--max-clips", t.max_clips, "cap on loaded clips");
  train->add_option("--arch", t.arch, "model widths: full|toy (default full)");
  train->add_option("--metric", t.metric,
                    "rate-distortion metric: mse|msssim (default mse)");
  train->add_option("--lambda-index", t.lambda_index,
                    "rate-ladder position (default 0)")
      ->check(CLI::Range(0, kLambdaCount - 1));
  train->add_option("--out", t.out, "output weights file")->required();
  train->add_option("--checkpoint-dir", t.checkpoint_dir,
                    "per-epoch checkpoint directory");
  train->add_option("--resume", t.resume, "weights file to continue from")
      ->check(CLI::ExistingFile);
  train->add_option("--finetune-from", t.finetune_from,
                    "trained weights to clone onto a new rate point")
      ->check(CLI::ExistingFile);
  train->add_option("--phase", t.phase, "run a single phase (0..4)")
      ->check(CLI::Range(0, 4));
  train->add_flag("--quiet", t.quiet, "suppress per-step log lines");

  detail::CodecOpts e;
  auto* encode = app.add_subcommand("encode", "compress frames to a bitstream");
  encode->add_option("--model", e.model, "weights file")
      ->required()
      ->check(CLI::ExistingFile);
  encode->add_option("--input", e.input, "png directory or .yuv file")
      ->required()
      ->check(CLI::ExistingPath);
  encode->add_option("--output", e.output, "output bitstream")->required();
  encode->add_option("--gop", e.gop, "GOP size (default 8)")
      ->check(CLI::PositiveNumber);
  encode->add_option("--frames", e.max_frames, "cap on input frames");

  detail::CodecOpts d;
  auto* decode = app.add_subcommand("decode", "reconstruct frames from a bitstream");
  decode->add_option("--model", d.model, "weights file")
      ->required()
      ->check(CLI::ExistingFile);
  decode->add_option("--input", d.input, "input bitstream")
      ->required()
      ->check(CLI::ExistingFile);
  decode->add_option("--output", d.output, "output png directory");

  detail::EvalOpts v;
  auto* eval = app.add_subcommand("eval", "RD measurement and BD-rate");
  eval->add_option("--model", v.model, "weights file")
      ->check(CLI::ExistingFile);
  eval->add_option("--input", v.input, "png directory or .yuv file")
      ->check(CLI::ExistingPath);
  eval->add_option("--gop", v.gop, "GOP size (default 8)")
      ->check(CLI::PositiveNumber);
  eval->add_option("--frames", v.max_frames, "cap on input frames");
  eval->add_option("--csv", v.csv, "append the RD point to this CSV");
  eval->add_option("--sequence", v.sequence,
                   "sequence name for the CSV (default: input basename)");
  eval->add_option("--bd-anchor", v.bd_anchor, "anchor RD CSV")
      ->check(CLI::ExistingFile);
  eval->add_option("--bd-test", v.bd_test, "test RD CSV")
      ->check(CLI::ExistingFile);
  eval->add_option("--bd-quality", v.bd_quality,
                   "BD-rate quality axis: psnr|msssim (default psnr)");

  detail::ProfileOpts p;
  auto* profile = app.add_subcommand("profile", "parameter and MACs breakdown");
  profile->add_option("--model", p.model, "weights file")
      ->check(CLI::ExistingFile);
  profile->add_option("--arch", p.arch, "profile an untrained full|toy model");
  profile->add_option("--width", p.width, "frame width (default 1920)");
  profile->add_option("--height", p.height, "frame height (default 1088)");

  detail::StatsOpts s;
  auto* stats = app.add_subcommand("stats", "layer bit shares of a bitstream");
  stats->add_option("--model", s.model, "weights file")
      ->required()
      ->check(CLI::ExistingFile);
  stats->add_option("--input", s.input, "input bitstream")
      ->required()
      ->check(CLI::ExistingFile);
  stats->add_option("--csv", s.csv, "write per-frame stats to this CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err);
  }
  try {
    detail::Kv kv;
    if (!config_path.empty()) kv = detail::parse_config_file(config_path);
    bool seed_set = seed_opt->count() > 0;
    if (train->parsed()) return detail::cmd_train(t, kv, seed, seed_set, out);
    if (encode->parsed()) return detail::cmd_encode(e, kv, out);
    if (decode->parsed()) return detail::cmd_decode(d, out);
    if (eval->parsed()) return detail::cmd_eval(v, kv, out);
    if (profile->parsed()) return detail::cmd_profile(p, kv, out);
    if (stats->parsed()) return detail::cmd_stats(s, out);
    err << "tlzmc: no command\n";
    return 1;
  } catch (const std::exception& ex) {
    err << "tlzmc: " << ex.what() << "\n";
    return 1;
  }
}

}  // namespace tlzmc::cli
