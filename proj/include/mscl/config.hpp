#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "mscl/model.hpp"
#include "mscl/objectives.hpp"
#include "mscl/segmenter.hpp"

namespace mscl {

struct SynthSettings {
  std::size_t n_studies = 200;
  double abnormality_rate = 0.3;
  std::size_t distractors = 0;
  std::size_t min_views = 1;
  std::size_t max_views = 2;
  double noise = 0.02;
  bool operator==(const SynthSettings &) const = default;
};

struct RunConfig {
  std::uint64_t seed = 1;

  ModelConfig model;

  SegmenterConfig segmenter;
  bool use_segmenter = true;
  std::string backend = "builtin";  // builtin | proposals-dir
  std::filesystem::path proposals_dir;

  double lambda = 0.8;
  double theta = 2.0;
  double tau = 0.5;
  LabelMatch label_match = LabelMatch::exact;
  std::size_t d_proj = 128;
  double lr = 3e-4;
  double weight_decay = 0.02;
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  std::size_t min_freq = 1;
  bool single_view = false;
  // Validation every this many epochs; 0 disables it.
  std::size_t val_every = 1;

  DecodeStrategy decode = DecodeStrategy::greedy;
  std::size_t beam_width = 4;

  std::filesystem::path manifest = "data/manifest.jsonl";
  std::filesystem::path out_dir = "runs/default";

  SynthSettings synth;

  // Throws ConfigError. The vocabulary size is checked once it is known.
  void validate() const;
  bool operator==(const RunConfig &) const = default;
};

RunConfig parse_config(std::string_view toml_text);
RunConfig load_config(const std::filesystem::path &path);
std::string config_to_toml(const RunConfig &config);

}  // namespace mscl
