#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mscl/image.hpp"
#include "mscl/tensor.hpp"

namespace mscl {

struct ModelConfig {
  std::size_t n_topics = 6;
  std::size_t n_states = 4;
  std::size_t d = 256;
  std::size_t c = 128;
  std::size_t vocab_size = 0;  // filled from the vocabulary
  std::size_t decoder_layers = 3;
  std::size_t encoder_layers = 1;
  std::size_t heads = 4;
  std::size_t ff_dim = 512;
  std::size_t max_len = 64;
  std::size_t patch = 8;
  std::size_t image_size = 64;
  // Sinusoidal positions on text-encoder inputs.
  bool text_positions = true;

  void validate() const;
  std::size_t patches() const { return (image_size / patch) * (image_size / patch); }
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json &j);
  bool operator==(const ModelConfig &) const = default;
};

struct Linear {
  Tensor w;  // [in x out]
  Tensor b;  // [out]
  Tensor operator()(const Tensor &x) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
  Tensor operator()(const Tensor &x) const;
};

struct AttentionParams {
  Linear q, k, v, o;
};

struct EncoderLayer {
  LayerNormParams ln1, ln2;
  AttentionParams self;
  Linear ff1, ff2;
};

struct DecoderLayer {
  LayerNormParams ln1, ln2, ln3;
  AttentionParams self, cross;
  Linear ff1, ff2;
};

struct VisualExtractor {
  Linear patch_proj;  // [patch^2 -> c]
  Tensor patch_pos;   // [patches x c], per-patch bias
  LayerNormParams feature_ln;  // over the pooled c features
  Tensor disease_a;   // [c x n*d]; columns j*d..(j+1)*d hold A_j
  Tensor disease_b;   // [n*d]
};

struct TextEncoder {
  Tensor embed;   // [v x d]
  Tensor topics;  // Q [n x d]
  std::vector<EncoderLayer> layers;
  LayerNormParams final_ln;
};

struct ReportDecoder {
  Tensor embed;  // W [v x d], shared with the output projection
  std::vector<DecoderLayer> layers;
  LayerNormParams final_ln;
};

// Multi-head attention; `causal` masks keys after each query position.
Tensor multi_head_attention(const AttentionParams &p, const Tensor &xq, const Tensor &xkv, std::size_t heads,
                            bool causal);

// Fixed sinusoidal table [rows x d].
Tensor sinusoidal_positions(std::size_t rows, std::size_t d);

// Topic-attention and state-classifier maps with explicit parameters.
Tensor topic_attention(const Tensor &q, const Tensor &h);
Tensor fuse(const Tensor &d_img, const Tensor &d_txt, const LayerNormParams &ln);
Tensor classify_states(const Tensor &d_it, const Tensor &s);
Tensor word_distribution(const Tensor &h_dec, const Tensor &w);
Tensor weighted_word_embedding(const Tensor &p_word, const Tensor &w);

enum class DecodeStrategy { greedy, beam };

struct DecodeOptions {
  DecodeStrategy strategy = DecodeStrategy::greedy;
  std::size_t beam_width = 4;
};

class MsclModel {
 public:
  MsclModel(const ModelConfig &config, std::uint64_t seed);

  const ModelConfig &config() const { return config_; }

  // Row-major flattening of non-overlapping patches: [patches x patch^2].
  Tensor patchify(const GrayImage &image) const;
  Tensor extract_view(const GrayImage &image) const;
  Tensor pool_views(std::span<const Tensor> features) const;
  Tensor project_diseases(const Tensor &x) const;
  // Image side of one study: pooled view features -> D_img [n x d].
  Tensor image_topics(std::span<const GrayImage> views) const;

  // Empty input encodes a single PAD token. Longer inputs are truncated to
  // max_len.
  Tensor encode_text(std::span<const std::size_t> tokens) const;
  // Several sequences in one pass; returns the stacked states and row offsets.
  Tensor encode_text_batch(std::span<const std::vector<std::size_t>> sequences,
                           std::vector<std::size_t> &offsets) const;
  Tensor text_topics(const Tensor &h) const { return topic_attention(encoder_.topics, h); }
  Tensor fuse(const Tensor &d_img, const Tensor &d_txt) const { return mscl::fuse(d_img, d_txt, fuse_ln_); }
  Tensor classify_states(const Tensor &d_it) const { return mscl::classify_states(d_it, states_); }

  // Prefix starts with BOS; rows follow prefix positions.
  Tensor decode_hidden(std::span<const std::size_t> prefix, const Tensor &d_it) const;
  // Batched prefixes, each attending to its own D_it.
  Tensor decode_hidden_batch(std::span<const std::vector<std::size_t>> prefixes,
                             std::span<const Tensor> d_its) const;
  Tensor word_logits(const Tensor &h_dec) const;
  Tensor word_distribution(const Tensor &h_dec) const { return mscl::word_distribution(h_dec, decoder_.embed); }
  Tensor weighted_word_embedding(const Tensor &p_word) const {
    return mscl::weighted_word_embedding(p_word, decoder_.embed);
  }

  // D_it for one study from its (already preprocessed) views and indication.
  Tensor disease_embeddings(std::span<const GrayImage> views, std::span<const std::size_t> indication) const;

  // Token ids after BOS; ends with EOS unless max_len tokens were produced.
  std::vector<std::size_t> generate_report(std::span<const GrayImage> views, std::span<const std::size_t> indication,
                                           const DecodeOptions &options = {}) const;
  std::vector<std::size_t> generate_from(const Tensor &d_it, const DecodeOptions &options = {}) const;

  // Stable name order; the same list drives checkpoints and the optimizer.
  const std::vector<std::pair<std::string, Tensor>> &named_parameters() const { return params_; }
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  VisualExtractor &extractor() { return extractor_; }
  TextEncoder &encoder() { return encoder_; }
  ReportDecoder &decoder() { return decoder_; }
  Tensor &state_embedding() { return states_; }
  LayerNormParams &fuse_norm() { return fuse_ln_; }

 private:
  Tensor encode_rows(const Tensor &x, std::span<const std::size_t> lengths) const;

  ModelConfig config_;
  VisualExtractor extractor_;
  TextEncoder encoder_;
  LayerNormParams fuse_ln_;
  Tensor states_;  // S [k x d]
  ReportDecoder decoder_;
  Tensor positions_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

// Closed form of the parameter count for a configuration.
std::size_t expected_parameter_count(const ModelConfig &config);

}  // namespace mscl
