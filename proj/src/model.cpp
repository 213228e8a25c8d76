#include "mscl/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mscl/data.hpp"
#include "mscl/error.hpp"
#include "mscl/ops.hpp"

namespace mscl {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char *name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive(n_topics, "n_topics");
  positive(d, "d");
  positive(c, "c");
  positive(vocab_size, "vocab_size");
  positive(decoder_layers, "decoder_layers");
  positive(heads, "heads");
  positive(ff_dim, "ff_dim");
  positive(max_len, "max_len");
  positive(patch, "patch");
  positive(image_size, "image_size");
  if (n_states < 2) throw ConfigError("model.n_states must be at least 2");
  if (n_states > kNumTopicStates) throw ConfigError("model.n_states must be at most 4");
  if (d % heads != 0) throw ConfigError("model.d must be divisible by model.heads");
  if (image_size % patch != 0) throw ConfigError("model.image_size must be divisible by model.patch");
  if (vocab_size <= Vocabulary::kUnk) throw ConfigError("model.vocab_size must exceed the special tokens");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"n_topics", n_topics},
          {"n_states", n_states},
          {"d", d},
          {"c", c},
          {"vocab_size", vocab_size},
          {"decoder_layers", decoder_layers},
          {"encoder_layers", encoder_layers},
          {"heads", heads},
          {"ff_dim", ff_dim},
          {"max_len", max_len},
          {"patch", patch},
          {"image_size", image_size},
          {"text_positions", text_positions}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json &j) {
  ModelConfig m;
  try {
    m.n_topics = j.at("n_topics").get<std::size_t>();
    m.n_states = j.at("n_states").get<std::size_t>();
    m.d = j.at("d").get<std::size_t>();
    m.c = j.at("c").get<std::size_t>();
    m.vocab_size = j.at("vocab_size").get<std::size_t>();
    m.decoder_layers = j.at("decoder_layers").get<std::size_t>();
    m.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    m.heads = j.at("heads").get<std::size_t>();
    m.ff_dim = j.at("ff_dim").get<std::size_t>();
    m.max_len = j.at("max_len").get<std::size_t>();
    m.patch = j.at("patch").get<std::size_t>();
    m.image_size = j.at("image_size").get<std::size_t>();
    m.text_positions = j.at("text_positions").get<bool>();
  } catch (const nlohmann::json::exception &e) {
    throw SchemaError(std::string("model config: ") + e.what());
  }
  return m;
}

Tensor Linear::operator()(const Tensor &x) const { return add_row(matmul(x, w), b); }

Tensor LayerNormParams::operator()(const Tensor &x) const { return layer_norm(x, gain, bias); }

namespace {

// Scaled dot-product attention over one segment, all heads.
Tensor attention_core(const Tensor &q, const Tensor &k, const Tensor &v, std::size_t heads, bool causal) {
  const std::size_t d = q.cols(), dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    Tensor kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    Tensor vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul_nt(qh, kh), inv);
    Tensor attn = causal ? causal_softmax_rows(scores) : softmax_rows(scores);
    outs.push_back(matmul(attn, vh));
  }
  return heads == 1 ? outs.front() : concat_cols(outs);
}

std::vector<std::size_t> prefix_offsets(std::span<const std::size_t> lengths) {
  std::vector<std::size_t> off(lengths.size() + 1, 0);
  for (std::size_t i = 0; i < lengths.size(); ++i) off[i + 1] = off[i] + lengths[i];
  return off;
}

// Self-attention applied independently to consecutive row segments.
Tensor segmented_self_attention(const AttentionParams &p, const Tensor &x, std::span<const std::size_t> lengths,
                                std::size_t heads, bool causal) {
  Tensor q = p.q(x), k = p.k(x), v = p.v(x);
  if (lengths.size() == 1) return p.o(attention_core(q, k, v, heads, causal));
  auto off = prefix_offsets(lengths);
  std::vector<Tensor> parts;
  parts.reserve(lengths.size());
  for (std::size_t s = 0; s < lengths.size(); ++s) {
    parts.push_back(attention_core(slice_rows(q, off[s], lengths[s]), slice_rows(k, off[s], lengths[s]),
                                   slice_rows(v, off[s], lengths[s]), heads, causal));
  }
  return p.o(concat_rows(parts));
}

Tensor feed_forward(const Linear &ff1, const Linear &ff2, const Tensor &x) { return ff2(relu(ff1(x))); }

Tensor positions_for(const Tensor &table, std::span<const std::size_t> lengths) {
  const std::size_t d = table.cols();
  std::size_t total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
  std::vector<double> data;
  data.reserve(total * d);
  auto t = table.data();
  for (auto len : lengths) data.insert(data.end(), t.begin(), t.begin() + static_cast<std::ptrdiff_t>(len * d));
  return Tensor({total, d}, std::move(data));
}

class Init {
 public:
  explicit Init(std::uint64_t seed) : rng_(seed) {}

  Tensor normal(Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(shape_numel(shape));
    for (auto &x : v) x = stddev * dist(rng_);
    return Tensor(std::move(shape), std::move(v)).set_requires_grad();
  }
  Tensor constant(Shape shape, double value) { return Tensor::full(std::move(shape), value).set_requires_grad(); }
  Linear linear(std::size_t in, std::size_t out) {
    return {normal({in, out}, 1.0 / std::sqrt(static_cast<double>(in))), constant({out}, 0.0)};
  }
  LayerNormParams norm(std::size_t d) { return {constant({d}, 1.0), constant({d}, 0.0)}; }
  AttentionParams attention(std::size_t d) { return {linear(d, d), linear(d, d), linear(d, d), linear(d, d)}; }

 private:
  std::mt19937_64 rng_;
};

void add_linear(std::vector<std::pair<std::string, Tensor>> &out, const std::string &name, const Linear &l) {
  out.emplace_back(name + ".w", l.w);
  out.emplace_back(name + ".b", l.b);
}

void add_norm(std::vector<std::pair<std::string, Tensor>> &out, const std::string &name, const LayerNormParams &l) {
  out.emplace_back(name + ".gain", l.gain);
  out.emplace_back(name + ".bias", l.bias);
}

void add_attention(std::vector<std::pair<std::string, Tensor>> &out, const std::string &name,
                   const AttentionParams &a) {
  add_linear(out, name + ".q", a.q);
  add_linear(out, name + ".k", a.k);
  add_linear(out, name + ".v", a.v);
  add_linear(out, name + ".o", a.o);
}

}  // namespace

Tensor multi_head_attention(const AttentionParams &p, const Tensor &xq, const Tensor &xkv, std::size_t heads,
                            bool causal) {
  if (heads == 0 || xq.cols() % heads != 0) throw DimensionError("attention: width not divisible by heads");
  return p.o(attention_core(p.q(xq), p.k(xkv), p.v(xkv), heads, causal));
}

Tensor sinusoidal_positions(std::size_t rows, std::size_t d) {
  std::vector<double> v(rows * d);
  for (std::size_t pos = 0; pos < rows; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * freq;
      v[pos * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor({rows, d}, std::move(v));
}

Tensor topic_attention(const Tensor &q, const Tensor &h) {
  if (h.rank() == 2 && h.rows() == 0) throw EmptyInputError("topic_attention: no text states");
  return matmul(softmax_rows(matmul_nt(q, h)), h);
}

Tensor fuse(const Tensor &d_img, const Tensor &d_txt, const LayerNormParams &ln) {
  if (d_img.shape() != d_txt.shape()) {
    throw DimensionError("fuse: shape mismatch " + shape_str(d_img.shape()) + " vs " + shape_str(d_txt.shape()));
  }
  return ln(add(d_img, d_txt));
}

Tensor classify_states(const Tensor &d_it, const Tensor &s) { return softmax_rows(matmul_nt(d_it, s)); }

Tensor word_distribution(const Tensor &h_dec, const Tensor &w) { return softmax_rows(matmul_nt(h_dec, w)); }

Tensor weighted_word_embedding(const Tensor &p_word, const Tensor &w) { return matmul(p_word, w); }

MsclModel::MsclModel(const ModelConfig &config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto &m = config_;
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(m.d));
  Init init(seed);

  extractor_.patch_proj = init.linear(m.patch * m.patch, m.c);
  extractor_.patch_pos = init.normal({m.patches(), m.c}, 0.1);
  extractor_.feature_ln = init.norm(m.c);
  extractor_.disease_a = init.normal({m.c, m.n_topics * m.d}, 1.0 / std::sqrt(static_cast<double>(m.c)));
  extractor_.disease_b = init.constant({m.n_topics * m.d}, 0.0);

  encoder_.embed = init.normal({m.vocab_size, m.d}, emb_std);
  encoder_.topics = init.normal({m.n_topics, m.d}, emb_std);
  for (std::size_t l = 0; l < m.encoder_layers; ++l) {
    EncoderLayer layer;
    layer.ln1 = init.norm(m.d);
    layer.self = init.attention(m.d);
    layer.ln2 = init.norm(m.d);
    layer.ff1 = init.linear(m.d, m.ff_dim);
    layer.ff2 = init.linear(m.ff_dim, m.d);
    encoder_.layers.push_back(std::move(layer));
  }
  encoder_.final_ln = init.norm(m.d);

  fuse_ln_ = init.norm(m.d);
  states_ = init.normal({m.n_states, m.d}, emb_std);

  decoder_.embed = init.normal({m.vocab_size, m.d}, emb_std);
  for (std::size_t l = 0; l < m.decoder_layers; ++l) {
    DecoderLayer layer;
    layer.ln1 = init.norm(m.d);
    layer.self = init.attention(m.d);
    layer.ln2 = init.norm(m.d);
    layer.cross = init.attention(m.d);
    layer.ln3 = init.norm(m.d);
    layer.ff1 = init.linear(m.d, m.ff_dim);
    layer.ff2 = init.linear(m.ff_dim, m.d);
    decoder_.layers.push_back(std::move(layer));
  }
  decoder_.final_ln = init.norm(m.d);
  positions_ = sinusoidal_positions(m.max_len, m.d);

  auto &p = params_;
  add_linear(p, "extractor.patch_proj", extractor_.patch_proj);
  p.emplace_back("extractor.patch_pos", extractor_.patch_pos);
  add_norm(p, "extractor.feature_ln", extractor_.feature_ln);
  p.emplace_back("extractor.disease_a", extractor_.disease_a);
  p.emplace_back("extractor.disease_b", extractor_.disease_b);
  p.emplace_back("encoder.embed", encoder_.embed);
  p.emplace_back("encoder.topics", encoder_.topics);
  for (std::size_t l = 0; l < encoder_.layers.size(); ++l) {
    const auto &layer = encoder_.layers[l];
    const std::string base = "encoder.layer" + std::to_string(l);
    add_norm(p, base + ".ln1", layer.ln1);
    add_attention(p, base + ".self", layer.self);
    add_norm(p, base + ".ln2", layer.ln2);
    add_linear(p, base + ".ff1", layer.ff1);
    add_linear(p, base + ".ff2", layer.ff2);
  }
  add_norm(p, "encoder.final_ln", encoder_.final_ln);
  add_norm(p, "fuse_ln", fuse_ln_);
  p.emplace_back("classifier.states", states_);
  p.emplace_back("decoder.embed", decoder_.embed);
  for (std::size_t l = 0; l < decoder_.layers.size(); ++l) {
    const auto &layer = decoder_.layers[l];
    const std::string base = "decoder.layer" + std::to_string(l);
    add_norm(p, base + ".ln1", layer.ln1);
    add_attention(p, base + ".self", layer.self);
    add_norm(p, base + ".ln2", layer.ln2);
    add_attention(p, base + ".cross", layer.cross);
    add_norm(p, base + ".ln3", layer.ln3);
    add_linear(p, base + ".ff1", layer.ff1);
    add_linear(p, base + ".ff2", layer.ff2);
  }
  add_norm(p, "decoder.final_ln", decoder_.final_ln);
}

std::vector<Tensor> MsclModel::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto &[name, t] : params_) out.push_back(t);
  return out;
}

std::size_t MsclModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto &[name, t] : params_) n += t.numel();
  return n;
}

std::size_t expected_parameter_count(const ModelConfig &m) {
  const std::size_t d = m.d, f = m.ff_dim;
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t ffn = d * f + f + f * d + d;
  const std::size_t extractor = m.patch * m.patch * m.c + m.c + m.patches() * m.c + 2 * m.c + m.c * m.n_topics * d + m.n_topics * d;
  const std::size_t encoder = m.vocab_size * d + m.n_topics * d + m.encoder_layers * (4 * d + attn + ffn) + 2 * d;
  const std::size_t decoder = m.vocab_size * d + m.decoder_layers * (6 * d + 2 * attn + ffn) + 2 * d;
  return extractor + encoder + 2 * d + m.n_states * d + decoder;
}

Tensor MsclModel::patchify(const GrayImage &image) const {
  const std::size_t p = config_.patch;
  if (image.width % p != 0 || image.height % p != 0) {
    throw ShapeError("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                     " is not divisible into " + std::to_string(p) + "-pixel patches");
  }
  if (image.width != config_.image_size || image.height != config_.image_size) {
    throw ShapeError("image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                     " does not match the configured size " + std::to_string(config_.image_size));
  }
  const std::size_t gx = image.width / p, gy = image.height / p;
  std::vector<double> v;
  v.reserve(image.size());
  for (std::size_t by = 0; by < gy; ++by)
    for (std::size_t bx = 0; bx < gx; ++bx)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x) v.push_back(image.at(bx * p + x, by * p + y));
  return Tensor({gx * gy, p * p}, std::move(v));
}

Tensor MsclModel::extract_view(const GrayImage &image) const {
  Tensor h = add(extractor_.patch_proj(patchify(image)), extractor_.patch_pos);
  return extractor_.feature_ln(mean_rows(relu(h)));
}

Tensor MsclModel::pool_views(std::span<const Tensor> features) const {
  if (features.empty()) throw EmptyInputError("pool_views: a study needs at least one view");
  return max_pool_rows(features);
}

Tensor MsclModel::project_diseases(const Tensor &x) const {
  if (x.numel() != config_.c) {
    throw DimensionError("project_diseases: expected " + std::to_string(config_.c) + " features, got " +
                         std::to_string(x.numel()));
  }
  Tensor row = reshape(x, {1, config_.c});
  return reshape(add_row(matmul(row, extractor_.disease_a), extractor_.disease_b), {config_.n_topics, config_.d});
}

Tensor MsclModel::image_topics(std::span<const GrayImage> views) const {
  std::vector<Tensor> feats;
  feats.reserve(views.size());
  for (const auto &v : views) feats.push_back(extract_view(v));
  return project_diseases(pool_views(feats));
}

Tensor MsclModel::encode_rows(const Tensor &x, std::span<const std::size_t> lengths) const {
  Tensor h = x;
  for (const auto &layer : encoder_.layers) {
    h = add(h, segmented_self_attention(layer.self, layer.ln1(h), lengths, config_.heads, false));
    h = add(h, feed_forward(layer.ff1, layer.ff2, layer.ln2(h)));
  }
  return encoder_.final_ln(h);
}

Tensor MsclModel::encode_text_batch(std::span<const std::vector<std::size_t>> sequences,
                                    std::vector<std::size_t> &offsets) const {
  if (sequences.empty()) throw EmptyInputError("encode_text_batch: no sequences");
  std::vector<std::size_t> ids, lengths;
  for (const auto &s : sequences) {
    const std::size_t len = std::min(s.size(), config_.max_len);
    if (len == 0) {
      ids.push_back(Vocabulary::kPad);
      lengths.push_back(1);
    } else {
      ids.insert(ids.end(), s.begin(), s.begin() + static_cast<std::ptrdiff_t>(len));
      lengths.push_back(len);
    }
  }
  offsets = prefix_offsets(lengths);
  Tensor x = scale(gather_rows(encoder_.embed, ids), std::sqrt(static_cast<double>(config_.d)));
  if (config_.text_positions) x = add(x, positions_for(positions_, lengths));
  return encode_rows(x, lengths);
}

Tensor MsclModel::encode_text(std::span<const std::size_t> tokens) const {
  std::vector<std::vector<std::size_t>> one{std::vector<std::size_t>(tokens.begin(), tokens.end())};
  std::vector<std::size_t> offsets;
  return encode_text_batch(one, offsets);
}

Tensor MsclModel::decode_hidden_batch(std::span<const std::vector<std::size_t>> prefixes,
                                      std::span<const Tensor> d_its) const {
  if (prefixes.empty()) throw EmptyInputError("decode_hidden: no prefixes");
  if (d_its.size() != prefixes.size()) throw DimensionError("decode_hidden: one D_it per prefix is required");
  std::vector<std::size_t> ids, lengths;
  for (const auto &p : prefixes) {
    if (p.empty() || p.front() != Vocabulary::kBos) throw InputError("decoder prefix must start with BOS");
    if (p.size() > config_.max_len) {
      throw LengthError("decoder prefix of " + std::to_string(p.size()) + " tokens exceeds max_len " +
                        std::to_string(config_.max_len));
    }
    ids.insert(ids.end(), p.begin(), p.end());
    lengths.push_back(p.size());
  }
  for (const auto &m : d_its) {
    if (m.rank() != 2 || m.rows() != config_.n_topics || m.cols() != config_.d)
      throw DimensionError("decode_hidden: D_it must be " + std::to_string(config_.n_topics) + "x" +
                           std::to_string(config_.d) + ", got " + shape_str(m.shape()));
  }
  const auto off = prefix_offsets(lengths);
  const std::size_t n = config_.n_topics;
  Tensor memory = d_its.size() == 1 ? d_its.front() : concat_rows(d_its);

  Tensor h = scale(gather_rows(decoder_.embed, ids), std::sqrt(static_cast<double>(config_.d)));
  h = add(h, positions_for(positions_, lengths));
  for (const auto &layer : decoder_.layers) {
    h = add(h, segmented_self_attention(layer.self, layer.ln1(h), lengths, config_.heads, true));

    Tensor q = layer.cross.q(layer.ln2(h));
    Tensor k = layer.cross.k(memory), v = layer.cross.v(memory);
    Tensor cross;
    if (lengths.size() == 1) {
      cross = attention_core(q, k, v, config_.heads, false);
    } else {
      std::vector<Tensor> parts;
      parts.reserve(lengths.size());
      for (std::size_t s = 0; s < lengths.size(); ++s) {
        parts.push_back(attention_core(slice_rows(q, off[s], lengths[s]), slice_rows(k, s * n, n),
                                       slice_rows(v, s * n, n), config_.heads, false));
      }
      cross = concat_rows(parts);
    }
    h = add(h, layer.cross.o(cross));
    h = add(h, feed_forward(layer.ff1, layer.ff2, layer.ln3(h)));
  }
  return decoder_.final_ln(h);
}

Tensor MsclModel::decode_hidden(std::span<const std::size_t> prefix, const Tensor &d_it) const {
  std::vector<std::vector<std::size_t>> one{std::vector<std::size_t>(prefix.begin(), prefix.end())};
  std::vector<Tensor> mem{d_it};
  return decode_hidden_batch(one, mem);
}

Tensor MsclModel::word_logits(const Tensor &h_dec) const { return matmul_nt(h_dec, decoder_.embed); }

Tensor MsclModel::disease_embeddings(std::span<const GrayImage> views, std::span<const std::size_t> indication) const {
  Tensor d_img = image_topics(views);
  Tensor d_txt = text_topics(encode_text(indication));
  return fuse(d_img, d_txt);
}

std::vector<std::size_t> MsclModel::generate_report(std::span<const GrayImage> views,
                                                    std::span<const std::size_t> indication,
                                                    const DecodeOptions &options) const {
  return generate_from(disease_embeddings(views, indication), options);
}

namespace {

// log-softmax of the last row of each segment of `logits`.
std::vector<std::vector<double>> last_row_log_probs(const Tensor &logits, std::span<const std::size_t> lengths) {
  const std::size_t v = logits.cols();
  auto data = logits.data();
  std::vector<std::vector<double>> out;
  std::size_t row_end = 0;
  for (auto len : lengths) {
    row_end += len;
    const double *row = data.data() + (row_end - 1) * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    std::vector<double> lp(v);
    for (std::size_t j = 0; j < v; ++j) lp[j] = row[j] - lse;
    out.push_back(std::move(lp));
  }
  return out;
}

struct Hypothesis {
  std::vector<std::size_t> ids;
  double score = 0.0;
  bool done = false;
};

}  // namespace

std::vector<std::size_t> MsclModel::generate_from(const Tensor &d_it, const DecodeOptions &options) const {
  const std::size_t width = options.strategy == DecodeStrategy::greedy ? 1 : options.beam_width;
  if (width < 1 || width > 8) throw ParameterError("beam width must lie in [1, 8]");
  const std::size_t max_len = config_.max_len;

  std::vector<Hypothesis> beams{Hypothesis{}};
  for (std::size_t step = 0; step < max_len; ++step) {
    std::vector<std::vector<std::size_t>> prefixes;
    std::vector<std::size_t> active;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      if (beams[b].done) continue;
      std::vector<std::size_t> p{Vocabulary::kBos};
      p.insert(p.end(), beams[b].ids.begin(), beams[b].ids.end());
      prefixes.push_back(std::move(p));
      active.push_back(b);
    }
    if (active.empty()) break;
    std::vector<Tensor> mem(prefixes.size(), d_it);
    std::vector<std::size_t> lengths;
    for (const auto &p : prefixes) lengths.push_back(p.size());
    const auto log_probs = last_row_log_probs(word_logits(decode_hidden_batch(prefixes, mem)), lengths);

    std::vector<Hypothesis> next;
    for (const auto &b : beams)
      if (b.done) next.push_back(b);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto &base = beams[active[a]];
      const auto &lp = log_probs[a];
      // Top `width` tokens, ties to the lowest id.
      std::vector<std::size_t> order(lp.size());
      std::iota(order.begin(), order.end(), 0);
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(width, order.size())),
                        order.end(), [&](std::size_t x, std::size_t y) { return lp[x] > lp[y] || (lp[x] == lp[y] && x < y); });
      for (std::size_t r = 0; r < std::min(width, order.size()); ++r) {
        Hypothesis h = base;
        h.ids.push_back(order[r]);
        h.score += lp[order[r]];
        h.done = order[r] == Vocabulary::kEos || h.ids.size() >= max_len;
        next.push_back(std::move(h));
      }
    }
    std::stable_sort(next.begin(), next.end(), [](const Hypothesis &x, const Hypothesis &y) {
      if (x.score != y.score) return x.score > y.score;
      return x.ids < y.ids;
    });
    if (next.size() > width) next.resize(width);
    beams = std::move(next);
    if (std::all_of(beams.begin(), beams.end(), [](const Hypothesis &h) { return h.done; })) break;
  }
  return beams.front().ids;
}

}  // namespace mscl
