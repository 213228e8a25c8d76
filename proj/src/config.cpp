#include "mscl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mscl/error.hpp"
#include "toml.hpp"

namespace mscl {

void RunConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("train.lambda must lie in [0, 1]");
  if (!(theta >= 0.0) || !std::isfinite(theta)) throw ConfigError("train.theta must be >= 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("train.tau must be > 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (d_proj == 0) throw ConfigError("train.d_proj must be positive");
  if (min_freq == 0) throw ConfigError("train.min_freq must be positive");
  if (beam_width == 0 || beam_width > 8) throw ConfigError("decode.beam_width must lie in [1, 8]");
  if (backend != "builtin" && backend != "proposals-dir")
    throw ConfigError("segmenter.backend must be 'builtin' or 'proposals-dir', got '" + backend + "'");
  if (backend == "proposals-dir" && proposals_dir.empty())
    throw ConfigError("segmenter.proposals_dir is required with the proposals-dir backend");
  segmenter.validate();
  ModelConfig m = model;
  if (m.vocab_size == 0) m.vocab_size = 16;  // checked against the real vocabulary later
  m.validate();
  if (!(synth.abnormality_rate >= 0.0 && synth.abnormality_rate <= 1.0))
    throw ConfigError("synth.abnormality_rate must lie in [0, 1]");
  if (synth.n_studies == 0) throw ConfigError("synth.n_studies must be positive");
  if (synth.min_views == 0 || synth.max_views < synth.min_views)
    throw ConfigError("synth view range must satisfy 1 <= min_views <= max_views");
  if (!(synth.noise >= 0.0)) throw ConfigError("synth.noise must be >= 0");
}

namespace {

class Reader {
 public:
  Reader(const toml::table &root) : root_(root) {}

  const toml::table *table(const char *name) {
    known_top_.insert(name);
    const auto *node = root_.get(name);
    if (!node) return nullptr;
    if (!node->is_table()) throw ConfigError(std::string("'") + name + "' must be a table");
    return node->as_table();
  }

  void top_key(const char *key) { known_top_.insert(key); }

  void check_unknown_top() const {
    for (const auto &[k, v] : root_)
      if (!known_top_.count(std::string(k.str()))) throw ConfigError("unknown config key '" + std::string(k.str()) + "'");
  }

 private:
  const toml::table &root_;
  std::set<std::string> known_top_;
};

class Section {
 public:
  Section(const toml::table *t, std::string name) : t_(t), name_(std::move(name)) {}

  template <typename T>
  void get(const char *key, T &out) {
    known_.insert(key);
    if (!t_) return;
    const auto *node = t_->get(key);
    if (!node) return;
    const std::string where = name_.empty() ? key : name_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      auto v = node->value<bool>();
      if (!v) throw ConfigError(where + " must be a boolean");
      out = *v;
    } else if constexpr (std::is_same_v<T, double>) {
      auto v = node->value<double>();
      if (!v || !(node->is_floating_point() || node->is_integer())) throw ConfigError(where + " must be a number");
      out = *v;
    } else if constexpr (std::is_same_v<T, std::string>) {
      auto v = node->value<std::string>();
      if (!v) throw ConfigError(where + " must be a string");
      out = *v;
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      auto v = node->value<std::string>();
      if (!v) throw ConfigError(where + " must be a string");
      out = *v;
    } else {
      if (!node->is_integer()) throw ConfigError(where + " must be an integer");
      const auto v = *node->value<std::int64_t>();
      if (v < 0) throw ConfigError(where + " must be non-negative");
      out = static_cast<T>(v);
    }
  }

  void check_unknown() const {
    if (!t_) return;
    for (const auto &[k, v] : *t_) {
      if (!known_.count(std::string(k.str())))
        throw ConfigError("unknown config key '" + (name_.empty() ? "" : name_ + ".") + std::string(k.str()) + "'");
    }
  }

 private:
  const toml::table *t_;
  std::string name_;
  std::set<std::string> known_;
};

std::string label_match_name(LabelMatch m) { return m == LabelMatch::exact ? "exact" : "any-overlap"; }
std::string decode_name(DecodeStrategy s) { return s == DecodeStrategy::greedy ? "greedy" : "beam"; }

}  // namespace

RunConfig parse_config(std::string_view text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error &e) {
    std::ostringstream msg;
    msg << "TOML syntax error at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  RunConfig c;
  Reader r(root);
  {
    Section top(&root, "");
    r.top_key("seed");
    top.get("seed", c.seed);
  }
  {
    Section s(r.table("model"), "model");
    auto &m = c.model;
    s.get("n_topics", m.n_topics);
    s.get("n_states", m.n_states);
    s.get("d", m.d);
    s.get("c", m.c);
    s.get("decoder_layers", m.decoder_layers);
    s.get("encoder_layers", m.encoder_layers);
    s.get("heads", m.heads);
    s.get("ff_dim", m.ff_dim);
    s.get("max_len", m.max_len);
    s.get("patch", m.patch);
    s.get("image_size", m.image_size);
    s.get("text_positions", m.text_positions);
    s.check_unknown();
  }
  {
    Section s(r.table("segmenter"), "segmenter");
    auto &g = c.segmenter;
    s.get("enabled", c.use_segmenter);
    s.get("backend", c.backend);
    s.get("proposals_dir", c.proposals_dir);
    s.get("grid_size", g.grid_size);
    s.get("conf_threshold", g.conf_threshold);
    s.get("stability_threshold", g.stability_threshold);
    s.get("stability_offset", g.stability_offset);
    s.get("nms_iou_threshold", g.nms_iou_threshold);
    s.get("background_attenuation", g.background_attenuation);
    s.check_unknown();
  }
  {
    Section s(r.table("train"), "train");
    s.get("lambda", c.lambda);
    s.get("theta", c.theta);
    s.get("tau", c.tau);
    std::string match = label_match_name(c.label_match);
    s.get("label_match", match);
    if (match == "exact") c.label_match = LabelMatch::exact;
    else if (match == "any-overlap") c.label_match = LabelMatch::any_overlap;
    else throw ConfigError("train.label_match must be 'exact' or 'any-overlap'");
    s.get("d_proj", c.d_proj);
    s.get("lr", c.lr);
    s.get("weight_decay", c.weight_decay);
    s.get("batch_size", c.batch_size);
    s.get("epochs", c.epochs);
    s.get("min_freq", c.min_freq);
    s.get("single_view", c.single_view);
    s.get("val_every", c.val_every);
    s.check_unknown();
  }
  {
    Section s(r.table("decode"), "decode");
    std::string strategy = decode_name(c.decode);
    s.get("strategy", strategy);
    if (strategy == "greedy") c.decode = DecodeStrategy::greedy;
    else if (strategy == "beam") c.decode = DecodeStrategy::beam;
    else throw ConfigError("decode.strategy must be 'greedy' or 'beam'");
    s.get("beam_width", c.beam_width);
    s.check_unknown();
  }
  {
    Section s(r.table("paths"), "paths");
    s.get("manifest", c.manifest);
    s.get("out_dir", c.out_dir);
    s.check_unknown();
  }
  {
    Section s(r.table("synth"), "synth");
    s.get("n_studies", c.synth.n_studies);
    s.get("abnormality_rate", c.synth.abnormality_rate);
    s.get("distractors", c.synth.distractors);
    s.get("min_views", c.synth.min_views);
    s.get("max_views", c.synth.max_views);
    s.get("noise", c.synth.noise);
    s.check_unknown();
  }
  r.check_unknown_top();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_toml(const RunConfig &c) {
  auto i64 = [](std::size_t v) { return static_cast<std::int64_t>(v); };
  const auto &m = c.model;
  const auto &g = c.segmenter;
  toml::table root{
      {"seed", static_cast<std::int64_t>(c.seed)},
      {"model", toml::table{{"n_topics", i64(m.n_topics)},
                            {"n_states", i64(m.n_states)},
                            {"d", i64(m.d)},
                            {"c", i64(m.c)},
                            {"decoder_layers", i64(m.decoder_layers)},
                            {"encoder_layers", i64(m.encoder_layers)},
                            {"heads", i64(m.heads)},
                            {"ff_dim", i64(m.ff_dim)},
                            {"max_len", i64(m.max_len)},
                            {"patch", i64(m.patch)},
                            {"image_size", i64(m.image_size)},
                            {"text_positions", m.text_positions}}},
      {"segmenter", toml::table{{"enabled", c.use_segmenter},
                                {"backend", c.backend},
                                {"proposals_dir", c.proposals_dir.string()},
                                {"grid_size", i64(g.grid_size)},
                                {"conf_threshold", g.conf_threshold},
                                {"stability_threshold", g.stability_threshold},
                                {"stability_offset", g.stability_offset},
                                {"nms_iou_threshold", g.nms_iou_threshold},
                                {"background_attenuation", g.background_attenuation}}},
      {"train", toml::table{{"lambda", c.lambda},
                            {"theta", c.theta},
                            {"tau", c.tau},
                            {"label_match", label_match_name(c.label_match)},
                            {"d_proj", i64(c.d_proj)},
                            {"lr", c.lr},
                            {"weight_decay", c.weight_decay},
                            {"batch_size", i64(c.batch_size)},
                            {"epochs", i64(c.epochs)},
                            {"min_freq", i64(c.min_freq)},
                            {"single_view", c.single_view},
                            {"val_every", i64(c.val_every)}}},
      {"decode", toml::table{{"strategy", decode_name(c.decode)}, {"beam_width", i64(c.beam_width)}}},
      {"paths", toml::table{{"manifest", c.manifest.string()}, {"out_dir", c.out_dir.string()}}},
      {"synth", toml::table{{"n_studies", i64(c.synth.n_studies)},
                            {"abnormality_rate", c.synth.abnormality_rate},
                            {"distractors", i64(c.synth.distractors)},
                            {"min_views", i64(c.synth.min_views)},
                            {"max_views", i64(c.synth.max_views)},
                            {"noise", c.synth.noise}}},
  };
  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

}  // namespace mscl
