#include "mscl/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "mscl/error.hpp"

namespace mscl {

namespace {

constexpr std::string_view kStateNames[kNumTopicStates] = {"positive", "negative", "uncertain", "unmentioned"};
const char *const kSpecials[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

}  // namespace

std::string_view to_string(TopicState state) { return kStateNames[static_cast<std::size_t>(state)]; }

std::optional<TopicState> parse_topic_state(std::string_view text) {
  for (std::size_t i = 0; i < kNumTopicStates; ++i)
    if (kStateNames[i] == text) return static_cast<TopicState>(i);
  return std::nullopt;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char *s : kSpecials) {
    ids_.emplace(s, tokens_.size());
    tokens_.emplace_back(s);
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus, std::size_t min_freq) {
  if (min_freq < 1) throw ParameterError("min_freq must be at least 1");
  if (corpus.empty()) throw InputError("cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto &text : corpus)
    for (auto &tok : tokenize(text)) ++counts[tok];

  std::vector<std::pair<std::string, std::size_t>> entries(counts.begin(), counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto &a, const auto &b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (auto &[tok, n] : entries) {
    if (n < min_freq || v.ids_.count(tok)) continue;
    v.ids_.emplace(tok, v.tokens_.size());
    v.tokens_.push_back(tok);
  }
  return v;
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto &t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const std::size_t> ids) const {
  std::vector<std::string> out;
  for (auto i : ids) {
    if (i == kEos) break;
    if (i == kPad || i == kBos) continue;
    if (i >= tokens_.size()) throw InputError("token id " + std::to_string(i) + " outside the vocabulary");
    out.push_back(tokens_[i]);
  }
  return out;
}

nlohmann::json Vocabulary::to_json() const { return nlohmann::json(tokens_); }

Vocabulary Vocabulary::from_json(const nlohmann::json &j) {
  if (!j.is_array() || j.size() < 4) throw SchemaError("vocabulary must be an array of at least 4 tokens");
  Vocabulary v;
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j[i].is_string() || j[i].get<std::string>() != kSpecials[i])
      throw SchemaError("vocabulary entry " + std::to_string(i) + " must be " + kSpecials[i]);
  }
  for (std::size_t i = 4; i < j.size(); ++i) {
    if (!j[i].is_string()) throw SchemaError("vocabulary entry " + std::to_string(i) + " is not a string");
    auto tok = j[i].get<std::string>();
    if (!v.ids_.emplace(tok, v.tokens_.size()).second) throw SchemaError("duplicate vocabulary token '" + tok + "'");
    v.tokens_.push_back(std::move(tok));
  }
  return v;
}

DatasetSplit split_dataset(std::vector<Study> studies, std::uint64_t seed) {
  const std::size_t m = studies.size();
  if (m < 10) throw InputError("splitting needs at least 10 studies, got " + std::to_string(m));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = m * 7 / 10;
  const std::size_t n_val = m / 10;
  DatasetSplit s;
  for (std::size_t i = 0; i < m; ++i) {
    auto &dst = i < n_train ? s.train : (i < n_train + n_val ? s.val : s.test);
    dst.push_back(std::move(studies[order[i]]));
  }
  return s;
}

std::vector<TopicTemplates> default_topic_templates() {
  return {
      {"cardiomegaly", {"The heart size is normal."}, {"The heart is enlarged."}},
      {"effusion", {"No pleural effusion is seen."}, {"There is a small pleural effusion."}},
      {"pneumothorax", {"There is no pneumothorax."}, {"A right pneumothorax is present."}},
      {"consolidation", {"No focal consolidation."}, {"There is focal airspace consolidation."}},
      {"edema", {"No pulmonary edema."}, {"Mild pulmonary edema is noted."}},
      {"atelectasis", {"The lungs are clear."}, {"There is basilar atelectasis."}},
  };
}

void SynthSpec::validate() const {
  if (n_topics == 0) throw ParameterError("synthetic corpus needs at least one topic");
  if (n_topics > 8) throw ParameterError("synthetic renderer supports at most 8 topics");
  if (!topics.empty() && topics.size() != n_topics)
    throw ParameterError("expected " + std::to_string(n_topics) + " topic templates, got " +
                         std::to_string(topics.size()));
  for (const auto &t : topics)
    if (t.normal.empty() || t.abnormal.empty())
      throw ParameterError("topic '" + t.name + "' needs at least one normal and one abnormal template");
  if (!(abnormality_rate >= 0.0 && abnormality_rate <= 1.0)) throw ParameterError("abnormality rate must lie in [0, 1]");
  if (n_studies == 0) throw ParameterError("synthetic corpus needs at least one study");
  if (image_size < 16) throw ParameterError("synthetic image size must be at least 16");
  if (min_views < 1 || max_views < min_views) throw ParameterError("view range must satisfy 1 <= min <= max");
  if (!(background_noise >= 0.0)) throw ParameterError("background noise must be non-negative");
}

namespace {

struct BlobSite {
  double cx, cy;
};

// Two columns, up to four rows.
BlobSite topic_site(std::size_t t, std::size_t size) {
  static constexpr double xs[2] = {0.3125, 0.6875};
  static constexpr double ys[4] = {0.1875, 0.4375, 0.6875, 0.9375};
  const double s = static_cast<double>(size);
  return {xs[t % 2] * s, ys[t / 2] * s};
}

GrayImage render_view(const SynthSpec &spec, const std::vector<TopicState> &states, std::mt19937_64 &rng) {
  const std::size_t s = spec.image_size;
  const double radius = std::round(5.0 * static_cast<double>(s) / 64.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto noise = [&](std::mt19937_64 &g) { return spec.background_noise * gauss(g); };
  std::uniform_int_distribution<int> jitter(-1, 1);
  std::uniform_real_distribution<double> shift(-0.01, 0.01);

  GrayImage img = GrayImage::filled(s, s, 0.0);
  const double offset = shift(rng);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x)
      img.at(x, y) = 0.08 + 0.06 * static_cast<double>(y) / static_cast<double>(s) + offset + noise(rng);

  for (std::size_t t = 0; t < states.size(); ++t) {
    if (states[t] != TopicState::positive) continue;
    auto site = topic_site(t, s);
    const double cx = site.cx + jitter(rng), cy = site.cy + jitter(rng);
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        if (dx * dx + dy * dy <= radius * radius) img.at(x, y) = 0.9 + noise(rng);
      }
  }

  std::uniform_int_distribution<std::size_t> pos(0, s - 2);
  std::uniform_real_distribution<double> bright(0.5, 1.0);
  std::size_t placed = 0, attempts = 0;
  while (placed < spec.distractors && attempts < spec.distractors * 50) {
    ++attempts;
    const std::size_t x0 = pos(rng), y0 = pos(rng);
    bool near_site = false;
    for (std::size_t t = 0; t < states.size() && !near_site; ++t) {
      auto site = topic_site(t, s);
      const double dx = static_cast<double>(x0) + 0.5 - site.cx, dy = static_cast<double>(y0) + 0.5 - site.cy;
      near_site = std::sqrt(dx * dx + dy * dy) <= radius + 3.0;
    }
    if (near_site) continue;
    const double v = bright(rng);
    for (std::size_t y = y0; y < y0 + 2; ++y)
      for (std::size_t x = x0; x < x0 + 2; ++x) img.at(x, y) = v;
    ++placed;
  }

  for (auto &p : img.pixels) p = std::clamp(p, 0.0, 1.0);
  return quantize8(img);
}

std::string join_names(const std::vector<std::string> &names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += (i + 1 == names.size()) ? " and " : ", ";
    out += names[i];
  }
  return out;
}

}  // namespace

std::vector<Study> synth_corpus(const SynthSpec &spec) {
  spec.validate();
  auto topics = spec.topics;
  if (topics.empty()) {
    auto defaults = default_topic_templates();
    for (std::size_t t = 0; t < spec.n_topics; ++t) {
      if (t < defaults.size()) {
        topics.push_back(defaults[t]);
      } else {
        auto name = "finding" + std::to_string(t + 1);
        topics.push_back({name, {"No " + name + " is seen."}, {"There is " + name + " present."}});
      }
    }
  }

  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution abnormal(spec.abnormality_rate);
  std::bernoulli_distribution query_abnormal(0.7), query_normal(0.3);
  std::uniform_int_distribution<std::size_t> views(spec.min_views, spec.max_views);

  std::vector<Study> out;
  out.reserve(spec.n_studies);
  const int width = static_cast<int>(std::to_string(spec.n_studies - 1).size());
  for (std::size_t i = 0; i < spec.n_studies; ++i) {
    Study st;
    std::ostringstream id;
    id << "s" << std::setw(std::max(width, 4)) << std::setfill('0') << i;
    st.id = id.str();

    std::vector<std::string> queried, sentences;
    for (std::size_t t = 0; t < spec.n_topics; ++t) {
      const bool pos = abnormal(rng);
      st.topic_states.push_back(pos ? TopicState::positive : TopicState::negative);
      const auto &pool = pos ? topics[t].abnormal : topics[t].normal;
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      sentences.push_back(pool[pick(rng)]);
      if (pos ? query_abnormal(rng) : query_normal(rng)) queried.push_back(topics[t].name);
    }
    for (std::size_t k = 0; k < sentences.size(); ++k) st.report += (k ? " " : "") + sentences[k];
    st.indication = queried.empty() ? "Routine chest examination." : "Evaluate for " + join_names(queried) + ".";

    const std::size_t m = views(rng);
    for (std::size_t v = 0; v < m; ++v) st.views.push_back(render_view(spec, st.topic_states, rng));
    out.push_back(std::move(st));
  }
  return out;
}

std::filesystem::path write_dataset(const std::filesystem::path &dir, std::vector<Study> &studies) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  const auto manifest = dir / "manifest.jsonl";
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest.string());
  for (auto &st : studies) {
    if (st.views.empty()) throw InputError("study " + st.id + " has no decoded views to write");
    nlohmann::json j;
    j["id"] = st.id;
    j["indication"] = st.indication;
    j["report"] = st.report;
    auto &states = j["topic_states"] = nlohmann::json::array();
    for (auto s : st.topic_states) states.push_back(std::string(to_string(s)));
    auto &imgs = j["images"] = nlohmann::json::array();
    st.image_paths.clear();
    for (std::size_t v = 0; v < st.views.size(); ++v) {
      const std::string rel = "images/" + st.id + "_" + std::to_string(v) + ".png";
      write_png(dir / rel, st.views[v]);
      imgs.push_back(rel);
      st.image_paths.push_back(dir / rel);
    }
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + manifest.string());
  return manifest;
}

std::vector<Study> load_dataset(const std::filesystem::path &manifest, std::size_t num_topics,
                                std::size_t num_states) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open dataset manifest " + manifest.string());
  const auto base = manifest.parent_path();
  std::vector<Study> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest.string() + " line " + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error &e) {
      throw SchemaError(where + ": invalid JSON: " + e.what());
    }
    auto str = [&](const char *key) {
      if (!j.is_object() || !j.contains(key) || !j[key].is_string())
        throw SchemaError(where + ": field '" + key + "' must be a string");
      return j[key].get<std::string>();
    };
    Study st;
    st.id = str("id");
    st.indication = str("indication");
    st.report = str("report");
    if (!j.contains("images") || !j["images"].is_array() || j["images"].empty())
      throw SchemaError(where + ": field 'images' must be a non-empty array");
    for (const auto &p : j["images"]) {
      if (!p.is_string()) throw SchemaError(where + ": image paths must be strings");
      std::filesystem::path path = p.get<std::string>();
      if (path.is_relative()) path = base / path;
      if (!std::filesystem::exists(path)) throw IoError("image file not found: " + path.string() + " (" + where + ")");
      st.image_paths.push_back(std::move(path));
    }
    if (!j.contains("topic_states") || !j["topic_states"].is_array())
      throw SchemaError(where + ": field 'topic_states' must be an array");
    for (const auto &s : j["topic_states"]) {
      auto state = s.is_string() ? parse_topic_state(s.get<std::string>()) : std::nullopt;
      if (!state) throw SchemaError(where + ": invalid topic state " + s.dump());
      if (static_cast<std::size_t>(*state) >= num_states)
        throw SchemaError(where + ": topic state '" + s.get<std::string>() + "' not allowed with k=" +
                          std::to_string(num_states));
      st.topic_states.push_back(*state);
    }
    if (num_topics != 0 && st.topic_states.size() != num_topics)
      throw SchemaError(where + ": expected " + std::to_string(num_topics) + " topic states, got " +
                        std::to_string(st.topic_states.size()));
    out.push_back(std::move(st));
  }
  return out;
}

void load_views(std::vector<Study> &studies) {
  for (auto &st : studies) {
    if (!st.views.empty()) continue;
    for (const auto &p : st.image_paths) st.views.push_back(read_png(p));
  }
}

}  // namespace mscl
