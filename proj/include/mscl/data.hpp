#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mscl/image.hpp"

namespace mscl {

// Index order is the class index used by the state classifier.
enum class TopicState : std::uint8_t { positive = 0, negative = 1, uncertain = 2, unmentioned = 3 };

inline constexpr std::size_t kNumTopicStates = 4;

std::string_view to_string(TopicState state);
std::optional<TopicState> parse_topic_state(std::string_view text);
inline bool is_abnormal(TopicState s) { return s == TopicState::positive || s == TopicState::uncertain; }

struct Study {
  std::string id;
  std::vector<std::filesystem::path> image_paths;
  std::string indication;
  std::string report;
  std::vector<TopicState> topic_states;
  // Decoded views; empty until loaded or synthesized.
  std::vector<GrayImage> views;
};

std::vector<std::string> tokenize(std::string_view text);
std::string detokenize(std::span<const std::string> tokens);

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;

  Vocabulary();

  // Tokens with count >= min_freq, ordered by (count desc, token asc) after
  // the four specials.
  static Vocabulary build(std::span<const std::string> corpus, std::size_t min_freq);

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(std::string_view token) const;
  const std::string &token(std::size_t id) const { return tokens_.at(id); }
  bool contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }

  std::vector<std::size_t> encode(std::span<const std::string> tokens) const;
  // Stops at EOS; drops PAD and BOS.
  std::vector<std::string> decode(std::span<const std::size_t> ids) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json &j);

  bool operator==(const Vocabulary &other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t, std::less<>> ids_;
};

struct DatasetSplit {
  std::vector<Study> train;
  std::vector<Study> val;
  std::vector<Study> test;
};

// Seeded shuffle, then floor(0.7M) / floor(0.1M) / remainder.
DatasetSplit split_dataset(std::vector<Study> studies, std::uint64_t seed);

struct TopicTemplates {
  std::string name;
  std::vector<std::string> normal;
  std::vector<std::string> abnormal;
};

struct SynthSpec {
  std::size_t n_topics = 6;
  std::vector<TopicTemplates> topics;  // empty -> builtin chest templates
  std::size_t n_studies = 200;
  double abnormality_rate = 0.3;
  std::size_t image_size = 64;
  std::size_t min_views = 1;
  std::size_t max_views = 2;
  double background_noise = 0.02;
  // Bright speckle clumps scattered outside the findings.
  std::size_t distractors = 0;
  std::uint64_t seed = 1;

  void validate() const;
};

std::vector<TopicTemplates> default_topic_templates();

std::vector<Study> synth_corpus(const SynthSpec &spec);

// Writes views as PNG under dir/images and one JSONL manifest line per study.
// Returns the manifest path.
std::filesystem::path write_dataset(const std::filesystem::path &dir, std::vector<Study> &studies);

// Parses a JSONL manifest. Image paths are resolved against the manifest's
// directory and checked for existence; states are validated against
// `num_topics` / `num_states` when nonzero.
std::vector<Study> load_dataset(const std::filesystem::path &manifest, std::size_t num_topics = 0,
                                std::size_t num_states = kNumTopicStates);

// Reads every view of every study that has not been decoded yet.
void load_views(std::vector<Study> &studies);

}  // namespace mscl
