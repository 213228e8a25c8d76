#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace mscl {

// Single-reference pair of lowercased, pre-tokenized sequences.
struct EvalPair {
  std::vector<std::string> candidate;
  std::vector<std::string> reference;
};

struct MetricReport {
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double bleu3 = 0.0;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double meteor = 0.0;

  nlohmann::json to_json() const;
};

// Corpus BLEU without smoothing; 0 when any order has zero matches.
double bleu(std::span<const EvalPair> pairs, std::size_t max_n);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
double rouge_l_pair(const EvalPair &pair);
double rouge_l(std::span<const EvalPair> pairs);

// Exact-match METEOR: leftmost-greedy unigram alignment, fragmentation
// penalty 0.5 * (chunks / matches)^3.
double meteor_lite_pair(const EvalPair &pair);
double meteor_lite(std::span<const EvalPair> pairs);

MetricReport evaluate_corpus(std::span<const EvalPair> pairs);

// Generation output, one `{id, candidate, reference}` object per line.
struct GenerationRecord {
  std::string id;
  std::string candidate;
  std::string reference;
};

std::vector<GenerationRecord> read_generations(const std::filesystem::path &path);
void write_generations(const std::filesystem::path &path, std::span<const GenerationRecord> records);
std::vector<EvalPair> to_eval_pairs(std::span<const GenerationRecord> records);

}  // namespace mscl
