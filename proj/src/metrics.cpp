#include "mscl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "mscl/data.hpp"
#include "mscl/error.hpp"

namespace mscl {

nlohmann::json MetricReport::to_json() const {
  return {{"bleu1", bleu1}, {"bleu2", bleu2}, {"bleu3", bleu3},
          {"bleu4", bleu4}, {"rouge_l", rouge_l}, {"meteor", meteor}};
}

namespace {

using NGramCounts = std::map<std::vector<std::string>, std::size_t>;

NGramCounts ngrams(const std::vector<std::string> &tokens, std::size_t n) {
  NGramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

void require_nonempty(std::span<const EvalPair> pairs, const char *metric) {
  if (pairs.empty()) throw InputError(std::string(metric) + " needs at least one pair");
}

}  // namespace

double bleu(std::span<const EvalPair> pairs, std::size_t max_n) {
  if (max_n < 1 || max_n > 4) throw ParameterError("BLEU order must lie in [1, 4]");
  require_nonempty(pairs, "BLEU");
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    std::size_t matched = 0, total = 0;
    for (const auto &p : pairs) {
      const auto cand = ngrams(p.candidate, n);
      const auto ref = ngrams(p.reference, n);
      for (const auto &[g, c] : cand) {
        total += c;
        auto it = ref.find(g);
        if (it != ref.end()) matched += std::min(c, it->second);
      }
    }
    if (matched == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }
  std::size_t c = 0, r = 0;
  for (const auto &p : pairs) {
    c += p.candidate.size();
    r += p.reference.size();
  }
  const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_pair(const EvalPair &pair) {
  const auto l = static_cast<double>(lcs_length(pair.candidate, pair.reference));
  if (l == 0.0) return 0.0;
  const double p = l / static_cast<double>(pair.candidate.size());
  const double r = l / static_cast<double>(pair.reference.size());
  return 2.0 * p * r / (p + r);
}

double rouge_l(std::span<const EvalPair> pairs) {
  require_nonempty(pairs, "ROUGE-L");
  double s = 0.0;
  for (const auto &p : pairs) s += rouge_l_pair(p);
  return s / static_cast<double>(pairs.size());
}

double meteor_lite_pair(const EvalPair &pair) {
  const auto &cand = pair.candidate;
  const auto &ref = pair.reference;
  std::vector<bool> used(ref.size(), false);
  // Reference position aligned to each candidate token, or npos.
  std::vector<std::size_t> align(cand.size(), std::string::npos);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && ref[j] == cand[i]) {
        used[j] = true;
        align[i] = j;
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;

  std::size_t chunks = 0;
  std::size_t last = std::string::npos;
  bool in_run = false;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (align[i] == std::string::npos) {
      in_run = false;
      continue;
    }
    if (!in_run || align[i] != last + 1) ++chunks;
    in_run = true;
    last = align[i];
  }

  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(cand.size());
  const double r = m / static_cast<double>(ref.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(chunks) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return f_mean * (1.0 - penalty);
}

double meteor_lite(std::span<const EvalPair> pairs) {
  require_nonempty(pairs, "METEOR");
  double s = 0.0;
  for (const auto &p : pairs) s += meteor_lite_pair(p);
  return s / static_cast<double>(pairs.size());
}

MetricReport evaluate_corpus(std::span<const EvalPair> pairs) {
  require_nonempty(pairs, "evaluation");
  MetricReport m;
  m.bleu1 = bleu(pairs, 1);
  m.bleu2 = bleu(pairs, 2);
  m.bleu3 = bleu(pairs, 3);
  m.bleu4 = bleu(pairs, 4);
  m.rouge_l = rouge_l(pairs);
  m.meteor = meteor_lite(pairs);
  return m;
}

std::vector<GenerationRecord> read_generations(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open generations file " + path.string());
  std::vector<GenerationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + " line " + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error &e) {
      throw SchemaError(where + ": invalid JSON: " + e.what());
    }
    GenerationRecord r;
    const std::pair<const char *, std::string *> fields[] = {
        {"id", &r.id}, {"candidate", &r.candidate}, {"reference", &r.reference}};
    for (auto [key, dst] : fields) {
      if (!j.is_object() || !j.contains(key) || !j[key].is_string())
        throw SchemaError(where + ": field '" + key + "' must be a string");
      *dst = j[key].get<std::string>();
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_generations(const std::filesystem::path &path, std::span<const GenerationRecord> records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto &r : records)
    out << nlohmann::json{{"id", r.id}, {"candidate", r.candidate}, {"reference", r.reference}}.dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<EvalPair> to_eval_pairs(std::span<const GenerationRecord> records) {
  std::vector<EvalPair> out;
  out.reserve(records.size());
  for (const auto &r : records) out.push_back({tokenize(r.candidate), tokenize(r.reference)});
  return out;
}

}  // namespace mscl
