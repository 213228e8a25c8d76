#pragma once

// Naive reference implementations for the text metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "mscl/metrics.hpp"

namespace mscl::testing {

inline std::string join_window(const std::vector<std::string> &t, std::size_t i, std::size_t n) {
  std::string key;
  for (std::size_t k = 0; k < n; ++k) key += t[i + k] + '\x1f';
  return key;
}

inline std::size_t count_window(const std::vector<std::string> &t, const std::string &key, std::size_t n) {
  std::size_t c = 0;
  for (std::size_t i = 0; i + n <= t.size(); ++i) c += join_window(t, i, n) == key;
  return c;
}

// Clipped counts by rescanning both sides for every distinct candidate n-gram.
inline double bleu_oracle(const std::vector<EvalPair> &pairs, std::size_t max_n) {
  double logp = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    double hit = 0.0, tot = 0.0;
    for (const auto &p : pairs) {
      std::vector<std::string> seen;
      for (std::size_t i = 0; i + n <= p.candidate.size(); ++i) {
        tot += 1.0;
        auto key = join_window(p.candidate, i, n);
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
        seen.push_back(key);
        hit += static_cast<double>(std::min(count_window(p.candidate, key, n), count_window(p.reference, key, n)));
      }
    }
    if (hit == 0.0) return 0.0;
    logp += std::log(hit / tot) / static_cast<double>(max_n);
  }
  double c = 0.0, r = 0.0;
  for (const auto &p : pairs) {
    c += static_cast<double>(p.candidate.size());
    r += static_cast<double>(p.reference.size());
  }
  return (c < r ? std::exp(1.0 - r / c) : 1.0) * std::exp(logp);
}

// Largest subset of `a` (by bitmask enumeration) that is a subsequence of `b`.
inline std::size_t lcs_enumerate(const std::vector<std::string> &a, const std::vector<std::string> &b) {
  std::size_t best = 0;
  const std::size_t n = a.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    std::size_t j = 0, picked = 0;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (!(mask >> i & 1)) continue;
      while (j < b.size() && b[j] != a[i]) ++j;
      if (j == b.size()) ok = false;
      else {
        ++j;
        ++picked;
      }
    }
    if (ok) best = std::max(best, picked);
  }
  return best;
}

inline double rouge_oracle(const std::vector<EvalPair> &pairs) {
  double s = 0.0;
  for (const auto &p : pairs) {
    const double l = static_cast<double>(lcs_enumerate(p.candidate, p.reference));
    if (l > 0) {
      const double pr = l / p.candidate.size(), rc = l / p.reference.size();
      s += 2 * pr * rc / (pr + rc);
    }
  }
  return s / static_cast<double>(pairs.size());
}

// Chunks counted as matches minus adjacent aligned pairs.
inline double meteor_oracle_pair(const EvalPair &p) {
  std::vector<int> taken(p.reference.size(), 0);
  std::vector<long> pos(p.candidate.size(), -1);
  for (std::size_t i = 0; i < p.candidate.size(); ++i) {
    auto it = p.reference.begin();
    while (true) {
      it = std::find(it, p.reference.end(), p.candidate[i]);
      if (it == p.reference.end()) break;
      auto j = static_cast<std::size_t>(it - p.reference.begin());
      if (!taken[j]) {
        taken[j] = 1;
        pos[i] = static_cast<long>(j);
        break;
      }
      ++it;
    }
  }
  const double m = static_cast<double>(std::count(taken.begin(), taken.end(), 1));
  if (m == 0) return 0.0;
  double adjacent = 0;
  for (std::size_t i = 0; i + 1 < pos.size(); ++i)
    if (pos[i] >= 0 && pos[i + 1] == pos[i] + 1) adjacent += 1;
  const double chunks = m - adjacent;
  const double P = m / p.candidate.size(), R = m / p.reference.size();
  const double f = 10 * P * R / (R + 9 * P);
  return f * (1 - 0.5 * std::pow(chunks / m, 3));
}

inline double meteor_oracle(const std::vector<EvalPair> &pairs) {
  double s = 0.0;
  for (const auto &p : pairs) s += meteor_oracle_pair(p);
  return s / static_cast<double>(pairs.size());
}

inline std::vector<std::string> random_tokens(std::mt19937_64 &rng, std::size_t min_len, std::size_t max_len,
                                              std::size_t alphabet) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len), sym(0, alphabet - 1);
  std::vector<std::string> out(len(rng));
  for (auto &t : out) t = std::string(1, static_cast<char>('a' + sym(rng)));
  return out;
}

inline std::vector<EvalPair> random_corpus(std::mt19937_64 &rng, std::size_t n, std::size_t alphabet = 5) {
  std::vector<EvalPair> out(n);
  for (auto &p : out) {
    p.reference = random_tokens(rng, 1, 12, alphabet);
    p.candidate = random_tokens(rng, 1, 12, alphabet);
  }
  return out;
}

}  // namespace mscl::testing
