#include "mscl/objectives.hpp"

#include <cmath>
#include <random>

#include "mscl/data.hpp"
#include "mscl/error.hpp"
#include "mscl/ops.hpp"

namespace mscl {

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  if (labels.empty()) throw EmptyInputError("one_hot: no labels");
  std::vector<double> v(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw LabelError("label " + std::to_string(labels[i]) + " outside " + std::to_string(classes) + " classes");
    }
    v[i * classes + labels[i]] = 1.0;
  }
  return Tensor({labels.size(), classes}, std::move(v));
}

Tensor classification_loss(const Tensor &p, const Tensor &y) { return cross_entropy_rows(p, y); }

Tensor generation_loss(const Tensor &p_word, std::span<const std::size_t> targets) {
  if (p_word.rank() != 2 || p_word.rows() != targets.size()) {
    throw DimensionError("generation_loss: " + std::to_string(targets.size()) + " targets for " +
                         shape_str(p_word.shape()));
  }
  std::vector<std::size_t> rows, labels;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == Vocabulary::kPad) continue;
    rows.push_back(i);
    labels.push_back(targets[i]);
  }
  if (rows.empty()) throw EmptyInputError("generation_loss: every target position is PAD");
  Tensor kept = rows.size() == targets.size() ? p_word : gather_rows(p_word, rows);
  return cross_entropy_rows(kept, one_hot(labels, p_word.cols()));
}

ContrastiveHead::ContrastiveHead(std::size_t d, std::size_t d_proj, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  auto linear = [&](std::size_t in, std::size_t out) {
    std::vector<double> w(in * out);
    const double sd = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto &x : w) x = sd * dist(rng);
    Linear l{Tensor({in, out}, std::move(w)), Tensor::zeros({out})};
    l.w.set_requires_grad();
    l.b.set_requires_grad();
    return l;
  };
  img1 = linear(d, d);
  img2 = linear(d, d_proj);
  txt1 = linear(d, d);
  txt2 = linear(d, d_proj);
}

std::vector<std::pair<std::string, Tensor>> ContrastiveHead::named_parameters() const {
  return {{"head.img1.w", img1.w}, {"head.img1.b", img1.b}, {"head.img2.w", img2.w}, {"head.img2.b", img2.b},
          {"head.txt1.w", txt1.w}, {"head.txt1.b", txt1.b}, {"head.txt2.w", txt2.w}, {"head.txt2.b", txt2.b}};
}

std::vector<Tensor> ContrastiveHead::parameters() const {
  std::vector<Tensor> out;
  for (auto &[name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::pair<Tensor, Tensor> contrastive_project(const Tensor &h_img, const Tensor &h_txt, const ContrastiveHead &head) {
  auto as_rows = [](const Tensor &t) { return t.rank() == 1 ? reshape(t, {1, t.numel()}) : t; };
  return {head.img2(relu(head.img1(as_rows(h_img)))), head.txt2(relu(head.txt1(as_rows(h_txt))))};
}

bool same_label(const TopicSignature &a, const TopicSignature &b, LabelMatch mode) {
  if (a == b) return true;
  if (mode == LabelMatch::exact) return false;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    if (a[i] && b[i]) return true;
  return false;
}

Tensor contrastive_weights(std::span<const TopicSignature> labels, double theta, LabelMatch mode) {
  if (!(theta >= 0.0) || !std::isfinite(theta)) throw ParameterError("theta must be a finite value >= 0");
  const std::size_t n = labels.size();
  std::vector<double> w(n * n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && same_label(labels[i], labels[j], mode)) w[i * n + j] = theta;
  return Tensor({n, n}, std::move(w));
}

Tensor contrastive_loss(const Tensor &z_img, const Tensor &z_txt, std::span<const TopicSignature> labels,
                        const ContrastiveOptions &options) {
  if (!(options.tau > 0.0) || !std::isfinite(options.tau)) throw ParameterError("tau must be positive");
  if (z_img.rank() != 2 || z_txt.rank() != 2 || z_img.shape() != z_txt.shape()) {
    throw DimensionError("contrastive_loss: projection shapes " + shape_str(z_img.shape()) + " vs " +
                         shape_str(z_txt.shape()));
  }
  if (labels.size() != z_img.rows()) throw DimensionError("contrastive_loss: one label per item is required");
  Tensor s = scale(cosine_sim_matrix(z_img, z_txt), 1.0 / options.tau);
  Tensor w = contrastive_weights(labels, options.theta, options.match);
  return sub(sum(weighted_logsumexp_rows(s, w)), sum(diagonal(s)));
}

Tensor total_loss(const Tensor &l_c, const Tensor &l_ce, const Tensor &l_cl, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("lambda must lie in [0, 1]");
  return add(scale(add(l_c, l_ce), lambda), scale(l_cl, 1.0 - lambda));
}

}  // namespace mscl
