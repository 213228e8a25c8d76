#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mscl/model.hpp"
#include "mscl/tensor.hpp"

namespace mscl {

// Constant one-hot rows [labels.size() x classes].
Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes);

// Mean cross-entropy of per-topic state distributions p [n x k].
Tensor classification_loss(const Tensor &p, const Tensor &y);

// Mean cross-entropy over positions whose target is not PAD. Throws
// EmptyInputError when every target is PAD.
Tensor generation_loss(const Tensor &p_word, std::span<const std::size_t> targets);

// Two-layer projection heads (linear, ReLU, linear) for each modality.
struct ContrastiveHead {
  Linear img1, img2, txt1, txt2;

  ContrastiveHead() = default;
  ContrastiveHead(std::size_t d, std::size_t d_proj, std::uint64_t seed);

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

// Inputs are mean-pooled hidden states, one row per item.
std::pair<Tensor, Tensor> contrastive_project(const Tensor &h_img, const Tensor &h_txt, const ContrastiveHead &head);

// Set of abnormal topics of one report.
using TopicSignature = std::vector<bool>;

enum class LabelMatch { exact, any_overlap };

bool same_label(const TopicSignature &a, const TopicSignature &b, LabelMatch mode);

struct ContrastiveOptions {
  double tau = 0.5;
  double theta = 2.0;
  LabelMatch match = LabelMatch::exact;
};

// Anchor i weights: 1 for the positive pair, theta for other same-label
// items, 1 for different-label items.
Tensor contrastive_weights(std::span<const TopicSignature> labels, double theta, LabelMatch mode);

// sum_i [ log sum_j w_ij exp(s_ij) - s_ii ] with s = cos(z_img_i, z_txt_j) / tau.
Tensor contrastive_loss(const Tensor &z_img, const Tensor &z_txt, std::span<const TopicSignature> labels,
                        const ContrastiveOptions &options);

Tensor total_loss(const Tensor &l_c, const Tensor &l_ce, const Tensor &l_cl, double lambda);

struct LossBundle {
  Tensor l_c, l_ce, l_cl, l_total;
  double lambda = 0.8;
};

}  // namespace mscl
