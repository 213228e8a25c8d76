#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mscl/config.hpp"
#include "mscl/data.hpp"
#include "mscl/metrics.hpp"
#include "mscl/model.hpp"
#include "mscl/objectives.hpp"
#include "mscl/optim.hpp"
#include "mscl/segmenter.hpp"

namespace mscl {

// A study in model-ready form.
struct Example {
  std::string id;
  std::vector<GrayImage> views;         // preprocessed
  std::vector<std::size_t> indication;  // token ids
  std::vector<std::size_t> report;      // token ids, no BOS/EOS
  std::vector<std::size_t> states;      // per-topic state index
  TopicSignature signature;             // abnormal topics
  std::string reference;                // normalized report text
};

struct ExampleOptions {
  std::size_t max_len = 64;
  std::size_t n_states = kNumTopicStates;
  bool single_view = false;
  // Null skips ROI preprocessing and feeds the raw views.
  const ProposalBackend *backend = nullptr;
  SegmenterConfig segmenter;
};

// Views must be decoded. Reports are truncated so that report + EOS fits in
// max_len.
std::vector<Example> make_examples(std::span<const Study> studies, const Vocabulary &vocab,
                                   const ExampleOptions &options);

struct LossOptions {
  double lambda = 0.8;
  ContrastiveOptions contrastive;
};

// Full objective on one minibatch. Must run under a TapeScope for gradients.
LossBundle forward_losses(const MsclModel &model, const ContrastiveHead &head, std::span<const Example *const> batch,
                          const LossOptions &options);

// Throws NumericError naming the first non-finite loss term.
void check_finite(const LossBundle &losses);

struct EpochLog {
  std::size_t epoch = 0;
  double l_c = 0.0, l_ce = 0.0, l_cl = 0.0, l_total = 0.0;
  std::optional<double> val_bleu4;
  nlohmann::json to_json() const;
};

struct TrainState {
  MsclModel model;
  ContrastiveHead head;
  AdamWState optimizer;
  std::size_t epoch = 0;  // completed epochs
  double best_val_bleu4 = -1.0;
};

TrainState init_train_state(const RunConfig &config, std::size_t vocab_size);

// All trainable tensors in checkpoint order: model, then head.
std::vector<std::pair<std::string, Tensor>> trainable_parameters(const TrainState &state);

struct TrainHooks {
  // Called after every optimizer step with the minibatch losses.
  std::function<void(std::size_t step, const LossBundle &)> on_step;
  // Called at the end of every epoch; return false to stop.
  std::function<bool(const EpochLog &, const TrainState &)> on_epoch;
};

// Runs epochs (state.epoch, config.epochs]. Each epoch's order depends only
// on (seed, epoch) so an interrupted run resumes exactly.
std::vector<EpochLog> train_epochs(TrainState &state, const RunConfig &config, std::span<const Example> train,
                                   std::span<const Example> val, const Vocabulary &vocab,
                                   const TrainHooks &hooks = {});

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

// Generates for every example and scores against its reference.
struct GenerationResult {
  std::vector<GenerationRecord> records;
  MetricReport metrics;
  double state_accuracy = 0.0;
};

GenerationResult generate_and_score(const MsclModel &model, std::span<const Example> examples,
                                    const Vocabulary &vocab, const DecodeOptions &options = {});

}  // namespace mscl
