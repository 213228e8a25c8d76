#pragma once

#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "mscl/checkpoint.hpp"
#include "mscl/config.hpp"
#include "mscl/data.hpp"
#include "mscl/segmenter.hpp"
#include "mscl/train.hpp"

namespace mscl {

// Synthetic corpus parameters implied by a run configuration.
SynthSpec synth_spec(const RunConfig &config);

// Backend selected by the config, or null when the segmenter is disabled.
std::unique_ptr<ProposalBackend> make_backend(const RunConfig &config);

struct PreparedData {
  Vocabulary vocab;
  std::vector<Example> train, val, test;
};

// Loads the manifest, splits 7:1:2 with the run seed, builds the vocabulary
// from the training split and preprocesses every view.
PreparedData prepare_data(const RunConfig &config);

// Same, from studies already in memory (views decoded or loadable).
PreparedData prepare_data(std::vector<Study> studies, const RunConfig &config);

// Files written under config.out_dir by run_training.
struct RunPaths {
  std::filesystem::path log, checkpoint, resume, config, vocab;
  explicit RunPaths(const std::filesystem::path &out_dir);
};

struct RunOptions {
  // Continue from out_dir/last.resume when it exists.
  bool resume = false;
  // Stop after this epoch (0 = run to config.epochs); used to simulate an
  // interruption.
  std::size_t stop_after = 0;
  std::ostream *progress = nullptr;
};

struct RunOutcome {
  std::vector<EpochLog> logs;  // epochs run in this call
  double best_val_bleu4 = -1.0;
  std::size_t epochs_done = 0;
};

// Trains, appending one JSON line per epoch to the log, writing the best
// checkpoint by validation BLEU-4 (the latest one when validation is off)
// and an exact resume file after every epoch.
RunOutcome run_training(const RunConfig &config, const PreparedData &data, const RunOptions &options = {});

// Named split of prepared data: "train", "val" or "test".
std::span<const Example> select_split(const PreparedData &data, const std::string &name);

// Decodes every example with a loaded checkpoint after checking that it
// matches the data's vocabulary and the configured model.
GenerationResult generate_split(const LoadedCheckpoint &ckpt, const PreparedData &data, const std::string &split,
                                const RunConfig &config);

}  // namespace mscl
