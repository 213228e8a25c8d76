#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "mscl/config.hpp"
#include "mscl/data.hpp"
#include "mscl/model.hpp"
#include "mscl/objectives.hpp"
#include "mscl/train.hpp"

namespace mscl {

// Container layout shared by checkpoints and resume files:
//   "MSCL" | u32 LE version | u64 LE header length | JSON header | payloads
// The header lists every tensor as {name, shape, offset, dtype}, offsets
// relative to the first payload byte.
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Inference checkpoint: fp32 weights of the model and contrastive head plus
// the model configuration and vocabulary.
void save_checkpoint(const std::filesystem::path &path, const TrainState &state, const Vocabulary &vocab,
                     const RunConfig &config);

struct LoadedCheckpoint {
  MsclModel model;
  ContrastiveHead head;
  Vocabulary vocab;
  nlohmann::json header;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path &path);

// Throws CompatibilityError when the checkpoint was trained with another
// vocabulary or model configuration.
void check_compatible(const LoadedCheckpoint &ckpt, const Vocabulary &vocab, const ModelConfig &model);

// Exact training state: fp64 weights, AdamW moments, step and epoch.
void save_resume(const std::filesystem::path &path, const TrainState &state, const Vocabulary &vocab,
                 const RunConfig &config);
TrainState load_resume(const std::filesystem::path &path, const Vocabulary &vocab, const RunConfig &config);

}  // namespace mscl
