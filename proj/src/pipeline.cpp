#include "mscl/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "mscl/error.hpp"

namespace mscl {

SynthSpec synth_spec(const RunConfig &config) {
  SynthSpec spec;
  spec.n_topics = config.model.n_topics;
  spec.n_studies = config.synth.n_studies;
  spec.abnormality_rate = config.synth.abnormality_rate;
  spec.image_size = config.model.image_size;
  spec.min_views = config.synth.min_views;
  spec.max_views = config.synth.max_views;
  spec.background_noise = config.synth.noise;
  spec.distractors = config.synth.distractors;
  spec.seed = config.seed;
  return spec;
}

std::unique_ptr<ProposalBackend> make_backend(const RunConfig &config) {
  if (!config.use_segmenter) return nullptr;
  if (config.backend == "proposals-dir") return std::make_unique<ProposalsDirBackend>(config.proposals_dir);
  return std::make_unique<ThresholdBackend>();
}

PreparedData prepare_data(std::vector<Study> studies, const RunConfig &config) {
  load_views(studies);
  DatasetSplit split = split_dataset(std::move(studies), config.seed);
  std::vector<std::string> corpus;
  for (const auto &s : split.train) {
    corpus.push_back(s.report);
    corpus.push_back(s.indication);
  }
  PreparedData out{Vocabulary::build(corpus, config.min_freq), {}, {}, {}};
  const auto backend = make_backend(config);
  ExampleOptions opts;
  opts.max_len = config.model.max_len;
  opts.n_states = config.model.n_states;
  opts.single_view = config.single_view;
  opts.backend = backend.get();
  opts.segmenter = config.segmenter;
  out.train = make_examples(split.train, out.vocab, opts);
  out.val = make_examples(split.val, out.vocab, opts);
  out.test = make_examples(split.test, out.vocab, opts);
  return out;
}

PreparedData prepare_data(const RunConfig &config) {
  return prepare_data(load_dataset(config.manifest, config.model.n_topics, config.model.n_states), config);
}

RunPaths::RunPaths(const std::filesystem::path &out_dir)
    : log(out_dir / "train_log.jsonl"),
      checkpoint(out_dir / "best.ckpt"),
      resume(out_dir / "last.resume"),
      config(out_dir / "config.toml"),
      vocab(out_dir / "vocab.json") {}

namespace {

void write_text(const std::filesystem::path &path, const std::string &text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

// Keeps the first `epochs` lines of an existing log.
void truncate_log(const std::filesystem::path &path, std::size_t epochs) {
  std::string kept;
  if (std::ifstream in{path}) {
    std::string line;
    for (std::size_t i = 0; i < epochs && std::getline(in, line); ++i) kept += line + "\n";
  }
  write_text(path, kept);
}

}  // namespace

RunOutcome run_training(const RunConfig &config, const PreparedData &data, const RunOptions &options) {
  config.validate();
  const RunPaths paths(config.out_dir);
  std::filesystem::create_directories(config.out_dir);

  const bool resuming = options.resume && std::filesystem::exists(paths.resume);
  TrainState state = resuming ? load_resume(paths.resume, data.vocab, config)
                              : init_train_state(config, data.vocab.size());
  truncate_log(paths.log, resuming ? state.epoch : 0);
  write_text(paths.config, config_to_toml(config));
  write_text(paths.vocab, data.vocab.to_json().dump(2) + "\n");

  RunConfig cfg = config;
  if (options.stop_after != 0) cfg.epochs = std::min(cfg.epochs, options.stop_after);

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog &log, const TrainState &) {
    {
      std::ofstream f(paths.log, std::ios::app);
      if (!f) throw IoError("cannot append to " + paths.log.string());
      f << log.to_json().dump() << "\n";
    }
    if (!log.val_bleu4) {
      save_checkpoint(paths.checkpoint, state, data.vocab, config);
    } else if (*log.val_bleu4 > state.best_val_bleu4) {
      state.best_val_bleu4 = *log.val_bleu4;
      save_checkpoint(paths.checkpoint, state, data.vocab, config);
    }
    save_resume(paths.resume, state, data.vocab, config);
    if (options.progress) *options.progress << log.to_json().dump() << std::endl;
    return true;
  };

  RunOutcome out;
  out.logs = train_epochs(state, cfg, data.train, data.val, data.vocab, hooks);
  out.best_val_bleu4 = state.best_val_bleu4;
  out.epochs_done = state.epoch;
  return out;
}

std::span<const Example> select_split(const PreparedData &data, const std::string &name) {
  if (name == "train") return data.train;
  if (name == "val") return data.val;
  if (name == "test") return data.test;
  throw InputError("unknown split '" + name + "' (expected train, val or test)");
}

GenerationResult generate_split(const LoadedCheckpoint &ckpt, const PreparedData &data, const std::string &split,
                                const RunConfig &config) {
  check_compatible(ckpt, data.vocab, config.model);
  return generate_and_score(ckpt.model, select_split(data, split), ckpt.vocab, {config.decode, config.beam_width});
}

}  // namespace mscl
