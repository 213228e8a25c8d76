// Command-line front end: synth | segment | train | generate | evaluate | gradcheck.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mscl/checkpoint.hpp"
#include "mscl/error.hpp"
#include "mscl/gradcheck.hpp"
#include "mscl/metrics.hpp"
#include "mscl/pipeline.hpp"
#include "mscl/tensor.hpp"

namespace fs = std::filesystem;
using namespace mscl;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool single_view = false;
  bool no_cl = false;
  bool no_sam = false;
  std::string manifest;
  std::string out;
  std::optional<std::size_t> epochs;
};

void add_common(CLI::App *cmd, Common &c) {
  cmd->add_option("--config", c.config, "TOML run configuration");
  cmd->add_option("--seed", c.seed, "Seed for data, initialization and shuffling");
  cmd->add_flag("--single-view", c.single_view, "Use only the first view of each study");
  cmd->add_flag("--no-cl", c.no_cl, "Drop the contrastive term (lambda = 1)");
  cmd->add_flag("--no-sam", c.no_sam, "Bypass the segmenter and feed raw images");
  cmd->add_option("--manifest", c.manifest, "Dataset manifest (JSONL)");
}

RunConfig resolve(const Common &c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.single_view) cfg.single_view = true;
  if (c.no_cl) cfg.lambda = 1.0;
  if (c.no_sam) cfg.use_segmenter = false;
  if (!c.manifest.empty()) cfg.manifest = c.manifest;
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.epochs) cfg.epochs = *c.epochs;
  cfg.validate();
  return cfg;
}

void print_error(const std::string &cls, const std::string &msg) {
  std::string line = msg;
  std::replace(line.begin(), line.end(), '\n', ' ');
  std::cerr << "error: " << cls << ": " << line << std::endl;
}

int cmd_synth(const Common &c, const std::string &out, std::optional<std::size_t> n,
              std::optional<std::size_t> distractors) {
  RunConfig cfg = resolve(c);
  SynthSpec spec = synth_spec(cfg);
  if (n) spec.n_studies = *n;
  if (distractors) spec.distractors = *distractors;
  auto studies = synth_corpus(spec);
  const auto manifest = write_dataset(out, studies);
  std::cout << "wrote " << studies.size() << " studies to " << manifest.string() << std::endl;
  return 0;
}

int cmd_segment(const Common &c, const std::string &input, const std::string &output,
                const std::string &proposals_dir) {
  RunConfig cfg = resolve(c);
  if (!proposals_dir.empty()) {
    cfg.backend = "proposals-dir";
    cfg.proposals_dir = proposals_dir;
  }
  cfg.use_segmenter = true;
  const auto backend = make_backend(cfg);
  if (!fs::is_directory(input)) throw IoError("input directory " + input + " does not exist");
  std::vector<fs::path> files;
  for (const auto &e : fs::directory_iterator(input))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  fs::create_directories(output);
  std::size_t ok = 0, failed = 0;
  for (const auto &f : files) {
    const std::string id = f.stem().string();
    try {
      const GrayImage image = read_png(f);
      const auto r = segment_image_detailed(image, *backend, cfg.segmenter, id);
      write_png(fs::path(output) / f.filename(), r.processed);
      write_manifest(fs::path(output) / (id + ".json"),
                     manifest_from_proposals(id, image.width, image.height, r.proposals));
      ++ok;
    } catch (const Error &e) {
      print_error(e.error_class(), f.string() + ": " + e.what());
      ++failed;
    }
  }
  std::cout << "segmented " << ok << " of " << files.size() << " images" << std::endl;
  if (failed) throw IoError(std::to_string(failed) + " of " + std::to_string(files.size()) + " images failed");
  return 0;
}

int cmd_train(const Common &c, bool resume) {
  RunConfig cfg = resolve(c);
  const PreparedData data = prepare_data(cfg);
  std::cout << "train " << data.train.size() << " val " << data.val.size() << " test " << data.test.size()
            << " vocab " << data.vocab.size() << std::endl;
  RunOptions opts;
  opts.resume = resume;
  opts.progress = &std::cout;
  const auto out = run_training(cfg, data, opts);
  const RunPaths paths(cfg.out_dir);
  std::cout << "best val BLEU-4 " << out.best_val_bleu4 << "; checkpoint " << paths.checkpoint.string() << std::endl;
  return 0;
}

int cmd_generate(const Common &c, const std::string &checkpoint, const std::string &split, std::string output) {
  RunConfig cfg = resolve(c);
  const LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  const PreparedData data = prepare_data(cfg);
  const auto result = generate_split(ckpt, data, split, cfg);
  if (output.empty()) output = (cfg.out_dir / ("generations_" + split + ".jsonl")).string();
  write_generations(output, result.records);
  nlohmann::json summary = result.metrics.to_json();
  summary["state_accuracy"] = result.state_accuracy;
  summary["count"] = result.records.size();
  std::cout << summary.dump() << "\n" << "wrote " << output << std::endl;
  return 0;
}

int cmd_evaluate(const std::string &generations, const std::string &output) {
  const auto records = read_generations(generations);
  const auto report = evaluate_corpus(to_eval_pairs(records)).to_json();
  std::cout << report.dump(2) << std::endl;
  if (!output.empty()) {
    std::ofstream f(output);
    if (!f) throw IoError("cannot write " + output);
    f << report.dump(2) << "\n";
  }
  return 0;
}

int cmd_gradcheck(const Common &c, const std::string &corrupt, bool json) {
  GradcheckOptions opts;
  if (c.seed) opts.seed = *c.seed;
  if (!corrupt.empty()) set_gradient_corruption(corrupt);
  const auto report = run_gradcheck(opts);
  clear_gradient_corruption();
  if (json) std::cout << report.to_json().dump(2) << std::endl;
  else std::cout << report.to_text() << "total " << report.seconds << " s" << std::endl;
  if (!report.passed()) {
    std::string names;
    for (const auto &f : report.failures()) names += (names.empty() ? "" : ", ") + f;
    throw NumericError("gradient check failed for " + names);
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"MSCL radiology report generation pipeline"};
  app.require_subcommand(1);

  Common common;
  std::string synth_out, seg_in, seg_out, seg_props, ckpt, split = "test", gen_out, gens, eval_out, corrupt;
  std::optional<std::size_t> synth_n, synth_distractors;
  bool resume = false, json = false;

  auto *synth = app.add_subcommand("synth", "Write a synthetic corpus");
  add_common(synth, common);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--studies", synth_n, "Number of studies");
  synth->add_option("--distractors", synth_distractors, "Speckle distractors per view");

  auto *segment = app.add_subcommand("segment", "Apply ROI preprocessing to a directory of PNGs");
  add_common(segment, common);
  segment->add_option("--input", seg_in, "Input directory")->required();
  segment->add_option("--output", seg_out, "Output directory")->required();
  segment->add_option("--proposals-dir", seg_props, "Replay exported proposal manifests");

  auto *train = app.add_subcommand("train", "Train and write the log, checkpoint and resume file");
  add_common(train, common);
  train->add_option("--out", common.out, "Run directory");
  train->add_option("--epochs", common.epochs, "Number of epochs");
  train->add_flag("--resume", resume, "Continue from the run directory's resume file");

  auto *generate = app.add_subcommand("generate", "Generate reports for a split");
  add_common(generate, common);
  generate->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  generate->add_option("--split", split, "train, val or test");
  generate->add_option("--output", gen_out, "Generations JSONL");
  generate->add_option("--out", common.out, "Run directory for default outputs");

  auto *evaluate = app.add_subcommand("evaluate", "Score a generations file");
  evaluate->add_option("--generations", gens, "Generations JSONL")->required();
  evaluate->add_option("--output", eval_out, "Metric report JSON");

  auto *gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  add_common(gradcheck, common);
  gradcheck->add_option("--corrupt", corrupt, "Scale one op's backward gradient (negative control)");
  gradcheck->add_flag("--json", json, "Print the report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*synth) return cmd_synth(common, synth_out, synth_n, synth_distractors);
    if (*segment) return cmd_segment(common, seg_in, seg_out, seg_props);
    if (*train) return cmd_train(common, resume);
    if (*generate) return cmd_generate(common, ckpt, split, gen_out);
    if (*evaluate) return cmd_evaluate(gens, eval_out);
    if (*gradcheck) return cmd_gradcheck(common, corrupt, json);
  } catch (const Error &e) {
    print_error(e.error_class(), e.what());
    return 1;
  } catch (const fs::filesystem_error &e) {
    print_error("io", e.what());
    return 1;
  } catch (const std::exception &e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
