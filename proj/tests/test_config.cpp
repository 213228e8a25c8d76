#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mscl/config.hpp"
#include "mscl/error.hpp"

using namespace mscl;

TEST_CASE("defaults parse from an empty document") {
  RunConfig c = parse_config("");
  CHECK(c == RunConfig{});
  CHECK(c.lambda == 0.8);
  CHECK(c.theta == 2.0);
  CHECK(c.model.d == 256);
  CHECK(c.lr == 3e-4);
}

TEST_CASE("toml round trip is the identity") {
  RunConfig c;
  c.seed = 42;
  c.model.d = 64;
  c.model.heads = 2;
  c.model.text_positions = false;
  c.lambda = 0.5;
  c.tau = 0.07;
  c.label_match = LabelMatch::any_overlap;
  c.decode = DecodeStrategy::beam;
  c.beam_width = 3;
  c.backend = "proposals-dir";
  c.proposals_dir = "props";
  c.segmenter.conf_threshold = 0.25;
  c.synth.distractors = 4;
  c.out_dir = "runs/x";
  const std::string text = config_to_toml(c);
  RunConfig back = parse_config(text);
  CHECK(back == c);
  CHECK(config_to_toml(back) == text);
  CHECK(parse_config(config_to_toml(RunConfig{})) == RunConfig{});
}

TEST_CASE("overrides by section") {
  RunConfig c = parse_config(R"(
seed = 7
[train]
lambda = 1
epochs = 3
[decode]
strategy = "beam"
beam_width = 2
)");
  CHECK(c.seed == 7);
  CHECK(c.lambda == 1.0);
  CHECK(c.epochs == 3);
  CHECK(c.decode == DecodeStrategy::beam);
  CHECK(c.beam_width == 2);
}

TEST_CASE("unknown keys and bad values are config errors") {
  CHECK_THROWS_AS(parse_config("sed = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nlamda = 0.5"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nonsense]\nx = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nlambda = 1.5"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\ntau = 0"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\ntheta = -1"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nlambda = \"high\""), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nbatch_size = -2"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\nd = 30\nheads = 4"), ConfigError);
  CHECK_THROWS_AS(parse_config("[decode]\nbeam_width = 9"), ConfigError);
  CHECK_THROWS_AS(parse_config("[decode]\nstrategy = \"sample\""), ConfigError);
  CHECK_THROWS_AS(parse_config("[segmenter]\nbackend = \"sam\""), ConfigError);
  CHECK_THROWS_AS(parse_config("[segmenter]\nbackend = \"proposals-dir\""), ConfigError);
  CHECK_THROWS_AS(parse_config("[train\nlambda = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("train = 3"), ConfigError);
}

TEST_CASE("load_config reads files") {
  auto path = std::filesystem::temp_directory_path() / "mscl_test_config.toml";
  std::ofstream(path) << "seed = 3\n";
  CHECK(load_config(path).seed == 3);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path), IoError);
}
