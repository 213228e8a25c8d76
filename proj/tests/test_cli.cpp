#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

std::string slurp(const fs::path &p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const fs::path &workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "mscl_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Result run(const std::string &args) {
  const auto out = workdir() / "stdout.txt", err = workdir() / "stderr.txt";
  const std::string cmd = "cd '" + workdir().string() + "' && '" + std::string(MSCL_CLI) + "' " + args + " > '" +
                          out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::size_t count_lines(const std::string &s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

void write_small_config() {
  std::ofstream(workdir() / "small.toml") << R"(seed = 5
[model]
d = 16
c = 8
heads = 2
ff_dim = 32
decoder_layers = 1
[train]
epochs = 2
batch_size = 4
d_proj = 8
[paths]
manifest = "data/manifest.jsonl"
out_dir = "run"
)";
}

}  // namespace

TEST_CASE("synth, train, generate, evaluate") {
  write_small_config();
  auto r = run("synth --config small.toml --out data --studies 30");
  REQUIRE(r.code == 0);
  CHECK(count_lines(slurp(workdir() / "data/manifest.jsonl")) == 30);

  r = run("train --config small.toml");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string log = slurp(workdir() / "run/train_log.jsonl");
  CHECK(count_lines(log) == 2);
  const auto first = nlohmann::json::parse(log.substr(0, log.find('\n')));
  for (const char *k : {"epoch", "l_c", "l_ce", "l_cl", "l_total", "val_bleu4"}) CHECK(first.contains(k));
  CHECK(fs::exists(workdir() / "run/best.ckpt"));

  r = run("generate --config small.toml --checkpoint run/best.ckpt --split test --output gen1.jsonl");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  // 30 studies: 21 train, 3 val, 6 test.
  const std::string gen1 = slurp(workdir() / "gen1.jsonl");
  CHECK(count_lines(gen1) == 6);
  CHECK(gen1.find("<unk>") == std::string::npos);
  r = run("generate --config small.toml --checkpoint run/best.ckpt --split test --output gen2.jsonl");
  CHECK(slurp(workdir() / "gen2.jsonl") == gen1);

  r = run("evaluate --generations gen1.jsonl --output metrics.json");
  REQUIRE(r.code == 0);
  const auto metrics = nlohmann::json::parse(slurp(workdir() / "metrics.json"));
  for (const char *k : {"bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "meteor"}) CHECK(metrics.contains(k));

  // A different model width cannot load this checkpoint's weights.
  r = run("generate --config small.toml --checkpoint run/best.ckpt --seed 9");
  CHECK(r.code != 0);
  CHECK(r.err.rfind("error: compatibility: ", 0) == 0);
}

TEST_CASE("ablation flags and resume") {
  write_small_config();
  REQUIRE(run("synth --config small.toml --out data --studies 30").code == 0);
  auto r = run("train --config small.toml --no-cl --no-sam --single-view --out run_ablate --epochs 1");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto cfg = slurp(workdir() / "run_ablate/config.toml");
  CHECK(cfg.find("lambda = 1.0") != std::string::npos);
  CHECK(cfg.find("enabled = false") != std::string::npos);
  CHECK(cfg.find("single_view = true") != std::string::npos);

  REQUIRE(run("train --config small.toml --out run_full --epochs 3").code == 0);
  REQUIRE(run("train --config small.toml --out run_cut --epochs 1").code == 0);
  REQUIRE(run("train --config small.toml --out run_cut --epochs 3 --resume").code == 0);
  CHECK(slurp(workdir() / "run_cut/last.resume") == slurp(workdir() / "run_full/last.resume"));
  CHECK(slurp(workdir() / "run_cut/train_log.jsonl") == slurp(workdir() / "run_full/train_log.jsonl"));
}

TEST_CASE("errors are single machine-parsable lines") {
  write_small_config();
  auto r = run("train --bogus-flag");
  CHECK(r.code != 0);
  CHECK(r.err.rfind("error: usage: ", 0) == 0);
  CHECK(count_lines(r.err) == 1);

  std::ofstream(workdir() / "bad.toml") << "[train]\nlamda = 0.3\n";
  r = run("train --config bad.toml");
  CHECK(r.code != 0);
  CHECK(r.err.rfind("error: config: ", 0) == 0);
  CHECK(count_lines(r.err) == 1);

  std::ofstream(workdir() / "bad2.toml") << "[train]\nlambda = 3\n";
  r = run("train --config bad2.toml");
  CHECK(r.err.rfind("error: config: ", 0) == 0);

  r = run("train --config small.toml --manifest missing.jsonl");
  CHECK(r.code != 0);
  CHECK(r.err.rfind("error: io: ", 0) == 0);

  std::ofstream(workdir() / "broken.jsonl") << "{\"id\":\"a\",\"candidate\":\"x\",\"reference\":\"x\"}\n{oops\n";
  r = run("evaluate --generations broken.jsonl");
  CHECK(r.code != 0);
  CHECK(r.err.rfind("error: schema: ", 0) == 0);
  CHECK(r.err.find("line 2") != std::string::npos);
}

TEST_CASE("segment command") {
  write_small_config();
  REQUIRE(run("synth --config small.toml --out segdata --studies 5").code == 0);
  fs::create_directories(workdir() / "segin");
  std::size_t n = 0;
  for (const auto &e : fs::directory_iterator(workdir() / "segdata/images")) {
    fs::copy_file(e.path(), workdir() / "segin" / e.path().filename(), fs::copy_options::overwrite_existing);
    ++n;
  }
  auto r = run("segment --input segin --output segout");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::size_t pngs = 0, jsons = 0;
  for (const auto &e : fs::directory_iterator(workdir() / "segout")) {
    pngs += e.path().extension() == ".png";
    jsons += e.path().extension() == ".json";
  }
  CHECK(pngs == n);
  CHECK(jsons == n);

  r = run("segment --input segin --output segreplay --proposals-dir segout");
  REQUIRE(r.code == 0);
  for (const auto &e : fs::directory_iterator(workdir() / "segout"))
    if (e.path().extension() == ".png")
      CHECK(slurp(e.path()) == slurp(workdir() / "segreplay" / e.path().filename()));

  std::ofstream(workdir() / "segin" / "zz_broken.png") << "not a png";
  r = run("segment --input segin --output segout2");
  CHECK(r.code != 0);
  CHECK(r.err.find("zz_broken.png") != std::string::npos);
  std::size_t written = 0;
  for (const auto &e : fs::directory_iterator(workdir() / "segout2")) written += e.path().extension() == ".png";
  CHECK(written == n);
}

TEST_CASE("gradcheck command") {
  auto r = run("gradcheck --seed 3");
  CHECK(r.code == 0);
  CHECK(r.out.find("softmax_rows") != std::string::npos);
  CHECK(r.out.find("end_to_end_L_total") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);

  r = run("gradcheck --corrupt layer_norm");
  CHECK(r.code != 0);
  CHECK(r.err.rfind("error: numeric: ", 0) == 0);
  CHECK(r.err.find("layer_norm") != std::string::npos);
}
