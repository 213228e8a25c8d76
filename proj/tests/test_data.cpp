#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "mscl/data.hpp"
#include "mscl/error.hpp"
#include "mscl/segmenter.hpp"

using namespace mscl;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string &name) {
  auto d = fs::temp_directory_path() / ("mscl_test_data_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::vector<Study> numbered_studies(std::size_t m) {
  std::vector<Study> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i].id = "s" + std::to_string(i);
  return out;
}

std::vector<std::string> ids_of(const std::vector<Study> &s) {
  std::vector<std::string> out;
  for (const auto &x : s) out.push_back(x.id);
  return out;
}

bool contains(const std::string &hay, const std::string &needle) { return hay.find(needle) != std::string::npos; }

}  // namespace

TEST_CASE("tokenize lowercases and splits punctuation") {
  CHECK(tokenize("No acute disease.") == std::vector<std::string>{"no", "acute", "disease", "."});
  CHECK(tokenize("").empty());
  CHECK(tokenize("  Heart,  lungs;ok ") == std::vector<std::string>{"heart", ",", "lungs", ";", "ok"});
  const std::vector<std::string> norm{"the", "heart", "is", "enlarged", "."};
  CHECK(tokenize(detokenize(norm)) == norm);
  CHECK(detokenize(tokenize("The  Heart is  ENLARGED.")) == "the heart is enlarged .");
}

TEST_CASE("vocabulary thresholds and ordering") {
  const std::vector<std::string> corpus{"a a b"};
  auto v = Vocabulary::build(corpus, 2);
  CHECK(v.size() == 5);
  CHECK(v.token(4) == "a");
  CHECK(v.id("b") == Vocabulary::kUnk);
  CHECK(v.id("a") == 4);

  auto all = Vocabulary::build(corpus, 1);
  CHECK(all.size() == 6);
  CHECK(all.id("b") == 5);

  // Count desc, then token asc; invariant under corpus permutation.
  std::vector<std::string> c1{"x y z", "z y", "z q"};
  std::vector<std::string> c2{"z q", "x y z", "z y"};
  auto v1 = Vocabulary::build(c1, 1), v2 = Vocabulary::build(c2, 1);
  CHECK(v1 == v2);
  CHECK(v1.token(4) == "z");
  CHECK(v1.token(5) == "y");
  CHECK(v1.token(6) == "q");
  CHECK(v1.token(7) == "x");

  CHECK_THROWS_AS(Vocabulary::build(std::vector<std::string>{}, 1), InputError);
  CHECK_THROWS_AS(Vocabulary::build(corpus, 0), ParameterError);
}

TEST_CASE("vocabulary encode, decode and json round trip") {
  auto v = Vocabulary::build(std::vector<std::string>{"the heart is enlarged ."}, 1);
  auto ids = v.encode(tokenize("the heart is small ."));
  CHECK(ids[3] == Vocabulary::kUnk);
  std::vector<std::size_t> with_specials{Vocabulary::kBos, v.id("heart"), Vocabulary::kPad, v.id("is"),
                                         Vocabulary::kEos, v.id("the")};
  CHECK(v.decode(with_specials) == std::vector<std::string>{"heart", "is"});
  CHECK(Vocabulary::from_json(v.to_json()) == v);

  nlohmann::json bad = v.to_json();
  bad[1] = "<nope>";
  CHECK_THROWS_AS(Vocabulary::from_json(bad), SchemaError);
  nlohmann::json dup = v.to_json();
  dup.push_back("heart");
  CHECK_THROWS_AS(Vocabulary::from_json(dup), SchemaError);
}

TEST_CASE("split sizes follow 7:1:2") {
  auto s = split_dataset(numbered_studies(10), 3);
  CHECK(s.train.size() == 7);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 2);

  for (std::size_t m : {11, 19, 37, 200}) {
    auto p = split_dataset(numbered_studies(m), 5);
    CHECK(p.train.size() == m * 7 / 10);
    CHECK(p.val.size() == m / 10);
    CHECK(p.train.size() + p.val.size() + p.test.size() == m);
    std::set<std::string> seen;
    for (const auto *part : {&p.train, &p.val, &p.test})
      for (const auto &st : *part) CHECK(seen.insert(st.id).second);
    CHECK(seen.size() == m);
  }
  CHECK_THROWS_AS(split_dataset(numbered_studies(9), 1), InputError);
}

TEST_CASE("split is stable per seed") {
  auto a = split_dataset(numbered_studies(50), 42);
  auto b = split_dataset(numbered_studies(50), 42);
  auto c = split_dataset(numbered_studies(50), 43);
  CHECK(ids_of(a.train) == ids_of(b.train));
  CHECK(ids_of(a.test) == ids_of(b.test));
  CHECK(ids_of(a.train) != ids_of(c.train));
}

TEST_CASE("synthetic corpus degenerate rates") {
  SynthSpec spec;
  spec.n_studies = 30;
  spec.abnormality_rate = 0.0;
  const auto templates = default_topic_templates();
  for (const auto &st : synth_corpus(spec)) {
    for (auto s : st.topic_states) CHECK(s == TopicState::negative);
    for (const auto &t : templates) {
      CHECK(contains(st.report, t.normal[0]));
      CHECK_FALSE(contains(st.report, t.abnormal[0]));
    }
  }
  spec.abnormality_rate = 1.0;
  for (const auto &st : synth_corpus(spec))
    for (auto s : st.topic_states) CHECK(s == TopicState::positive);
}

TEST_CASE("synthetic ground truth is consistent with reports") {
  SynthSpec spec;
  spec.n_studies = 300;
  spec.distractors = 10;
  const auto templates = default_topic_templates();
  const auto corpus = synth_corpus(spec);
  std::size_t positives = 0;
  for (const auto &st : corpus) {
    REQUIRE(st.topic_states.size() == spec.n_topics);
    CHECK(st.views.size() >= 1);
    CHECK(st.views.size() <= 2);
    for (std::size_t t = 0; t < spec.n_topics; ++t) {
      const bool abnormal_text = contains(st.report, templates[t].abnormal[0]);
      CHECK(abnormal_text == (st.topic_states[t] == TopicState::positive));
      positives += st.topic_states[t] == TopicState::positive;
    }
    for (const auto &v : st.views) CHECK_NOTHROW(v.validate());
  }
  const double rate = static_cast<double>(positives) / (300.0 * 6.0);
  CHECK(rate == doctest::Approx(0.3).epsilon(0.15));
}

TEST_CASE("synthetic blobs sit at topic locations") {
  SynthSpec spec;
  spec.n_studies = 40;
  spec.background_noise = 0.0;
  // Site centers for the default 64x64 canvas.
  const std::size_t cx[6] = {20, 44, 20, 44, 20, 44};
  const std::size_t cy[6] = {12, 12, 28, 28, 44, 44};
  for (const auto &st : synth_corpus(spec))
    for (const auto &v : st.views)
      for (std::size_t t = 0; t < 6; ++t) {
        const bool bright = v.at(cx[t], cy[t]) > 0.5;
        CHECK(bright == (st.topic_states[t] == TopicState::positive));
      }
}

TEST_CASE("synthetic corpus is determined by the seed") {
  SynthSpec spec;
  spec.n_studies = 20;
  spec.distractors = 5;
  auto a = synth_corpus(spec), b = synth_corpus(spec);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].report == b[i].report);
    CHECK(a[i].indication == b[i].indication);
    CHECK(a[i].topic_states == b[i].topic_states);
    CHECK(a[i].views == b[i].views);
  }
  spec.seed = 2;
  auto c = synth_corpus(spec);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= !(a[i].views == c[i].views);
  CHECK(differs);
}

TEST_CASE("synth spec validation") {
  SynthSpec spec;
  spec.abnormality_rate = 1.5;
  CHECK_THROWS_AS(spec.validate(), ParameterError);
  spec = SynthSpec{};
  spec.topics = default_topic_templates();
  spec.topics[2].abnormal.clear();
  CHECK_THROWS_AS(spec.validate(), ParameterError);
  spec = SynthSpec{};
  spec.topics = default_topic_templates();
  spec.topics.pop_back();
  CHECK_THROWS_AS(spec.validate(), ParameterError);
}

TEST_CASE("vocabulary from references has no UNK") {
  SynthSpec spec;
  spec.n_studies = 50;
  auto corpus = synth_corpus(spec);
  std::vector<std::string> reports;
  for (const auto &st : corpus) reports.push_back(st.report);
  auto vocab = Vocabulary::build(reports, 1);
  for (const auto &r : reports) {
    auto ids = vocab.encode(tokenize(r));
    CHECK(std::count(ids.begin(), ids.end(), Vocabulary::kUnk) == 0);
    CHECK(detokenize(vocab.decode(ids)) == detokenize(tokenize(r)));
  }
}

TEST_CASE("dataset manifest write and load") {
  auto dir = scratch_dir("roundtrip");
  SynthSpec spec;
  spec.n_studies = 3;
  auto corpus = synth_corpus(spec);
  auto manifest = write_dataset(dir, corpus);
  auto loaded = load_dataset(manifest, 6);
  REQUIRE(loaded.size() == 3);
  load_views(loaded);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].id == corpus[i].id);
    CHECK(loaded[i].report == corpus[i].report);
    CHECK(loaded[i].indication == corpus[i].indication);
    CHECK(loaded[i].topic_states == corpus[i].topic_states);
    CHECK(loaded[i].views == corpus[i].views);
  }
}

TEST_CASE("dataset manifest errors") {
  auto dir = scratch_dir("errors");
  SynthSpec spec;
  spec.n_studies = 2;
  auto corpus = synth_corpus(spec);
  auto manifest = write_dataset(dir, corpus);

  SUBCASE("missing image names the path") {
    fs::remove(corpus[1].image_paths[0]);
    try {
      load_dataset(manifest);
      FAIL("expected IoError");
    } catch (const IoError &e) {
      CHECK(contains(e.what(), corpus[1].image_paths[0].string()));
    }
  }
  SUBCASE("bad state names the line") {
    std::ifstream in(manifest);
    std::string l1, l2;
    std::getline(in, l1);
    std::getline(in, l2);
    in.close();
    auto pos = l2.find("\"negative\"");
    if (pos == std::string::npos) pos = l2.find("\"positive\"");
    REQUIRE(pos != std::string::npos);
    l2.replace(pos, 10, "\"probable\"");
    std::ofstream(manifest) << l1 << '\n' << l2 << '\n';
    try {
      load_dataset(manifest);
      FAIL("expected SchemaError");
    } catch (const SchemaError &e) {
      CHECK(contains(e.what(), "line 2"));
      CHECK(contains(e.what(), "probable"));
    }
  }
  SUBCASE("state outside k") {
    std::ofstream(manifest) << R"({"id":"a","images":["images/)" << corpus[0].id
                            << R"(_0.png"],"indication":"","report":"","topic_states":["unmentioned"]})" << '\n';
    CHECK_NOTHROW(load_dataset(manifest, 1, 4));
    CHECK_THROWS_AS(load_dataset(manifest, 1, 3), SchemaError);
    CHECK_THROWS_AS(load_dataset(manifest, 2, 4), SchemaError);
  }
  SUBCASE("missing field") {
    std::ofstream(manifest) << R"({"id":"a","indication":"","report":"","topic_states":[]})" << '\n';
    CHECK_THROWS_AS(load_dataset(manifest), SchemaError);
  }
  SUBCASE("missing manifest") { CHECK_THROWS_AS(load_dataset(dir / "nope.jsonl"), IoError); }
}

TEST_CASE("builtin segmenter isolates synthetic findings") {
  SynthSpec spec;
  spec.n_studies = 60;
  spec.distractors = 40;
  const std::size_t cx[6] = {20, 44, 20, 44, 20, 44};
  const std::size_t cy[6] = {12, 12, 28, 28, 44, 44};
  ThresholdBackend backend;
  SegmenterConfig cfg;
  std::size_t blobs = 0, found = 0;
  double kept_outside = 0.0, total_outside = 0.0;
  for (const auto &st : synth_corpus(spec)) {
    for (const auto &v : st.views) {
      auto res = segment_image_detailed(v, backend, cfg);
      BinaryMask roi = BinaryMask::empty(v.width, v.height);
      for (const auto &k : res.kept)
        for (std::size_t i = 0; i < roi.bits.size(); ++i) roi.bits[i] |= k.mask.bits[i];
      for (std::size_t t = 0; t < 6; ++t) {
        if (st.topic_states[t] != TopicState::positive) continue;
        ++blobs;
        found += roi.bits[cy[t] * v.width + cx[t]];
      }
      for (std::size_t i = 0; i < roi.bits.size(); ++i) {
        if (v.pixels[i] < 0.45) continue;
        bool near_blob = false;
        const std::size_t x = i % v.width, y = i / v.width;
        for (std::size_t t = 0; t < 6; ++t) {
          const double dx = double(x) - double(cx[t]), dy = double(y) - double(cy[t]);
          near_blob |= dx * dx + dy * dy <= 49.0;
        }
        if (near_blob) continue;
        total_outside += 1.0;
        kept_outside += roi.bits[i];
      }
    }
  }
  MESSAGE("blobs found " << found << "/" << blobs << ", bright distractor pixels kept " << kept_outside << "/"
                         << total_outside);
  CHECK(found == blobs);
  CHECK(kept_outside <= 0.1 * total_outside);
}
